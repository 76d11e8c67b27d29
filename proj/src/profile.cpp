#include "inferlab/profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "inferlab/common.hpp"
#include "inferlab/kernels.hpp"

namespace inferlab::profile {

namespace {

interp::RunOptions untimed_f32() {
  interp::RunOptions opts;
  opts.collect_timing = false;
  return opts;
}

interp::RunOptions untimed_quant(const quant::QuantPlan& plan) {
  interp::RunOptions opts;
  opts.backend = interp::Backend::quantized;
  opts.plan = &plan;
  opts.collect_timing = false;
  return opts;
}

bool quantizable(ir::Op op) { return op == ir::Op::FC || op == ir::Op::Conv; }

// The graph with every f32 node output declared as an output, so one run
// exposes all intermediate activations.
ir::Graph with_all_activations(const ir::Graph& g, const ir::Graph& meta) {
  ir::Graph g2 = g;
  for (const auto& node : g.nodes)
    for (const auto& out : node.outputs) {
      if (meta.tensors.at(out).dtype != DType::f32) continue;
      if (std::find(g2.outputs.begin(), g2.outputs.end(), out) == g2.outputs.end())
        g2.outputs.push_back(out);
    }
  return g2;
}

LayerError make_error(std::string name, double err2, double ref2) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  LayerError e;
  e.layer = std::move(name);
  if (err2 == 0.0) {
    e.l2_rel = 0.0;
    e.sqnr_db = inf;
  } else if (ref2 == 0.0) {
    e.l2_rel = inf;
    e.sqnr_db = -inf;
  } else {
    e.l2_rel = std::sqrt(err2 / ref2);
    e.sqnr_db = 10.0 * std::log10(ref2 / err2);
  }
  return e;
}

void accumulate(const Tensor& got, const Tensor& ref, double& err2, double& ref2) {
  if (got.dtype() != DType::f32 || ref.dtype() != DType::f32) return;
  const auto gv = got.as<float>();
  const auto rv = ref.as<float>();
  for (std::size_t i = 0; i < rv.size(); ++i) {
    const double d = static_cast<double>(gv[i]) - static_cast<double>(rv[i]);
    err2 += d * d;
    ref2 += static_cast<double>(rv[i]) * static_cast<double>(rv[i]);
  }
}

}  // namespace

CalibrationStats calibrate(const ir::Graph& g, std::span<const Batch> batches, int bins) {
  if (batches.empty()) throw ValidationError("calibrate: calibration batch is empty");
  if (bins < 1) throw ValidationError("calibrate: histogram needs at least one bin");

  const ir::Graph meta = ir::infer_shapes(g);
  const ir::Graph g2 = with_all_activations(g, meta);

  // Values concatenated in batch order: deterministic statistics, and the
  // histogram edges can be fixed from the exact global range.
  std::map<std::string, std::vector<float>> values;
  auto absorb = [&](const std::string& name, const Tensor& t) {
    if (t.dtype() != DType::f32) return;
    const auto tv = t.as<float>();
    auto& dst = values[name];
    dst.insert(dst.end(), tv.begin(), tv.end());
  };

  const interp::RunOptions opts = untimed_f32();
  for (const auto& batch : batches) {
    for (const auto& [name, t] : batch) absorb(name, t);
    const interp::RunResult res = interp::run(g2, batch, opts);
    for (const auto& [name, t] : res.outputs) absorb(name, t);
  }

  CalibrationStats stats;
  stats.batches = static_cast<std::int64_t>(batches.size());
  for (auto& [name, vals] : values) {
    if (vals.empty()) continue;
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    stats.ranges[name] = {static_cast<double>(*lo), static_cast<double>(*hi)};
    stats.histograms.emplace(name, quant::Histogram::collect(vals, bins));
  }
  return stats;
}

quant::QuantPlan propose_plan(const ir::Graph& g, const CalibrationStats& stats,
                              const ProposeOptions& opts) {
  using Kind = quant::QGranularity::Kind;
  const auto& gran = opts.granularity;
  const bool kind_ok = gran.kind == Kind::per_tensor || gran.kind == Kind::per_row ||
                       (gran.kind == Kind::per_channel && gran.axis == 0);
  if (!kind_ok)
    throw ValidationError("propose_plan: weights quantize per tensor or along output channels");
  if (!opts.symmetric && gran.kind != Kind::per_tensor)
    throw ValidationError(
        "propose_plan: sliced granularities need symmetric weights (uniform zero point)");

  const quant::RangeMap narrowed = quant::net_aware_narrow(g, stats.ranges);

  quant::QuantPlan plan;
  for (const auto& node : g.nodes) {
    if (!quantizable(node.op)) continue;
    if (node.inputs.size() < 2)
      throw ValidationError("propose_plan: node '" + node.name + "' has no weight input");

    const auto range = narrowed.find(node.inputs[0]);
    if (range == narrowed.end())
      throw ValidationError("propose_plan: calibration does not cover tensor '" +
                            node.inputs[0] + "'");

    const auto wit = g.weight_data.find(node.inputs[1]);
    if (wit == g.weight_data.end())
      throw ValidationError("propose_plan: weight data missing for '" + node.inputs[1] + "'");
    const Tensor wf32 = wit->second.dtype() == DType::f16
                            ? kernels::tensor_from_fp16(wit->second)
                            : wit->second;

    quant::LayerPlan lp;
    lp.name = node.name;
    lp.quantize = true;
    const quant::QParams act = quant::choose_qparams_minmax(range->second.first,
                                                            range->second.second,
                                                            DType::u8, false);
    lp.act_scale = act.scale;
    lp.act_zero_point = act.zero_point;

    const bool split = opts.split_outliers && node.op == ir::Op::FC;
    if (split) {
      const Tensor& wt = wf32;
      const auto wv = wt.as<float>();
      const quant::Histogram h = quant::Histogram::collect(wv);
      lp.granularity = quant::QGranularity::per_tensor();
      lp.symmetric = true;
      lp.params = {quant::choose_qparams_l2(h, DType::i8, true)};
      lp.split_outliers = true;
    } else {
      lp.granularity = gran;
      lp.symmetric = opts.symmetric;
      lp.params = quant::choose_qparams_tensor(wf32, gran, DType::i8, opts.symmetric);
    }
    plan.layers.push_back(std::move(lp));
  }
  return plan;
}

ErrorReport profile_quant_error(const ir::Graph& g, std::span<const Batch> calib,
                                const quant::QuantPlan& plan) {
  if (calib.empty()) throw ValidationError("profile_quant_error: calibration batch is empty");

  std::map<std::string, const ir::Node*> nodes_by_name;
  for (const auto& node : g.nodes) nodes_by_name[node.name] = &node;

  ir::Graph g2 = g;
  for (const auto& layer : plan.layers) {
    const auto it = nodes_by_name.find(layer.name);
    if (it == nodes_by_name.end())
      throw ValidationError("profile_quant_error: plan names unknown node '" + layer.name +
                            "'");
    const std::string& out = it->second->outputs[0];
    if (std::find(g2.outputs.begin(), g2.outputs.end(), out) == g2.outputs.end())
      g2.outputs.push_back(out);
  }

  std::vector<std::map<std::string, Tensor>> refs;
  refs.reserve(calib.size());
  const interp::RunOptions f32_opts = untimed_f32();
  for (const auto& batch : calib) refs.push_back(interp::run(g2, batch, f32_opts).outputs);

  ErrorReport report;
  for (const auto& layer : plan.layers) {
    quant::QuantPlan solo;
    solo.layers.push_back(layer);
    solo.layers[0].quantize = true;  // isolate this layer's contribution
    const std::string& out = nodes_by_name.at(layer.name)->outputs[0];

    double err2 = 0.0, ref2 = 0.0;
    const interp::RunOptions q_opts = untimed_quant(solo);
    for (std::size_t b = 0; b < calib.size(); ++b) {
      const interp::RunResult res = interp::run(g2, calib[b], q_opts);
      accumulate(res.outputs.at(out), refs[b].at(out), err2, ref2);
    }
    report.layers.push_back(make_error(layer.name, err2, ref2));
  }

  double err2 = 0.0, ref2 = 0.0;
  const interp::RunOptions full_opts = untimed_quant(plan);
  for (std::size_t b = 0; b < calib.size(); ++b) {
    const interp::RunResult res = interp::run(g2, calib[b], full_opts);
    for (const auto& out : g.outputs)
      accumulate(res.outputs.at(out), refs[b].at(out), err2, ref2);
  }
  report.end_to_end = make_error("end_to_end", err2, ref2);
  return report;
}

quant::QuantPlan selective_plan(const quant::QuantPlan& plan, const ErrorReport& report,
                                double threshold) {
  quant::QuantPlan out = plan;
  for (const auto& err : report.layers) {
    if (!(err.l2_rel > threshold)) continue;
    for (auto& layer : out.layers)
      if (layer.name == err.layer) layer.quantize = false;
  }
  return out;
}

std::string error_report_csv(const ErrorReport& report) {
  std::ostringstream out;
  out << "layer,l2_rel,sqnr_db\n";
  auto row = [&](const LayerError& e) {
    out << e.layer << ',' << format_double(e.l2_rel) << ',' << format_double(e.sqnr_db)
        << '\n';
  };
  for (const auto& e : report.layers) row(e);
  row(report.end_to_end);
  return out.str();
}

}  // namespace inferlab::profile
