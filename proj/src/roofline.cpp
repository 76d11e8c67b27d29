#include "inferlab/roofline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace inferlab::roofline {

namespace {

void validate_cfg(const AcceleratorConfig& cfg, const std::string& origin) {
  if (!(cfg.peak_flops > 0) || !(cfg.dram_bw > 0) || !(cfg.onchip_bw > 0))
    throw ValidationError(origin + ": peak_flops, dram_bw and onchip_bw must be positive");
  if (cfg.onchip_capacity < 0)
    throw ValidationError(origin + ": onchip_capacity must be non-negative");
}

}  // namespace

AcceleratorConfig accel_from_json_text(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    AcceleratorConfig cfg;
    cfg.peak_flops = j.at("peak_flops").get<double>();
    cfg.dram_bw = j.at("dram_bw").get<double>();
    cfg.onchip_capacity = j.at("onchip_capacity").get<double>();
    cfg.onchip_bw = j.at("onchip_bw").get<double>();
    validate_cfg(cfg, origin);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

std::string accel_to_json_text(const AcceleratorConfig& cfg) {
  nlohmann::ordered_json j;
  j["peak_flops"] = cfg.peak_flops;
  j["dram_bw"] = cfg.dram_bw;
  j["onchip_capacity"] = cfg.onchip_capacity;
  j["onchip_bw"] = cfg.onchip_bw;
  return j.dump(2) + "\n";
}

AcceleratorConfig load_accel(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open accelerator config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return accel_from_json_text(ss.str(), path);
}

std::int64_t tensor_read_bytes(const ir::Node& node, const ir::Graph& g,
                               const std::string& tensor) {
  const auto& spec = g.tensor(tensor);
  if (node.op == ir::Op::SparseLengthsSum && !node.inputs.empty() && node.inputs[0] == tensor) {
    const auto& indices = g.tensor(node.inputs.at(1));
    std::int64_t lookups = 1;
    for (auto d : indices.dims) lookups *= d;
    return lookups * spec.dims.at(1) * static_cast<std::int64_t>(dtype_size(spec.dtype));
  }
  return static_cast<std::int64_t>(spec.nbytes());
}

namespace {

struct Liveness {
  // Topo position of first/last consuming node per tensor; -1 when unused.
  std::map<std::string, int> first_use;
  std::map<std::string, int> last_use;
};

Liveness compute_liveness(const ir::Graph& g, const std::vector<int>& topo) {
  Liveness lv;
  for (std::size_t pos = 0; pos < topo.size(); ++pos) {
    for (const auto& in : g.nodes[topo[pos]].inputs) {
      if (!lv.first_use.count(in)) lv.first_use[in] = static_cast<int>(pos);
      lv.last_use[in] = static_cast<int>(pos);
    }
  }
  return lv;
}

}  // namespace

ResidencyPlan allocate_onchip(const ir::Graph& g, const std::vector<cost::OpCost>&,
                              const AcceleratorConfig& cfg) {
  ResidencyPlan plan;
  for (const auto& [name, spec] : g.tensors) plan.placement[name] = Placement::offchip;
  if (cfg.onchip_capacity <= 0) return plan;

  const auto topo = g.topo_order();
  const Liveness lv = compute_liveness(g, topo);

  // Weights first: priority is DRAM traffic saved per byte of capacity spent.
  // Ordinary weights save their full size per consumer (ratio ≥ 1); embedding
  // tables save only the touched rows, so huge cold tables sort last.
  struct Cand {
    double priority;
    int first_use;
    std::string name;
    std::int64_t bytes;
  };
  std::vector<Cand> cands;
  for (const auto& w : g.weights) {
    const auto& spec = g.tensor(w);
    const auto bytes = static_cast<std::int64_t>(spec.nbytes());
    if (bytes == 0) continue;
    std::int64_t saved = 0;
    for (std::size_t pos = 0; pos < topo.size(); ++pos) {
      const auto& node = g.nodes[topo[pos]];
      for (const auto& in : node.inputs)
        if (in == w) saved += tensor_read_bytes(node, g, w);
    }
    auto fu = lv.first_use.count(w) ? lv.first_use.at(w) : std::numeric_limits<int>::max();
    cands.push_back({static_cast<double>(saved) / static_cast<double>(bytes), fu, w, bytes});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    if (a.first_use != b.first_use) return a.first_use < b.first_use;
    return a.name < b.name;
  });
  // Prefix-stop greedy: the pinned set at a smaller capacity is always a
  // prefix of the pinned set at a larger one, which keeps sweeps monotone.
  for (const auto& c : cands) {
    if (static_cast<double>(plan.pinned_bytes + c.bytes) > cfg.onchip_capacity) break;
    plan.placement[c.name] = Placement::onchip_pinned;
    plan.pinned_bytes += c.bytes;
  }

  // Activations: transient residency under the leftover capacity, placed at
  // production time, freed after the last consumer. Graph inputs count as
  // produced before the first node; graph outputs stay live until the end.
  const double remaining = cfg.onchip_capacity - static_cast<double>(plan.pinned_bytes);
  std::int64_t live = 0;
  std::int64_t peak_live = 0;
  std::map<int, std::vector<std::string>> free_at;

  auto place = [&](const std::string& name, int produced_at) {
    if (g.is_weight(name)) return;
    const auto& spec = g.tensor(name);
    const auto bytes = static_cast<std::int64_t>(spec.nbytes());
    if (static_cast<double>(live + bytes) > remaining) return;
    const bool is_output = g.is_output(name);
    // A graph input nothing consumes would occupy space for no reads.
    if (!is_output && !lv.last_use.count(name) && produced_at < 0) return;
    plan.placement[name] = Placement::onchip_transient;
    live += bytes;
    peak_live = std::max(peak_live, live);
    if (!is_output) {
      const int freed = lv.last_use.count(name) ? lv.last_use.at(name) : produced_at;
      free_at[freed].push_back(name);
    }
  };

  for (const auto& in : g.inputs) place(in, -1);
  for (std::size_t pos = 0; pos < topo.size(); ++pos) {
    for (const auto& out : g.nodes[topo[pos]].outputs) place(out, static_cast<int>(pos));
    for (const auto& dead : free_at[static_cast<int>(pos)])
      live -= static_cast<std::int64_t>(g.tensor(dead).nbytes());
  }

  plan.peak_onchip_bytes = plan.pinned_bytes + peak_live;
  return plan;
}

LayerTiming layer_time(const ir::Node& node, const cost::OpCost& c, const ir::Graph& g,
                       const ResidencyPlan& plan, const AcceleratorConfig& cfg,
                       std::set<std::string>& charged_onchip) {
  LayerTiming t;
  t.name = node.name;
  t.compute_s = static_cast<double>(c.flops) / cfg.peak_flops;

  std::int64_t off_bytes = 0;
  std::int64_t on_bytes = 0;
  for (const auto& in : node.inputs) {
    const auto bytes = tensor_read_bytes(node, g, in);
    if (plan.at(in) == Placement::offchip) {
      off_bytes += bytes;  // charged per consumer: no cache modeled
    } else if (charged_onchip.insert(in).second) {
      on_bytes += bytes;  // on-chip residents are read once per run
    }
  }
  for (const auto& out : node.outputs) {
    const auto bytes = static_cast<std::int64_t>(g.tensor(out).nbytes());
    if (plan.at(out) == Placement::offchip)
      off_bytes += bytes;
    else
      on_bytes += bytes;
  }

  t.offchip_s = static_cast<double>(off_bytes) / cfg.dram_bw;
  t.onchip_s = std::isinf(cfg.onchip_bw) ? 0.0 : static_cast<double>(on_bytes) / cfg.onchip_bw;
  if (t.compute_s >= t.offchip_s && t.compute_s >= t.onchip_s)
    t.bound = Bound::compute;
  else if (t.offchip_s >= t.onchip_s)
    t.bound = Bound::dram;
  else
    t.bound = Bound::onchip;
  return t;
}

ModelPerf simulate(const ir::Graph& g, const AcceleratorConfig& cfg) {
  validate_cfg(cfg, "simulate");
  ModelPerf perf;
  std::vector<cost::OpCost> costs;
  costs.reserve(g.nodes.size());
  for (const auto& node : g.nodes) costs.push_back(cost::op_cost(node, g));

  perf.plan = allocate_onchip(g, costs, cfg);
  std::set<std::string> charged;
  for (int i : g.topo_order()) {
    LayerTiming t = layer_time(g.nodes[i], costs[i], g, perf.plan, cfg, charged);
    perf.total_s += t.time_s();
    perf.total_flops += costs[i].flops;
    perf.layers.push_back(std::move(t));
  }
  perf.effective_flops =
      perf.total_s > 0 ? static_cast<double>(perf.total_flops) / perf.total_s : 0.0;
  // total_s ≥ Σ flops/peak by construction; clamp the 1-ulp division artifacts
  // so the ceiling holds exactly.
  perf.effective_flops = std::min(perf.effective_flops, cfg.peak_flops);
  return perf;
}

std::int64_t verify_plan(const ir::Graph& g, const ResidencyPlan& plan,
                         const AcceleratorConfig& cfg) {
  const auto topo = g.topo_order();
  const Liveness lv = compute_liveness(g, topo);
  std::int64_t live = 0;
  std::int64_t peak = plan.pinned_bytes;
  std::map<int, std::vector<std::string>> free_at;

  auto check = [&]() {
    if (static_cast<double>(plan.pinned_bytes + live) > cfg.onchip_capacity)
      throw ValidationError("residency plan exceeds on-chip capacity");
    peak = std::max(peak, plan.pinned_bytes + live);
  };
  auto admit = [&](const std::string& name, int produced_at) {
    if (plan.at(name) != Placement::onchip_transient) return;
    live += static_cast<std::int64_t>(g.tensor(name).nbytes());
    check();
    if (!g.is_output(name)) {
      const int freed = lv.last_use.count(name) ? lv.last_use.at(name) : produced_at;
      free_at[freed].push_back(name);
    }
  };

  check();
  for (const auto& in : g.inputs) admit(in, -1);
  for (std::size_t pos = 0; pos < topo.size(); ++pos) {
    for (const auto& out : g.nodes[topo[pos]].outputs) admit(out, static_cast<int>(pos));
    for (const auto& dead : free_at[static_cast<int>(pos)])
      live -= static_cast<std::int64_t>(g.tensor(dead).nbytes());
  }
  return peak;
}

std::vector<SweepPoint> capacity_sweep(const ir::Graph& g, const AcceleratorConfig& base,
                                       const std::vector<double>& capacities,
                                       const std::vector<double>& onchip_bws) {
  if (!std::is_sorted(capacities.begin(), capacities.end()))
    throw ValidationError("capacity_sweep requires capacities sorted ascending");
  std::vector<SweepPoint> points;
  for (double cap : capacities) {
    for (double bw : onchip_bws) {
      AcceleratorConfig cfg = base;
      cfg.onchip_capacity = cap;
      cfg.onchip_bw = bw;
      const ModelPerf perf = simulate(g, cfg);
      SweepPoint p;
      p.capacity = cap;
      p.onchip_bw = bw;
      p.total_s = perf.total_s;
      p.effective_flops = perf.effective_flops;
      for (const auto& l : perf.layers) {
        if (l.bound == Bound::compute) ++p.compute_bound;
        else if (l.bound == Bound::dram) ++p.dram_bound;
        else ++p.onchip_bound;
      }
      points.push_back(p);
    }
  }
  return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "capacity_bytes,onchip_bw,total_s,effective_tops,"
         "compute_bound,dram_bound,onchip_bound\n";
  for (const auto& p : points) {
    out << format_double(p.capacity) << ',' << format_double(p.onchip_bw) << ','
        << format_double(p.total_s) << ',' << format_double(p.effective_flops / 1e12) << ','
        << p.compute_bound << ',' << p.dram_bound << ',' << p.onchip_bound << '\n';
  }
  return out.str();
}

}  // namespace inferlab::roofline
