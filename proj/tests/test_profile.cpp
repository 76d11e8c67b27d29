// Calibration, plan proposal, per-layer error profiling, selective fallback.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "graph_builders.hpp"
#include "inferlab/profile.hpp"

using namespace inferlab;
using namespace inferlab::profile;
using ir::Graph;
using ir::Op;
using testutil::add_tensor;
using testutil::make_node;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor random_f32(SplitMix64& rng, std::vector<std::int64_t> dims, double lo = -1.0,
                  double hi = 1.0) {
  Tensor t(DType::f32, std::move(dims));
  for (auto& v : t.as<float>()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// x -> FC -> Relu -> FC.
Graph two_fc_graph(std::int64_t m, std::int64_t k, std::int64_t n) {
  Graph g;
  add_tensor(g, "x", {m, k});
  add_tensor(g, "w1", {n, k});
  add_tensor(g, "h", {});
  add_tensor(g, "r", {});
  add_tensor(g, "w2", {n, n});
  add_tensor(g, "y", {});
  g.weights = {"w1", "w2"};
  g.inputs = {"x"};
  g.outputs = {"y"};
  g.nodes.push_back(make_node("fc1", Op::FC, {"x", "w1"}, {"h"}));
  g.nodes.push_back(make_node("relu1", Op::Relu, {"h"}, {"r"}));
  g.nodes.push_back(make_node("fc2", Op::FC, {"r", "w2"}, {"y"}));
  g = ir::infer_shapes(g);
  SplitMix64 rng(404);
  g.weight_data["w1"] = random_f32(rng, {n, k}, -0.3, 0.3);
  g.weight_data["w2"] = random_f32(rng, {n, n}, -0.3, 0.3);
  return g;
}

std::vector<Batch> random_batches(const Graph& g, std::size_t count, std::uint64_t seed,
                                  double lo = -1.0, double hi = 1.0) {
  SplitMix64 rng(seed);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < count; ++i) {
    Batch b;
    for (const auto& name : g.inputs)
      b.emplace(name, random_f32(rng, g.tensors.at(name).dims, lo, hi));
    batches.push_back(std::move(b));
  }
  return batches;
}

// Conv -> Relu -> Conv -> Relu -> Flatten -> FC, modest fan-in-scaled weights.
Graph toy_cnn() {
  Graph g;
  add_tensor(g, "x", {2, 2, 6, 6});
  add_tensor(g, "w1", {4, 2, 3, 3});
  add_tensor(g, "b1", {4});
  add_tensor(g, "c1", {});
  add_tensor(g, "r1", {});
  add_tensor(g, "w2", {4, 4, 3, 3});
  add_tensor(g, "b2", {4});
  add_tensor(g, "c2", {});
  add_tensor(g, "r2", {});
  add_tensor(g, "f", {});
  add_tensor(g, "w3", {8, 144});
  add_tensor(g, "b3", {8});
  add_tensor(g, "y", {});
  g.weights = {"w1", "b1", "w2", "b2", "w3", "b3"};
  g.inputs = {"x"};
  g.outputs = {"y"};
  ir::AttrMap conv_attrs = {{"kernel", std::int64_t{3}},
                            {"stride", std::int64_t{1}},
                            {"pad", std::int64_t{1}},
                            {"group", std::int64_t{1}}};
  g.nodes.push_back(make_node("conv1", Op::Conv, {"x", "w1", "b1"}, {"c1"}, conv_attrs));
  g.nodes.push_back(make_node("relu1", Op::Relu, {"c1"}, {"r1"}));
  g.nodes.push_back(make_node("conv2", Op::Conv, {"r1", "w2", "b2"}, {"c2"}, conv_attrs));
  g.nodes.push_back(make_node("relu2", Op::Relu, {"c2"}, {"r2"}));
  g.nodes.push_back(make_node("flat", Op::Flatten, {"r2"}, {"f"}));
  g.nodes.push_back(make_node("fc", Op::FC, {"f", "w3", "b3"}, {"y"}));
  g = ir::infer_shapes(g);
  SplitMix64 rng(2718);
  g.weight_data["w1"] = random_f32(rng, {4, 2, 3, 3}, -0.24, 0.24);
  g.weight_data["b1"] = random_f32(rng, {4}, -0.1, 0.1);
  g.weight_data["w2"] = random_f32(rng, {4, 4, 3, 3}, -0.17, 0.17);
  g.weight_data["b2"] = random_f32(rng, {4}, -0.1, 0.1);
  g.weight_data["w3"] = random_f32(rng, {8, 144}, -0.08, 0.08);
  g.weight_data["b3"] = random_f32(rng, {8}, -0.1, 0.1);
  return g;
}

// Single FC whose inputs, weights and bias all sit exactly on their
// quantization grids, so integer execution reproduces f32 bit for bit.
struct GridFc {
  Graph g;
  quant::QuantPlan plan;
  std::vector<Batch> calib;
};

GridFc grid_fc(bool with_giant_outliers) {
  const std::int64_t m = 4, k = 8, n = 5;
  SplitMix64 rng(99);
  Graph g;
  add_tensor(g, "x", {m, k});
  add_tensor(g, "w", {n, k});
  add_tensor(g, "y", {});
  g.weights = {"w"};
  g.inputs = {"x"};
  g.outputs = {"y"};
  g.nodes.push_back(make_node("fc", Op::FC, {"x", "w"}, {"y"}));
  g = ir::infer_shapes(g);

  Tensor w(DType::f32, {n, k});
  {
    auto wv = w.as<float>();
    for (auto& v : wv) v = 0.03125f * static_cast<float>(rng.uniform_int(-60, 60));
    if (with_giant_outliers) {
      wv[0] = 0.03125f * 2000.0f;  // |q| far beyond the i8 range
      wv[static_cast<std::size_t>(k) + 1] = 0.03125f * -1920.0f;
    }
  }
  g.weight_data["w"] = w;

  GridFc fx;
  fx.calib.resize(2);
  for (auto& batch : fx.calib) {
    Tensor x(DType::f32, {m, k});
    for (auto& v : x.as<float>()) v = static_cast<float>(rng.uniform_int(0, 31));
    batch.emplace("x", std::move(x));
  }

  quant::LayerPlan lp;
  lp.name = "fc";
  lp.granularity = quant::QGranularity::per_tensor();
  lp.symmetric = true;
  lp.params = {quant::QParams{0.03125, 0, -128, 127, true, DType::i8}};
  lp.act_scale = 1.0;
  lp.act_zero_point = 0;
  fx.plan.layers.push_back(std::move(lp));
  fx.g = std::move(g);
  return fx;
}

const LayerError& find_layer(const ErrorReport& r, const std::string& name) {
  for (const auto& e : r.layers)
    if (e.layer == name) return e;
  REQUIRE(false);
  return r.end_to_end;
}

}  // namespace

TEST_CASE("calibrate observes every f32 activation across batches") {
  Graph g = two_fc_graph(3, 6, 4);
  const auto batches = random_batches(g, 3, 17);

  CHECK_THROWS_AS(calibrate(g, {}), ValidationError);

  const CalibrationStats stats = calibrate(g, batches);
  CHECK(stats.batches == 3);
  for (const std::string name : {"x", "h", "r", "y"}) {
    REQUIRE(stats.ranges.count(name) == 1);
    const auto [lo, hi] = stats.ranges.at(name);
    CHECK(lo <= hi);
    REQUIRE(stats.histograms.count(name) == 1);
    CHECK(stats.histograms.at(name).total() == 3 * g.tensors.at(name).dims[0] *
                                                   g.tensors.at(name).dims[1]);
  }
  // Relu output never goes negative; its observed range says so.
  CHECK(stats.ranges.at("r").first >= 0.0);

  // deterministic: same batches, same statistics
  const CalibrationStats again = calibrate(g, batches);
  CHECK(again.ranges == stats.ranges);
}

TEST_CASE("propose_plan drafts a full-quantization plan from calibration") {
  Graph g = two_fc_graph(3, 6, 4);
  const auto batches = random_batches(g, 3, 18);
  const CalibrationStats stats = calibrate(g, batches);
  const quant::QuantPlan plan = propose_plan(g, stats);

  REQUIRE(plan.layers.size() == 2);
  CHECK(plan.layers[0].name == "fc1");
  CHECK(plan.layers[1].name == "fc2");
  for (const auto& lp : plan.layers) {
    CHECK(lp.quantize);
    CHECK(lp.act_scale > 0.0);
    CHECK(lp.act_zero_point >= 0);
    CHECK(lp.act_zero_point <= 255);
    CHECK(lp.symmetric);
    REQUIRE(lp.params.size() == 4);  // per output channel
    for (const auto& p : lp.params) {
      CHECK(p.target == DType::i8);
      CHECK(p.zero_point == 0);
      CHECK(p.scale > 0.0);
    }
  }
  // fc2 reads the Relu output: a one-sided range pins the zero point at 0.
  CHECK(plan.layers[1].act_zero_point == 0);

  // the proposal runs as-is on the quantized backend
  const ErrorReport rep = profile_quant_error(g, batches, plan);
  CHECK(rep.layers.size() == 2);
  for (const auto& e : rep.layers) CHECK(std::isfinite(e.l2_rel));

  SUBCASE("split proposals use per-tensor histogram scales on FC") {
    ProposeOptions opts;
    opts.split_outliers = true;
    const quant::QuantPlan sp = propose_plan(g, stats, opts);
    for (const auto& lp : sp.layers) {
      CHECK(lp.split_outliers);
      CHECK(lp.granularity.kind == quant::QGranularity::Kind::per_tensor);
      CHECK(lp.params.size() == 1);
    }
  }
  SUBCASE("uncovered inputs are rejected") {
    CalibrationStats empty;
    empty.batches = 1;
    CHECK_THROWS_AS(propose_plan(g, empty), ValidationError);
  }
  SUBCASE("asymmetric weights only combine with per-tensor granularity") {
    ProposeOptions opts;
    opts.symmetric = false;
    CHECK_THROWS_AS(propose_plan(g, stats, opts), ValidationError);
    opts.granularity = quant::QGranularity::per_tensor();
    const quant::QuantPlan ok = propose_plan(g, stats, opts);
    CHECK(ok.layers.size() == 2);
  }
}

TEST_CASE("profiling attributes zero error to an exactly representable layer") {
  GridFc fx = grid_fc(false);
  CHECK_THROWS_AS(profile_quant_error(fx.g, {}, fx.plan), ValidationError);

  const ErrorReport rep = profile_quant_error(fx.g, fx.calib, fx.plan);
  REQUIRE(rep.layers.size() == 1);
  CHECK(rep.layers[0].layer == "fc");
  CHECK(rep.layers[0].l2_rel == 0.0);
  CHECK(std::isinf(rep.layers[0].sqnr_db));
  CHECK(rep.layers[0].sqnr_db > 0.0);
  CHECK(rep.end_to_end.l2_rel == 0.0);
}

TEST_CASE("outlier splitting strictly beats dense quantization on outlier-heavy weights") {
  GridFc fx = grid_fc(true);

  const ErrorReport dense = profile_quant_error(fx.g, fx.calib, fx.plan);

  quant::QuantPlan split = fx.plan;
  split.layers[0].split_outliers = true;
  const ErrorReport sparse = profile_quant_error(fx.g, fx.calib, split);

  MESSAGE("dense l2_rel=" << dense.layers[0].l2_rel
                          << " split l2_rel=" << sparse.layers[0].l2_rel);
  CHECK(dense.layers[0].l2_rel > sparse.layers[0].l2_rel);
  // with the grid-aligned fixture the residual path is exact
  CHECK(sparse.layers[0].l2_rel == 0.0);
  CHECK(dense.layers[0].l2_rel > 0.01);
}

TEST_CASE("toy CNN keeps end-to-end SQNR above 20 dB when fully quantized") {
  Graph g = toy_cnn();
  const auto batches = random_batches(g, 3, 31);
  const CalibrationStats stats = calibrate(g, batches);
  const quant::QuantPlan plan = propose_plan(g, stats);
  REQUIRE(plan.layers.size() == 3);

  const ErrorReport rep = profile_quant_error(g, batches, plan);
  MESSAGE("toy CNN end-to-end sqnr_db=" << rep.end_to_end.sqnr_db
                                         << " l2_rel=" << rep.end_to_end.l2_rel);
  for (const auto& e : rep.layers)
    MESSAGE("  layer " << e.layer << " l2_rel=" << e.l2_rel << " sqnr_db=" << e.sqnr_db);
  CHECK(rep.end_to_end.sqnr_db > 20.0);
  for (const auto& e : rep.layers) {
    CHECK(e.l2_rel > 0.0);
    CHECK(e.l2_rel < 0.1);
  }

  SUBCASE("profiling is deterministic") {
    const ErrorReport again = profile_quant_error(g, batches, plan);
    REQUIRE(again.layers.size() == rep.layers.size());
    for (std::size_t i = 0; i < rep.layers.size(); ++i)
      CHECK(again.layers[i].l2_rel == rep.layers[i].l2_rel);
    CHECK(again.end_to_end.sqnr_db == rep.end_to_end.sqnr_db);
  }

  SUBCASE("an all-f32 plan has zero end-to-end error") {
    quant::QuantPlan off = plan;
    for (auto& lp : off.layers) lp.quantize = false;
    const ErrorReport zero = profile_quant_error(g, batches, off);
    CHECK(zero.end_to_end.l2_rel == 0.0);
  }
}

TEST_CASE("selective_plan falls back exactly the layers above threshold") {
  quant::QuantPlan plan;
  for (const std::string name : {"a", "b", "c"}) {
    quant::LayerPlan lp;
    lp.name = name;
    plan.layers.push_back(lp);
  }
  ErrorReport rep;
  rep.layers = {{"a", 0.5, 6.0}, {"b", 1e-4, 80.0}, {"c", 0.02, 34.0}};

  const quant::QuantPlan sel = selective_plan(plan, rep, 1e-2);
  CHECK_FALSE(sel.layers[0].quantize);
  CHECK(sel.layers[1].quantize);
  CHECK_FALSE(sel.layers[2].quantize);

  SUBCASE("errors all below threshold keep the full plan") {
    const quant::QuantPlan all = selective_plan(plan, rep, kInf);
    for (const auto& lp : all.layers) CHECK(lp.quantize);
    const quant::QuantPlan all2 = selective_plan(plan, rep, 0.6);
    for (const auto& lp : all2.layers) CHECK(lp.quantize);
  }
  SUBCASE("an error 10x over threshold forces that layer out") {
    const quant::QuantPlan one = selective_plan(plan, rep, 0.05);
    CHECK_FALSE(one.layers[0].quantize);
    CHECK(one.layers[1].quantize);
    CHECK(one.layers[2].quantize);
  }
  SUBCASE("sweeping the threshold down only grows the fallback set") {
    std::set<std::string> previous;
    for (const double t : {kInf, 0.5, 0.02, 1e-2, 1e-4, 0.0}) {
      const quant::QuantPlan swept = selective_plan(plan, rep, t);
      std::set<std::string> fallback;
      for (const auto& lp : swept.layers)
        if (!lp.quantize) fallback.insert(lp.name);
      CHECK(std::includes(fallback.begin(), fallback.end(), previous.begin(),
                          previous.end()));
      previous = fallback;
    }
    CHECK(previous == std::set<std::string>{"a", "b", "c"});
  }
  SUBCASE("the selected plan serializes and round-trips") {
    const std::string text = quant::plan_to_json_text(sel);
    const quant::QuantPlan back = quant::plan_from_json_text(text);
    REQUIRE(back.layers.size() == 3);
    CHECK_FALSE(back.layers[0].quantize);
    CHECK(back.layers[1].quantize);
    CHECK_FALSE(back.layers[2].quantize);
  }
}

TEST_CASE("error reports render as a layer,l2_rel,sqnr_db table") {
  ErrorReport rep;
  rep.layers = {{"conv1", 0.25, 12.04}, {"fc", 0.0, kInf}};
  rep.end_to_end = {"end_to_end", 0.125, 18.06};

  const std::string csv = error_report_csv(rep);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "layer,l2_rel,sqnr_db");
  std::getline(in, line);
  CHECK(line == "conv1,0.25,12.04");
  std::getline(in, line);
  CHECK(line == "fc,0,inf");
  std::getline(in, line);
  CHECK(line == "end_to_end,0.125,18.06");
  CHECK_FALSE(std::getline(in, line));
}
