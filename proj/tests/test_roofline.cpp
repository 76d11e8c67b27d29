#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "graph_builders.hpp"
#include "inferlab/roofline.hpp"

using namespace inferlab;
using namespace inferlab::ir;
using namespace inferlab::roofline;
using testutil::add_tensor;
using testutil::fc_graph;
using testutil::make_node;

namespace {

AcceleratorConfig paper_cfg(double capacity, double onchip_bw = 1e12) {
  AcceleratorConfig cfg;
  cfg.peak_flops = 100e12;
  cfg.dram_bw = 100e9;
  cfg.onchip_capacity = capacity;
  cfg.onchip_bw = onchip_bw;
  return cfg;
}

std::vector<cost::OpCost> all_costs(const Graph& g) {
  std::vector<cost::OpCost> out;
  for (const auto& n : g.nodes) out.push_back(cost::op_cost(n, g));
  return out;
}

// Two FCs sharing one input: w1 is 3 MiB, w2 is 2 MiB (f32).
Graph two_fc_graph() {
  Graph g;
  add_tensor(g, "x", {1, 1024});
  add_tensor(g, "w1", {768, 1024});
  add_tensor(g, "w2", {512, 1024});
  add_tensor(g, "y1", {});
  add_tensor(g, "y2", {});
  g.weights = {"w1", "w2"};
  g.inputs = {"x"};
  g.outputs = {"y1", "y2"};
  g.nodes.push_back(make_node("fc1", Op::FC, {"x", "w1"}, {"y1"}));
  g.nodes.push_back(make_node("fc2", Op::FC, {"x", "w2"}, {"y2"}));
  return infer_shapes(g);
}

Graph mlp_chain() {
  Graph g;
  add_tensor(g, "x", {8, 256});
  add_tensor(g, "w0", {256, 256});
  add_tensor(g, "w1", {256, 256});
  add_tensor(g, "w2", {64, 256});
  add_tensor(g, "h0", {});
  add_tensor(g, "r0", {});
  add_tensor(g, "h1", {});
  add_tensor(g, "r1", {});
  add_tensor(g, "y", {});
  g.weights = {"w0", "w1", "w2"};
  g.inputs = {"x"};
  g.outputs = {"y"};
  g.nodes.push_back(make_node("fc0", Op::FC, {"x", "w0"}, {"h0"}));
  g.nodes.push_back(make_node("relu0", Op::Relu, {"h0"}, {"r0"}));
  g.nodes.push_back(make_node("fc1", Op::FC, {"r0", "w1"}, {"h1"}));
  g.nodes.push_back(make_node("relu1", Op::Relu, {"h1"}, {"r1"}));
  g.nodes.push_back(make_node("fc2", Op::FC, {"r1", "w2"}, {"y"}));
  return infer_shapes(g);
}

}  // namespace

TEST_CASE("accelerator config JSON round trip and validation") {
  AcceleratorConfig cfg = paper_cfg(32 * 1024 * 1024, 1e12);
  const std::string text = accel_to_json_text(cfg);
  AcceleratorConfig back = accel_from_json_text(text);
  CHECK(back.peak_flops == cfg.peak_flops);
  CHECK(back.dram_bw == cfg.dram_bw);
  CHECK(back.onchip_capacity == cfg.onchip_capacity);
  CHECK(back.onchip_bw == cfg.onchip_bw);

  CHECK_THROWS_AS(accel_from_json_text("{\"peak_flops\": 1e12}"), ParseError);
  CHECK_THROWS_AS(
      accel_from_json_text(R"({"peak_flops":0,"dram_bw":1,"onchip_capacity":0,"onchip_bw":1})"),
      ValidationError);
}

TEST_CASE("tensor_read_bytes: SLS tables count touched rows only") {
  Graph g;
  add_tensor(g, "table", {100000, 64});
  add_tensor(g, "idx", {20}, DType::i32);
  add_tensor(g, "len", {4}, DType::i32);
  add_tensor(g, "out", {});
  g.weights = {"table"};
  g.inputs = {"idx", "len"};
  g.outputs = {"out"};
  g.nodes.push_back(make_node("sls", Op::SparseLengthsSum, {"table", "idx", "len"}, {"out"}));
  g = infer_shapes(g);
  CHECK(tensor_read_bytes(g.nodes[0], g, "table") == 20 * 64 * 4);
  CHECK(tensor_read_bytes(g.nodes[0], g, "idx") == 20 * 4);
}

TEST_CASE("allocate_onchip: zero capacity leaves everything offchip") {
  Graph g = mlp_chain();
  ResidencyPlan plan = allocate_onchip(g, all_costs(g), paper_cfg(0));
  for (const auto& [name, p] : plan.placement) CHECK(p == Placement::offchip);
  CHECK(plan.pinned_bytes == 0);
  CHECK(plan.peak_onchip_bytes == 0);
}

TEST_CASE("allocate_onchip: 3MiB + 2MiB weights against 4MiB capacity") {
  Graph g = two_fc_graph();
  ResidencyPlan plan = allocate_onchip(g, all_costs(g), paper_cfg(4.0 * 1024 * 1024));
  CHECK(plan.at("w1") == Placement::onchip_pinned);
  CHECK(plan.at("w2") == Placement::offchip);
  CHECK(plan.pinned_bytes == 3 * 1024 * 1024);
  // Leftover megabyte holds the small activations.
  CHECK(plan.at("x") == Placement::onchip_transient);
  CHECK(plan.at("y1") == Placement::onchip_transient);
  CHECK(plan.at("y2") == Placement::onchip_transient);
  verify_plan(g, plan, paper_cfg(4.0 * 1024 * 1024));
}

TEST_CASE("allocate_onchip: ample capacity takes everything") {
  Graph g = mlp_chain();
  const auto cfg = paper_cfg(1e9);
  ResidencyPlan plan = allocate_onchip(g, all_costs(g), cfg);
  for (const auto& w : g.weights) CHECK(plan.at(w) == Placement::onchip_pinned);
  for (const auto& [name, spec] : g.tensors)
    if (!g.is_weight(name)) CHECK(plan.at(name) == Placement::onchip_transient);
  CHECK(verify_plan(g, plan, cfg) == plan.peak_onchip_bytes);
}

TEST_CASE("allocate_onchip: cold embedding tables sort behind dense weights") {
  Graph g;
  add_tensor(g, "table", {100000, 64});  // 25.6 MB, touched 20 rows per run
  add_tensor(g, "idx", {20}, DType::i32);
  add_tensor(g, "len", {4}, DType::i32);
  add_tensor(g, "pooled", {});
  add_tensor(g, "w", {512, 64});  // 128 KiB dense FC weight
  add_tensor(g, "x", {4, 64});
  add_tensor(g, "y", {});
  g.weights = {"table", "w"};
  g.inputs = {"idx", "len", "x"};
  g.outputs = {"pooled", "y"};
  g.nodes.push_back(make_node("sls", Op::SparseLengthsSum, {"table", "idx", "len"}, {"pooled"}));
  g.nodes.push_back(make_node("fc", Op::FC, {"x", "w"}, {"y"}));
  g = infer_shapes(g);

  // Room for both, but the FC weight must be chosen first.
  ResidencyPlan plan = allocate_onchip(g, all_costs(g), paper_cfg(200 * 1024));
  CHECK(plan.at("w") == Placement::onchip_pinned);
  CHECK(plan.at("table") == Placement::offchip);
}

TEST_CASE("layer_time arithmetic: compute-bound and dram-bound cases") {
  Graph g;
  add_tensor(g, "a", {125000});  // 500 KB f32
  add_tensor(g, "b", {125000});
  g.inputs = {"a"};
  g.outputs = {"b"};
  g.nodes.push_back(make_node("op", Op::Relu, {"a"}, {"b"}));
  g = infer_shapes(g);
  const AcceleratorConfig cfg = paper_cfg(16 * 1024 * 1024);

  SUBCASE("all traffic on-chip, heavy flops") {
    ResidencyPlan plan;
    plan.placement["a"] = Placement::onchip_transient;
    plan.placement["b"] = Placement::onchip_transient;
    cost::OpCost c;
    c.flops = 2'000'000'000;
    std::set<std::string> charged;
    LayerTiming t = layer_time(g.nodes[0], c, g, plan, cfg, charged);
    CHECK(t.compute_s == 2e-5);
    CHECK(t.onchip_s == 1e-6);  // 1e6 bytes at 1 TB/s
    CHECK(t.offchip_s == 0.0);
    CHECK(t.bound == Bound::compute);
  }
  SUBCASE("all traffic off-chip, light flops") {
    ResidencyPlan plan;  // defaults to offchip
    cost::OpCost c;
    c.flops = 2'000'000;
    std::set<std::string> charged;
    LayerTiming t = layer_time(g.nodes[0], c, g, plan, cfg, charged);
    CHECK(t.compute_s == 2e-8);
    CHECK(t.offchip_s == 1e-5);  // 1e6 bytes at 100 GB/s
    CHECK(t.bound == Bound::dram);
    CHECK(t.time_s() == 1e-5);
  }
}

TEST_CASE("multi-consumer reads: per consumer offchip, once onchip") {
  Graph g;
  add_tensor(g, "x", {1024});  // 4 KiB
  add_tensor(g, "r1", {});
  add_tensor(g, "r2", {});
  g.inputs = {"x"};
  g.outputs = {"r1", "r2"};
  g.nodes.push_back(make_node("relu1", Op::Relu, {"x"}, {"r1"}));
  g.nodes.push_back(make_node("relu2", Op::Relu, {"x"}, {"r2"}));
  g = infer_shapes(g);
  const auto costs = all_costs(g);

  SUBCASE("offchip: both layers pay for x") {
    const auto cfg = paper_cfg(0);
    ResidencyPlan plan = allocate_onchip(g, costs, cfg);
    std::set<std::string> charged;
    LayerTiming t1 = layer_time(g.nodes[0], costs[0], g, plan, cfg, charged);
    LayerTiming t2 = layer_time(g.nodes[1], costs[1], g, plan, cfg, charged);
    CHECK(t1.offchip_s == (4096 + 4096) / 100e9);
    CHECK(t2.offchip_s == (4096 + 4096) / 100e9);
  }
  SUBCASE("onchip: only the first reader pays") {
    const auto cfg = paper_cfg(1e9);
    ResidencyPlan plan = allocate_onchip(g, costs, cfg);
    std::set<std::string> charged;
    LayerTiming t1 = layer_time(g.nodes[0], costs[0], g, plan, cfg, charged);
    LayerTiming t2 = layer_time(g.nodes[1], costs[1], g, plan, cfg, charged);
    CHECK(t1.onchip_s == (4096 + 4096) / 1e12);
    CHECK(t2.onchip_s == 4096 / 1e12);  // write of r2 only
  }
}

TEST_CASE("degenerate roofline: infinite capacity and onchip bw is pure compute") {
  Graph g = mlp_chain();
  AcceleratorConfig cfg = paper_cfg(std::numeric_limits<double>::infinity(),
                                    std::numeric_limits<double>::infinity());
  ModelPerf perf = simulate(g, cfg);
  double pure = 0;
  for (const auto& n : g.nodes) pure += static_cast<double>(cost::op_cost(n, g).flops) / 100e12;
  CHECK(perf.total_s == pure);
  for (const auto& l : perf.layers) CHECK(l.bound == Bound::compute);
}

TEST_CASE("compute-bound FC saturates the machine at any capacity") {
  // 2*8192*4096*2048 flops = 1.374 ms at 100 TOP/s; 109 MB of traffic = 1.09 ms
  // at 100 GB/s, so compute wins even with nothing resident on-chip.
  Graph g = fc_graph(8192, 4096, 2048, DType::i8);
  g.tensor("x").dtype = DType::u8;
  g.tensor("y").dtype = DType::i32;
  for (double cap : {0.0, 1e6, 1e8}) {
    ModelPerf perf = simulate(g, paper_cfg(cap));
    CHECK(perf.effective_flops == doctest::Approx(100e12).epsilon(1e-9));
    CHECK(perf.effective_flops <= 100e12);
    CHECK(perf.layers[0].bound == Bound::compute);
  }
}

TEST_CASE("capacity sweep is monotone and ordered") {
  Graph g = mlp_chain();
  const std::vector<double> caps = {0, 64 * 1024, 256 * 1024, 1e6, 4e6};
  const std::vector<double> bws = {1e12, 10e12};
  auto points = capacity_sweep(g, paper_cfg(0), caps, bws);
  REQUIRE(points.size() == caps.size() * bws.size());

  for (double bw : bws) {
    double prev = -1;
    for (const auto& p : points) {
      if (p.onchip_bw != bw) continue;
      CHECK(p.effective_flops >= prev);
      prev = p.effective_flops;
      CHECK(p.effective_flops <= 100e12);
      CHECK(p.compute_bound + p.dram_bound + p.onchip_bound ==
            static_cast<int>(g.nodes.size()));
    }
  }

  // Rows reproduce simulate() pointwise.
  AcceleratorConfig cfg = paper_cfg(caps[2], bws[1]);
  ModelPerf perf = simulate(g, cfg);
  const auto& row = points[2 * bws.size() + 1];
  CHECK(row.total_s == perf.total_s);
  CHECK(row.effective_flops == perf.effective_flops);

  CHECK_THROWS_AS(capacity_sweep(g, paper_cfg(0), {2.0, 1.0}, bws), ValidationError);
}

TEST_CASE("pinned set grows with capacity (prefix property)") {
  Graph g = mlp_chain();
  const auto costs = all_costs(g);
  std::set<std::string> prev;
  for (double cap : {0.0, 300e3, 600e3, 1e6}) {
    ResidencyPlan plan = allocate_onchip(g, costs, paper_cfg(cap));
    std::set<std::string> pinned;
    for (const auto& [name, p] : plan.placement)
      if (p == Placement::onchip_pinned) pinned.insert(name);
    CHECK(std::includes(pinned.begin(), pinned.end(), prev.begin(), prev.end()));
    prev = pinned;
  }
}

TEST_CASE("sweep CSV structure") {
  Graph g = fc_graph(4, 8, 8);
  auto points = capacity_sweep(g, paper_cfg(0), {0, 1e6}, {1e12});
  const std::string csv = sweep_csv(points);
  CHECK(csv.substr(0, csv.find('\n')) ==
        "capacity_bytes,onchip_bw,total_s,effective_tops,compute_bound,dram_bound,onchip_bound");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(sweep_csv(points) == csv);
}
