#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "graph_builders.hpp"
#include "inferlab/cost.hpp"

using namespace inferlab;
using namespace inferlab::ir;
using namespace inferlab::cost;
using testutil::add_tensor;
using testutil::fc_graph;
using testutil::make_node;

namespace {

Graph conv_graph(std::int64_t b, std::int64_t ci, std::int64_t hw, std::int64_t co,
                 std::int64_t k, std::int64_t stride, std::int64_t pad,
                 std::int64_t groups = 1) {
  Graph g;
  add_tensor(g, "x", {b, ci, hw, hw});
  add_tensor(g, "w", {co, ci / groups, k, k});
  add_tensor(g, "y", {});
  g.weights = {"w"};
  g.inputs = {"x"};
  g.outputs = {"y"};
  g.nodes.push_back(make_node("conv", Op::Conv, {"x", "w"}, {"y"},
                              {{"kernel", k}, {"stride", stride}, {"pad", pad},
                               {"group", groups}}));
  return infer_shapes(g);
}

}  // namespace

TEST_CASE("FC cost matches the closed form") {
  Graph g = fc_graph(10, 512, 512, DType::i8);
  const OpCost c = op_cost(g.nodes[0], g);
  CHECK(c.flops == 5242880);       // 2*10*512*512
  CHECK(c.weight_bytes == 262144);  // 512*512 i8
  CHECK(c.weight_elems == 262144);
  CHECK(c.act_in_bytes == 10 * 512 * 4);
  CHECK(c.act_out_bytes == 10 * 512 * 4);
}

TEST_CASE("FC bias adds weight traffic but no flops") {
  Graph g = fc_graph(10, 512, 512, DType::i8, /*bias=*/true);
  const OpCost c = op_cost(g.nodes[0], g);
  CHECK(c.flops == 5242880);
  CHECK(c.weight_elems == 262144 + 512);
  CHECK(c.weight_bytes == 262144 + 512 * 4);  // f32 bias
}

TEST_CASE("Conv cost: ResNet stem oracle") {
  Graph g = conv_graph(1, 3, 224, 64, 7, 2, 3);
  const OpCost c = op_cost(g.nodes[0], g);
  // Independent count: every output element needs (C_i/G)*K*K macs at 2 flops.
  const std::int64_t out_elems = 1 * 64 * 112 * 112;
  const std::int64_t macs_per_out = 3 * 7 * 7;
  CHECK(c.flops == 2 * out_elems * macs_per_out);
  CHECK(c.flops == 236027904);
  CHECK(c.weight_elems == 64 * 3 * 7 * 7);
}

TEST_CASE("grouped conv costs 1/G of dense for fixed channel counts") {
  Graph dense = conv_graph(1, 16, 28, 16, 3, 1, 1, 1);
  Graph grouped = conv_graph(1, 16, 28, 16, 3, 1, 1, 4);
  const OpCost cd = op_cost(dense.nodes[0], dense);
  const OpCost cg = op_cost(grouped.nodes[0], grouped);
  CHECK(cd.flops == 4 * cg.flops);
  CHECK(cd.weight_elems == 4 * cg.weight_elems);
  CHECK(cd.act_in_elems == cg.act_in_elems);
  CHECK(cd.act_out_elems == cg.act_out_elems);
}

TEST_CASE("depthwise conv intensity identities") {
  // Stride 1, same padding: out positions == in positions.
  const std::int64_t b = 2, ch = 32, hw = 56, k = 3;
  Graph g = conv_graph(b, ch, hw, ch, k, 1, 1, ch);
  const OpCost c = op_cost(g.nodes[0], g);
  CHECK(arithmetic_intensity(c, IntensityMode::weights_only) ==
        2.0 * static_cast<double>(b * hw * hw));
  CHECK(arithmetic_intensity(c, IntensityMode::acts_only) ==
        2.0 * static_cast<double>(k * k));
}

TEST_CASE("SparseLengthsSum counts touched rows only") {
  Graph g;
  add_tensor(g, "table", {1000, 64});
  add_tensor(g, "idx", {20}, DType::i32);
  add_tensor(g, "len", {4}, DType::i32);
  add_tensor(g, "out", {});
  g.weights = {"table"};
  g.inputs = {"idx", "len"};
  g.outputs = {"out"};
  g.nodes.push_back(make_node("sls", Op::SparseLengthsSum, {"table", "idx", "len"}, {"out"}));
  g = infer_shapes(g);
  const OpCost c = op_cost(g.nodes[0], g);
  CHECK(c.flops == 20 * 64);          // one add per element read
  CHECK(c.weight_bytes == 20 * 64 * 4);
  CHECK(c.weight_elems == 20 * 64);
  CHECK(arithmetic_intensity(c, IntensityMode::weights_only) == 1.0);

  SUBCASE("row-quantized table pays scale/bias bytes, same elements") {
    g.tensor("table").dtype = DType::u8;
    g.tensor("table").dims = {1000, 64 + 8};
    g.tensor("out").dims.clear();
    Graph q = infer_shapes(g);
    const OpCost cq = op_cost(q.nodes[0], q);
    CHECK(cq.flops == 20 * 64);
    CHECK(cq.weight_bytes == 20 * 72);
    CHECK(cq.weight_elems == 20 * 64);
  }
}

TEST_CASE("data-movement ops have zero flops, elementwise have elem-count flops") {
  Graph g;
  add_tensor(g, "a", {4, 8});
  add_tensor(g, "b", {4, 8});
  add_tensor(g, "cat", {});
  add_tensor(g, "r", {});
  g.inputs = {"a", "b"};
  g.outputs = {"r"};
  g.nodes.push_back(make_node("cat", Op::Concat, {"a", "b"}, {"cat"}, {{"axis", std::int64_t{1}}}));
  g.nodes.push_back(make_node("relu", Op::Relu, {"cat"}, {"r"}));
  g = infer_shapes(g);
  const OpCost cc = op_cost(g.nodes[0], g);
  CHECK(cc.flops == 0);
  CHECK(cc.act_in_bytes == 2 * 4 * 8 * 4);
  CHECK(cc.act_out_bytes == 4 * 16 * 4);
  CHECK(arithmetic_intensity(cc, IntensityMode::weights_and_acts) == 0.0);
  // Zero traffic in the weights_only view: flagged as infinite intensity.
  CHECK(std::isinf(arithmetic_intensity(cc, IntensityMode::weights_only)));

  const OpCost cr = op_cost(g.nodes[1], g);
  CHECK(cr.flops == 4 * 16);
}

TEST_CASE("BatchMatMul flops cover the batch dimension") {
  Graph g;
  add_tensor(g, "a", {6, 50, 64});
  add_tensor(g, "b", {6, 64, 50});
  add_tensor(g, "y", {});
  g.inputs = {"a", "b"};
  g.outputs = {"y"};
  g.nodes.push_back(make_node("bmm", Op::BatchMatMul, {"a", "b"}, {"y"}));
  g = infer_shapes(g);
  const OpCost c = op_cost(g.nodes[0], g);
  CHECK(c.flops == 2LL * 6 * 50 * 64 * 50);
  CHECK(c.weight_elems == 0);
}

TEST_CASE("FC ops-per-weight is exactly 2M for random bias-free shapes") {
  SplitMix64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = rng.uniform_int(1, 300);
    const auto k = rng.uniform_int(1, 300);
    const auto n = rng.uniform_int(1, 300);
    Graph g = fc_graph(m, k, n);
    const OpCost c = op_cost(g.nodes[0], g);
    CHECK(arithmetic_intensity(c, IntensityMode::weights_only) == 2.0 * static_cast<double>(m));
  }
}

TEST_CASE("paper anchors: ops/weight 20, ops/activation 16, saturation bandwidths") {
  Graph g20 = fc_graph(10, 777, 333);
  CHECK(arithmetic_intensity(op_cost(g20.nodes[0], g20), IntensityMode::weights_only) == 20.0);

  Graph g16 = fc_graph(123, 517, 8);
  CHECK(arithmetic_intensity(op_cost(g16.nodes[0], g16), IntensityMode::acts_only) == 16.0);

  CHECK(bandwidth_to_saturate(20.0, 100e12) == 5e12);
  CHECK(bandwidth_to_saturate(16.0, 100e12) == 6.25e12);
  CHECK(bandwidth_to_saturate(std::numeric_limits<double>::infinity(), 100e12) == 0.0);
  CHECK_THROWS_AS(bandwidth_to_saturate(0.0, 100e12), NumericError);
}

TEST_CASE("dtype override re-costs weights at hypothetical precision") {
  Graph g = fc_graph(10, 512, 512, DType::f32);
  DtypeSizes as_i8 = default_dtype_sizes();
  as_i8[static_cast<std::size_t>(DType::f32)] = 1;
  const OpCost c = op_cost(g.nodes[0], g, as_i8);
  CHECK(c.weight_bytes == 262144);
  CHECK(c.weight_elems == 262144);
}

TEST_CASE("cost CSV shape and aggregates") {
  Graph g = fc_graph(10, 512, 512);
  const std::string csv = cost_csv(g);
  CHECK(csv.substr(0, csv.find('\n')) ==
        "name,op,flops,weight_bytes,act_bytes,intensity_w,intensity_wa");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.find("fc,FC,5242880,1048576,") != std::string::npos);

  const ModelAggregates a = aggregate_costs(g);
  CHECK(a.total_params == 512 * 512);
  CHECK(a.total_flops == 5242880);
  CHECK(a.intensity_w == 20.0);
}
