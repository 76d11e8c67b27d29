#include "inferlab/fixtures.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "inferlab/common.hpp"

namespace inferlab::fixtures {

namespace {

void declare(ir::Graph& g, const std::string& name, std::vector<std::int64_t> dims,
             DType dtype = DType::f32) {
  ir::TensorSpec spec;
  spec.name = name;
  spec.dims = std::move(dims);
  spec.dtype = dtype;
  g.tensors[name] = spec;
}

ir::Node node(const std::string& name, ir::Op op, std::vector<std::string> ins,
              std::vector<std::string> outs, ir::AttrMap attrs = {}) {
  ir::Node n;
  n.name = name;
  n.op = op;
  n.inputs = std::move(ins);
  n.outputs = std::move(outs);
  n.attrs = std::move(attrs);
  return n;
}

Tensor uniform_f32(SplitMix64& rng, std::vector<std::int64_t> dims, double lo, double hi) {
  Tensor t(DType::f32, std::move(dims));
  for (auto& v : t.as<float>()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

Tensor indices_i32(SplitMix64& rng, std::int64_t count, std::int64_t rows) {
  Tensor t(DType::i32, {count});
  for (auto& v : t.as<std::int32_t>())
    v = static_cast<std::int32_t>(rng.uniform_int(0, rows - 1));
  return t;
}

Tensor lengths_i32(std::int64_t segments, std::int32_t per_segment) {
  Tensor t(DType::i32, {segments});
  for (auto& v : t.as<std::int32_t>()) v = per_segment;
  return t;
}

void add_fc(ir::Graph& g, SplitMix64& rng, const std::string& name, const std::string& in,
            const std::string& out, std::int64_t k, std::int64_t n) {
  declare(g, name + "_w", {n, k});
  declare(g, name + "_b", {n});
  g.weights.insert(name + "_w");
  g.weights.insert(name + "_b");
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  g.weight_data[name + "_w"] = uniform_f32(rng, {n, k}, -bound, bound);
  g.weight_data[name + "_b"] = uniform_f32(rng, {n}, -0.1, 0.1);
  declare(g, out, {});
  g.nodes.push_back(node(name, ir::Op::FC, {in, name + "_w", name + "_b"}, {out}));
}

// Conv weight [Co, Ci/groups, k, k], kernel attrs filled in.
void add_conv(ir::Graph& g, SplitMix64& rng, const std::string& name, const std::string& in,
              const std::string& out, std::int64_t ci, std::int64_t co, std::int64_t k,
              std::int64_t stride, std::int64_t pad, std::int64_t groups, double wbound) {
  declare(g, name + "_w", {co, ci / groups, k, k});
  declare(g, name + "_b", {co});
  g.weights.insert(name + "_w");
  g.weights.insert(name + "_b");
  g.weight_data[name + "_w"] = uniform_f32(rng, {co, ci / groups, k, k}, -wbound, wbound);
  g.weight_data[name + "_b"] = uniform_f32(rng, {co}, -0.1, 0.1);
  declare(g, out, {});
  g.nodes.push_back(node(name, ir::Op::Conv, {in, name + "_w", name + "_b"}, {out},
                         {{"kernel", std::vector<std::int64_t>{k, k}},
                          {"stride", std::vector<std::int64_t>{stride, stride}},
                          {"pad", std::vector<std::int64_t>{pad, pad}},
                          {"group", groups}}));
}

// Mostly-small values with rare large spikes; cubing a uniform concentrates
// mass near zero while keeping the tails at +-peak.
Tensor heavy_tailed(SplitMix64& rng, std::vector<std::int64_t> dims, double peak) {
  Tensor t(DType::f32, std::move(dims));
  for (auto& v : t.as<float>()) {
    const double u = rng.uniform(-1.0, 1.0);
    v = static_cast<float>(u * u * u * peak);
  }
  return t;
}

}  // namespace

Model recommendation() {
  SplitMix64 rng(0x5ec01ull);
  Model m;
  ir::Graph& g = m.graph;

  constexpr std::int64_t kBatch = 16;
  constexpr std::int64_t kDim = 32;
  constexpr std::int64_t kUserRows = 60000, kAdRows = 45000;
  constexpr std::int64_t kUserLookups = 400, kAdLookups = 200;  // per sample

  declare(g, "user_table", {kUserRows, kDim});
  declare(g, "ad_table", {kAdRows, kDim});
  g.weights = {"user_table", "ad_table"};
  g.weight_data["user_table"] = uniform_f32(rng, {kUserRows, kDim}, -0.1, 0.1);
  g.weight_data["ad_table"] = uniform_f32(rng, {kAdRows, kDim}, -0.1, 0.1);

  declare(g, "user_ids", {kBatch * kUserLookups}, DType::i32);
  declare(g, "user_lens", {kBatch}, DType::i32);
  declare(g, "ad_ids", {kBatch * kAdLookups}, DType::i32);
  declare(g, "ad_lens", {kBatch}, DType::i32);
  g.inputs = {"user_ids", "user_lens", "ad_ids", "ad_lens"};

  declare(g, "user_pooled", {});
  declare(g, "ad_pooled", {});
  declare(g, "features", {});
  g.nodes.push_back(node("user_sls", ir::Op::SparseLengthsSum,
                         {"user_table", "user_ids", "user_lens"}, {"user_pooled"}));
  g.nodes.push_back(node("ad_sls", ir::Op::SparseLengthsSum,
                         {"ad_table", "ad_ids", "ad_lens"}, {"ad_pooled"}));
  g.nodes.push_back(node("feature_concat", ir::Op::Concat, {"user_pooled", "ad_pooled"},
                         {"features"}, {{"axis", std::int64_t{1}}}));

  declare(g, "h1_relu", {});
  add_fc(g, rng, "top_fc1", "features", "h1", 2 * kDim, 64);
  g.nodes.push_back(node("top_relu", ir::Op::Relu, {"h1"}, {"h1_relu"}));
  add_fc(g, rng, "top_fc2", "h1_relu", "h2", 64, 32);
  add_fc(g, rng, "top_fc3", "h2", "ctr", 32, 16);
  g.outputs = {"ctr"};
  g = ir::infer_shapes(g);

  m.inputs["user_ids"] = indices_i32(rng, kBatch * kUserLookups, kUserRows);
  m.inputs["user_lens"] = lengths_i32(kBatch, kUserLookups);
  m.inputs["ad_ids"] = indices_i32(rng, kBatch * kAdLookups, kAdRows);
  m.inputs["ad_lens"] = lengths_i32(kBatch, kAdLookups);
  return m;
}

Model compute_bound_fc() {
  SplitMix64 rng(0xc0b0ull);
  Model m;
  ir::Graph& g = m.graph;
  // 2*8192*4096*2048 = 137 Gop against ~109 MB of traffic: above 1000 op/B,
  // so 100 TOP/s beats 100 GB/s with nothing resident.
  declare(g, "x", {8192, 4096}, DType::u8);
  declare(g, "w", {2048, 4096}, DType::i8);
  declare(g, "y", {8192, 2048}, DType::i32);
  g.weights = {"w"};
  g.inputs = {"x"};
  g.outputs = {"y"};
  g.nodes.push_back(node("big_fc", ir::Op::FC, {"x", "w"}, {"y"}));
  g = ir::infer_shapes(g);

  Tensor w(DType::i8, {2048, 4096});
  for (auto& v : w.as<std::int8_t>())
    v = static_cast<std::int8_t>(rng.uniform_int(-127, 127));
  g.weight_data["w"] = w;
  Tensor x(DType::u8, {8192, 4096});
  for (auto& v : x.as<std::uint8_t>())
    v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  m.inputs["x"] = x;
  return m;
}

Model cv_net() {
  SplitMix64 rng(0xc5e7ull);
  Model m;
  ir::Graph& g = m.graph;
  declare(g, "x", {4, 32, 56, 56});
  g.inputs = {"x"};

  add_conv(g, rng, "conv1", "x", "c1", 32, 32, 3, 1, 1, 1, 0.06);
  declare(g, "c1r", {});
  g.nodes.push_back(node("relu1", ir::Op::Relu, {"c1"}, {"c1r"}));
  add_conv(g, rng, "dw1", "c1r", "d1", 32, 32, 3, 1, 1, 32, 0.2);
  declare(g, "d1r", {});
  g.nodes.push_back(node("relu2", ir::Op::Relu, {"d1"}, {"d1r"}));
  add_conv(g, rng, "dw2", "d1r", "d2", 32, 32, 3, 2, 1, 32, 0.2);
  add_conv(g, rng, "pw", "d2", "p1", 32, 64, 1, 1, 0, 1, 0.12);
  declare(g, "out", {});
  g.nodes.push_back(node("relu3", ir::Op::Relu, {"p1"}, {"out"}));
  g.outputs = {"out"};
  g = ir::infer_shapes(g);

  m.inputs["x"] = uniform_f32(rng, {4, 32, 56, 56}, -1.0, 1.0);
  return m;
}

Model toy_cnn() {
  SplitMix64 rng(0x7093ull);
  Model m;
  ir::Graph& g = m.graph;
  declare(g, "x", {2, 3, 8, 8});
  g.inputs = {"x"};

  add_conv(g, rng, "conv1", "x", "c1", 3, 8, 3, 1, 1, 1, 0.05);
  declare(g, "c1r", {});
  g.nodes.push_back(node("relu1", ir::Op::Relu, {"c1"}, {"c1r"}));
  add_conv(g, rng, "conv2", "c1r", "c2", 8, 8, 3, 1, 1, 1, 0.15);
  declare(g, "c2r", {});
  g.nodes.push_back(node("relu2", ir::Op::Relu, {"c2"}, {"c2r"}));
  declare(g, "flat", {});
  g.nodes.push_back(node("flatten", ir::Op::Flatten, {"c2r"}, {"flat"}));
  add_fc(g, rng, "fc", "flat", "logits", 8 * 8 * 8, 10);
  declare(g, "probs", {});
  g.nodes.push_back(node("softmax", ir::Op::Softmax, {"logits"}, {"probs"}));
  g.outputs = {"probs"};

  // Planted outliers: one spike per conv1 output channel and per fc row, so
  // symmetric ranges blow up while the bulk of each slice stays tiny.
  {
    auto w = g.weight_data["conv1_w"].as<float>();
    const std::int64_t per = 3 * 3 * 3;
    for (std::int64_t c = 0; c < 8; ++c)
      w[static_cast<std::size_t>(c * per + rng.uniform_int(0, per - 1))] =
          static_cast<float>((c % 2 ? -1.0 : 1.0) * 2.0);
    auto f = g.weight_data["fc_w"].as<float>();
    const std::int64_t k = 8 * 8 * 8;
    for (std::int64_t r = 0; r < 10; ++r)
      f[static_cast<std::size_t>(r * k + rng.uniform_int(0, k - 1))] =
          static_cast<float>((r % 2 ? -1.0 : 1.0) * 1.6);
  }
  g = ir::infer_shapes(g);

  m.inputs["x"] = heavy_tailed(rng, {2, 3, 8, 8}, 8.0);
  return m;
}

Model nmt_stack() {
  SplitMix64 rng(0x9317ull);
  Model m;
  ir::Graph& g = m.graph;
  declare(g, "x", {20, 256});
  g.inputs = {"x"};

  add_fc(g, rng, "enc_fc1", "x", "e1", 256, 256);
  declare(g, "e1r", {});
  g.nodes.push_back(node("enc_relu", ir::Op::Relu, {"e1"}, {"e1r"}));
  add_fc(g, rng, "enc_fc2", "e1r", "e2", 256, 256);
  declare(g, "res", {});
  g.nodes.push_back(node("residual", ir::Op::Add, {"e2", "e1r"}, {"res"}));
  add_fc(g, rng, "vocab_proj", "res", "logits", 256, 512);
  declare(g, "probs", {});
  g.nodes.push_back(node("softmax", ir::Op::Softmax, {"logits"}, {"probs"}));
  g.outputs = {"probs"};
  g = ir::infer_shapes(g);

  m.inputs["x"] = uniform_f32(rng, {20, 256}, -1.0, 1.0);
  return m;
}

std::vector<std::map<std::string, Tensor>> toy_cnn_batches(int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("toy_cnn_batches: need at least one batch");
  SplitMix64 rng(seed);
  std::vector<std::map<std::string, Tensor>> batches;
  for (int i = 0; i < n; ++i) {
    std::map<std::string, Tensor> b;
    b["x"] = heavy_tailed(rng, {2, 3, 8, 8}, 8.0);
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

// Concat->BatchMatMul->Flatten over multi-megabyte-per-second tensors, kept at
// the graph boundary so no larger connected pattern contains it.
ir::Graph planted_chain_graph(int variant) {
  ir::Graph g;
  declare(g, "left", {4, 32, 64});
  declare(g, "right", {4, 32, 64});
  declare(g, "proj", {4, 64, 32});
  declare(g, "cat", {});
  declare(g, "att", {});
  declare(g, "att_flat", {});
  g.inputs = {"left", "right", "proj"};
  g.nodes.push_back(node("concat", ir::Op::Concat, {"left", "right"}, {"cat"},
                         {{"axis", std::int64_t{1}}}));
  g.nodes.push_back(node("bmm", ir::Op::BatchMatMul, {"cat", "proj"}, {"att"}));
  g.nodes.push_back(node("flatten", ir::Op::Flatten, {"att"}, {"att_flat"}));
  g.outputs = {"att_flat"};

  // Small detached noise, different per graph so no noise pattern piles up.
  declare(g, "nx", {4, 16});
  g.inputs.push_back("nx");
  auto chain = [&](std::initializer_list<ir::Op> ops) {
    std::string prev = "nx";
    int i = 0;
    for (ir::Op op : ops) {
      const std::string out = "nt" + std::to_string(i);
      declare(g, out, {});
      ir::AttrMap attrs;
      if (op == ir::Op::Clip) attrs = {{"min", -0.5}, {"max", 0.5}};
      std::vector<std::string> ins = {prev};
      if (op == ir::Op::Add || op == ir::Op::Mul) ins.push_back("nx");
      g.nodes.push_back(node("noise" + std::to_string(i), op, ins, {out}, attrs));
      prev = out;
      ++i;
    }
    g.outputs.push_back(prev);
  };
  switch (variant) {
    case 0: g.outputs.push_back("nx"); break;
    case 1: chain({ir::Op::Relu, ir::Op::Clip}); break;
    case 2: chain({ir::Op::Add, ir::Op::Relu}); break;
    case 3: chain({ir::Op::Mul, ir::Op::Clip, ir::Op::Relu}); break;
    default: chain({ir::Op::Clip, ir::Op::Mul}); break;
  }
  return ir::infer_shapes(g);
}

ir::Graph noise_only_graph(std::uint64_t seed) {
  SplitMix64 rng(seed);
  ir::Graph g;
  declare(g, "x", {8, 32});
  g.inputs = {"x"};
  std::string prev = "x";
  const int layers = 2 + static_cast<int>(rng.uniform_int(0, 1));
  for (int i = 0; i < layers; ++i) {
    const std::string w = "w" + std::to_string(i);
    const std::string h = "h" + std::to_string(i);
    const std::string r = "r" + std::to_string(i);
    declare(g, w, {32, 32});
    g.weights.insert(w);
    declare(g, h, {});
    declare(g, r, {});
    g.nodes.push_back(node("fc" + std::to_string(i), ir::Op::FC, {prev, w}, {h}));
    g.nodes.push_back(node("act" + std::to_string(i), ir::Op::Relu, {h}, {r}));
    prev = r;
  }
  g.outputs = {prev};
  return ir::infer_shapes(g);
}

}  // namespace

std::vector<ir::Graph> mining_corpus() {
  std::vector<ir::Graph> corpus;
  for (int v = 0; v < 5; ++v) corpus.push_back(planted_chain_graph(v));
  corpus.push_back(noise_only_graph(21));
  corpus.push_back(noise_only_graph(22));
  return corpus;
}

}  // namespace inferlab::fixtures
