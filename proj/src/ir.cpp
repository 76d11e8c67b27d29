#include "inferlab/ir.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace inferlab {

std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f16: return "f16";
    case DType::u8: return "u8";
    case DType::i8: return "i8";
    case DType::i32: return "i32";
  }
  throw ValidationError("unknown dtype code");
}

DType dtype_from_name(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "f16") return DType::f16;
  if (name == "u8") return DType::u8;
  if (name == "i8") return DType::i8;
  if (name == "i32") return DType::i32;
  throw ParseError("unknown dtype '" + std::string(name) + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

}  // namespace inferlab

namespace inferlab::ir {

namespace {

constexpr std::pair<Op, std::string_view> kOpNames[] = {
    {Op::FC, "FC"},
    {Op::Conv, "Conv"},
    {Op::SparseLengthsSum, "SparseLengthsSum"},
    {Op::Concat, "Concat"},
    {Op::Split, "Split"},
    {Op::Flatten, "Flatten"},
    {Op::BatchMatMul, "BatchMatMul"},
    {Op::BatchGather, "BatchGather"},
    {Op::Relu, "Relu"},
    {Op::Add, "Add"},
    {Op::Mul, "Mul"},
    {Op::Clip, "Clip"},
    {Op::Sum, "Sum"},
    {Op::SpatialBN, "SpatialBN"},
    {Op::Softmax, "Softmax"},
};

}  // namespace

std::string_view op_name(Op op) {
  for (auto [o, n] : kOpNames)
    if (o == op) return n;
  throw ValidationError("unknown op code");
}

Op op_from_name(std::string_view name) {
  for (auto [o, n] : kOpNames)
    if (n == name) return o;
  throw ParseError("unknown op '" + std::string(name) + "'");
}

std::int64_t Node::attr_int(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end())
    throw ValidationError("node '" + name + "' missing required attr '" + key + "'");
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return *i;
  if (const auto* d = std::get_if<double>(&it->second)) return static_cast<std::int64_t>(*d);
  throw ValidationError("node '" + name + "' attr '" + key + "' is not a scalar");
}

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const {
  return attrs.count(key) ? attr_int(key) : fallback;
}

double Node::attr_double(const std::string& key, double fallback) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return fallback;
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
  throw ValidationError("node '" + name + "' attr '" + key + "' is not numeric");
}

std::vector<std::int64_t> Node::attr_ints(const std::string& key, std::size_t expect) const {
  auto it = attrs.find(key);
  if (it == attrs.end())
    throw ValidationError("node '" + name + "' missing required attr '" + key + "'");
  if (const auto* v = std::get_if<std::vector<std::int64_t>>(&it->second)) {
    if (v->size() != expect)
      throw ValidationError("node '" + name + "' attr '" + key + "' has length " +
                            std::to_string(v->size()) + ", expected " + std::to_string(expect));
    return *v;
  }
  return std::vector<std::int64_t>(expect, attr_int(key));
}

bool Graph::is_input(const std::string& name) const {
  return std::find(inputs.begin(), inputs.end(), name) != inputs.end();
}

bool Graph::is_output(const std::string& name) const {
  return std::find(outputs.begin(), outputs.end(), name) != outputs.end();
}

const TensorSpec& Graph::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("unknown tensor '" + name + "'");
  return it->second;
}

TensorSpec& Graph::tensor(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("unknown tensor '" + name + "'");
  return it->second;
}

std::map<std::string, int> Graph::producers() const {
  std::map<std::string, int> prod;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
    for (const auto& out : nodes[i].outputs)
      if (!prod.emplace(out, i).second)
        throw ValidationError("tensor '" + out + "' has multiple producers");
  return prod;
}

std::map<std::string, std::vector<int>> Graph::consumers() const {
  std::map<std::string, std::vector<int>> cons;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
    for (const auto& in : nodes[i].inputs) cons[in].push_back(i);
  return cons;
}

std::vector<int> Graph::topo_order() const {
  const int n = static_cast<int>(nodes.size());
  std::map<std::string, int> prod;
  for (int i = 0; i < n; ++i)
    for (const auto& out : nodes[i].outputs) prod.emplace(out, i);

  std::vector<std::vector<int>> succ(n);
  std::vector<int> indeg(n, 0);
  for (int i = 0; i < n; ++i) {
    for (const auto& in : nodes[i].inputs) {
      auto it = prod.find(in);
      if (it != prod.end() && it->second != i) {
        succ[it->second].push_back(i);
        ++indeg[i];
      }
    }
  }

  std::deque<int> ready;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push_back(i);

  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    const int i = ready.front();
    ready.pop_front();
    order.push_back(i);
    for (int s : succ[i])
      if (--indeg[s] == 0) ready.push_back(s);
  }
  if (static_cast<int>(order.size()) != n) {
    std::string members;
    for (int i = 0; i < n; ++i)
      if (indeg[i] > 0) members += (members.empty() ? "" : ", ") + nodes[i].name;
    throw ValidationError("graph contains a cycle through: " + members);
  }
  return order;
}

std::vector<Diagnostic> validate_graph(const Graph& g) {
  std::vector<Diagnostic> diags;
  auto add = [&](std::string code, std::string subject, std::string message) {
    diags.push_back({std::move(code), std::move(subject), std::move(message)});
  };

  for (const auto& [name, spec] : g.tensors) {
    for (auto d : spec.dims)
      if (d < 1) add("bad-dim", name, "tensor '" + name + "' has dim " + std::to_string(d));
    if ((g.is_weight(name) || g.is_input(name)) && spec.dims.empty())
      add("missing-dims", name, "input/weight tensor '" + name + "' has no dims");
  }
  for (const auto& w : g.weights)
    if (!g.tensors.count(w)) add("dangling-ref", w, "weight list names unknown tensor '" + w + "'");
  for (const auto& i : g.inputs)
    if (!g.tensors.count(i)) add("dangling-ref", i, "input list names unknown tensor '" + i + "'");
  for (const auto& o : g.outputs)
    if (!g.tensors.count(o)) add("dangling-ref", o, "output list names unknown tensor '" + o + "'");

  std::map<std::string, int> producer_count;
  for (const auto& node : g.nodes) {
    for (const auto& t : node.inputs)
      if (!g.tensors.count(t))
        add("dangling-ref", t, "node '" + node.name + "' reads undeclared tensor '" + t + "'");
    for (const auto& t : node.outputs) {
      if (!g.tensors.count(t))
        add("dangling-ref", t, "node '" + node.name + "' writes undeclared tensor '" + t + "'");
      ++producer_count[t];
      if (g.is_weight(t))
        add("weight-produced", t, "weight tensor '" + t + "' is produced by node '" + node.name + "'");
      if (g.is_input(t))
        add("input-produced", t, "input tensor '" + t + "' is produced by node '" + node.name + "'");
    }
  }
  for (const auto& [t, count] : producer_count)
    if (count > 1)
      add("multiple-producers", t,
          "tensor '" + t + "' is produced by " + std::to_string(count) + " nodes");

  // Every non-input, non-weight tensor needs exactly one producer.
  for (const auto& [name, spec] : g.tensors) {
    if (g.is_weight(name) || g.is_input(name)) continue;
    if (!producer_count.count(name))
      add("unproduced", name, "tensor '" + name + "' is neither input, weight, nor produced");
  }

  try {
    (void)g.topo_order();
  } catch (const ValidationError& e) {
    add("cycle", "", e.what());
  }
  return diags;
}

ConvSpec conv_spec(const Node& node, const Graph& g) {
  if (node.op != Op::Conv) throw ValidationError("conv_spec on non-Conv node '" + node.name + "'");
  if (node.inputs.size() < 2)
    throw ValidationError("Conv node '" + node.name + "' needs input and weight");
  const auto& in = g.tensor(node.inputs[0]);
  const auto& w = g.tensor(node.inputs[1]);
  if (in.dims.size() != 4 && in.dims.size() != 5)
    throw ValidationError("Conv input '" + in.name + "' must be [B,C,H,W] or [B,C,F,H,W]");
  const std::size_t spatial_rank = in.dims.size() - 2;

  ConvSpec s;
  s.batch = in.dims[0];
  s.in_channels = in.dims[1];
  s.in_spatial.assign(in.dims.begin() + 2, in.dims.end());
  s.kernel = node.attr_ints("kernel", spatial_rank);
  s.stride = node.has_attr("stride") ? node.attr_ints("stride", spatial_rank)
                                     : std::vector<std::int64_t>(spatial_rank, 1);
  s.pad = node.has_attr("pad") ? node.attr_ints("pad", spatial_rank)
                               : std::vector<std::int64_t>(spatial_rank, 0);
  s.groups = node.attr_int("group", 1);

  if (s.groups < 1 || s.in_channels % s.groups != 0)
    throw ValidationError("Conv '" + node.name + "': groups " + std::to_string(s.groups) +
                          " do not divide input channels " + std::to_string(s.in_channels));
  if (w.dims.size() != 2 + spatial_rank)
    throw ValidationError("Conv '" + node.name + "' weight rank mismatch");
  s.out_channels = w.dims[0];
  if (s.out_channels % s.groups != 0)
    throw ValidationError("Conv '" + node.name + "': groups do not divide output channels");
  if (w.dims[1] != s.group_width())
    throw ValidationError("Conv '" + node.name + "' weight has per-group width " +
                          std::to_string(w.dims[1]) + ", expected " +
                          std::to_string(s.group_width()));
  for (std::size_t i = 0; i < spatial_rank; ++i) {
    if (w.dims[2 + i] != s.kernel[i])
      throw ValidationError("Conv '" + node.name + "' weight spatial dims disagree with kernel attr");
    if (s.stride[i] < 1) throw ValidationError("Conv '" + node.name + "' stride must be >= 1");
    const std::int64_t out = (s.in_spatial[i] + 2 * s.pad[i] - s.kernel[i]) / s.stride[i] + 1;
    if (out < 1)
      throw ValidationError("Conv '" + node.name + "' produces empty spatial dim " +
                            std::to_string(i));
    s.out_spatial.push_back(out);
  }
  return s;
}

namespace {

void expect_rank(const TensorSpec& t, std::size_t rank, const std::string& ctx) {
  if (t.dims.size() != rank)
    throw ValidationError(ctx + ": tensor '" + t.name + "' has rank " +
                          std::to_string(t.dims.size()) + ", expected " + std::to_string(rank));
}

std::vector<std::int64_t> infer_node_output(const Node& node, const Graph& g,
                                            std::size_t out_idx) {
  auto in = [&](std::size_t i) -> const TensorSpec& {
    if (i >= node.inputs.size())
      throw ValidationError("node '" + node.name + "' missing input #" + std::to_string(i));
    const auto& spec = g.tensor(node.inputs[i]);
    if (spec.dims.empty())
      throw ValidationError("node '" + node.name + "' input '" + spec.name +
                            "' has no dims yet (graph not topologically processed?)");
    return spec;
  };

  switch (node.op) {
    case Op::FC: {
      const auto& x = in(0);
      const auto& w = in(1);
      expect_rank(x, 2, "FC activation");
      expect_rank(w, 2, "FC weight");
      // X [M,K] x W [N,K] -> [M,N]; W stored output-major.
      if (x.dims[1] != w.dims[1])
        throw ValidationError("FC '" + node.name + "' inner dims disagree: X is [" +
                              std::to_string(x.dims[0]) + "," + std::to_string(x.dims[1]) +
                              "], W is [" + std::to_string(w.dims[0]) + "," +
                              std::to_string(w.dims[1]) + "] (expected [N," +
                              std::to_string(x.dims[1]) + "])");
      if (node.inputs.size() > 2) {
        const auto& b = in(2);
        if (b.dims.size() != 1 || b.dims[0] != w.dims[0])
          throw ValidationError("FC '" + node.name + "' bias must be [N]");
      }
      return {x.dims[0], w.dims[0]};
    }
    case Op::Conv: {
      const ConvSpec s = conv_spec(node, g);
      if (node.inputs.size() > 2) {
        const auto& b = in(2);
        if (b.dims.size() != 1 || b.dims[0] != s.out_channels)
          throw ValidationError("Conv '" + node.name + "' bias must be [C_o]");
      }
      std::vector<std::int64_t> out = {s.batch, s.out_channels};
      out.insert(out.end(), s.out_spatial.begin(), s.out_spatial.end());
      return out;
    }
    case Op::SparseLengthsSum: {
      const auto& table = in(0);
      const auto& indices = in(1);
      const auto& lengths = in(2);
      expect_rank(table, 2, "SparseLengthsSum table");
      expect_rank(indices, 1, "SparseLengthsSum indices");
      expect_rank(lengths, 1, "SparseLengthsSum lengths");
      // Row-quantized u8 tables carry 8 trailing bytes of scale/bias per row.
      const std::int64_t d =
          table.dtype == DType::u8 ? table.dims[1] - 8 : table.dims[1];
      if (d < 1)
        throw ValidationError("SparseLengthsSum '" + node.name + "' table row too small");
      return {lengths.dims[0], d};
    }
    case Op::Concat: {
      const auto& first = in(0);
      const auto axis = node.attr_int("axis", 1);
      if (axis < 0 || axis >= static_cast<std::int64_t>(first.dims.size()))
        throw ValidationError("Concat '" + node.name + "' axis out of range");
      auto out = first.dims;
      for (std::size_t i = 1; i < node.inputs.size(); ++i) {
        const auto& t = in(i);
        if (t.dims.size() != first.dims.size())
          throw ValidationError("Concat '" + node.name + "' rank mismatch on '" + t.name + "'");
        for (std::size_t d = 0; d < t.dims.size(); ++d) {
          if (static_cast<std::int64_t>(d) == axis) continue;
          if (t.dims[d] != first.dims[d])
            throw ValidationError("Concat '" + node.name + "' non-axis dims disagree");
        }
        out[axis] += t.dims[axis];
      }
      return out;
    }
    case Op::Split: {
      const auto& x = in(0);
      const auto axis = node.attr_int("axis", 1);
      if (axis < 0 || axis >= static_cast<std::int64_t>(x.dims.size()))
        throw ValidationError("Split '" + node.name + "' axis out of range");
      std::vector<std::int64_t> sizes;
      if (node.has_attr("split")) {
        sizes = node.attr_ints("split", node.outputs.size());
      } else {
        const auto parts = static_cast<std::int64_t>(node.outputs.size());
        if (x.dims[axis] % parts != 0)
          throw ValidationError("Split '" + node.name + "' cannot split axis evenly");
        sizes.assign(parts, x.dims[axis] / parts);
      }
      std::int64_t total = 0;
      for (auto s : sizes) total += s;
      if (total != x.dims[axis])
        throw ValidationError("Split '" + node.name + "' split sizes do not cover axis");
      auto out = x.dims;
      out[axis] = sizes[out_idx];
      return out;
    }
    case Op::Flatten: {
      const auto& x = in(0);
      const auto axis = node.attr_int("axis", 1);
      if (axis < 0 || axis > static_cast<std::int64_t>(x.dims.size()))
        throw ValidationError("Flatten '" + node.name + "' axis out of range");
      std::int64_t outer = 1, inner = 1;
      for (std::int64_t d = 0; d < static_cast<std::int64_t>(x.dims.size()); ++d)
        (d < axis ? outer : inner) *= x.dims[d];
      return {outer, inner};
    }
    case Op::BatchMatMul: {
      const auto& a = in(0);
      const auto& b = in(1);
      if (a.dims.size() < 2 || a.dims.size() != b.dims.size())
        throw ValidationError("BatchMatMul '" + node.name + "' rank mismatch");
      for (std::size_t d = 0; d + 2 < a.dims.size(); ++d)
        if (a.dims[d] != b.dims[d])
          throw ValidationError("BatchMatMul '" + node.name + "' batch dims disagree");
      const auto r = a.dims.size();
      if (a.dims[r - 1] != b.dims[r - 2])
        throw ValidationError("BatchMatMul '" + node.name + "' inner dims disagree");
      auto out = a.dims;
      out[r - 1] = b.dims[r - 1];
      return out;
    }
    case Op::BatchGather: {
      const auto& data = in(0);
      const auto& idx = in(1);
      if (data.dims.size() < 2)
        throw ValidationError("BatchGather '" + node.name + "' data rank must be >= 2");
      expect_rank(idx, 1, "BatchGather indices");
      auto out = data.dims;
      out[1] = idx.dims[0];
      return out;
    }
    case Op::Add:
    case Op::Mul: {
      const auto& a = in(0);
      const auto& b = in(1);
      if (a.dims != b.dims)
        throw ValidationError(std::string(op_name(node.op)) + " '" + node.name +
                              "' operand dims disagree");
      return a.dims;
    }
    case Op::Sum: {
      const auto& first = in(0);
      for (std::size_t i = 1; i < node.inputs.size(); ++i)
        if (in(i).dims != first.dims)
          throw ValidationError("Sum '" + node.name + "' operand dims disagree");
      return first.dims;
    }
    case Op::SpatialBN: {
      const auto& x = in(0);
      if (x.dims.size() < 2)
        throw ValidationError("SpatialBN '" + node.name + "' needs [B,C,...] input");
      for (std::size_t i = 1; i <= 4 && i < node.inputs.size(); ++i) {
        const auto& p = in(i);
        if (p.dims.size() != 1 || p.dims[0] != x.dims[1])
          throw ValidationError("SpatialBN '" + node.name + "' param '" + p.name +
                                "' must be [C]");
      }
      return x.dims;
    }
    case Op::Relu:
    case Op::Clip:
    case Op::Softmax:
      return in(0).dims;
  }
  throw ValidationError("unreachable op in shape inference");
}

}  // namespace

Graph infer_shapes(const Graph& g) {
  Graph out = g;
  for (int i : out.topo_order()) {
    const Node& node = out.nodes[i];
    for (std::size_t oi = 0; oi < node.outputs.size(); ++oi) {
      auto dims = infer_node_output(node, out, oi);
      auto& spec = out.tensor(node.outputs[oi]);
      if (!spec.dims.empty() && spec.dims != dims) {
        std::ostringstream msg;
        msg << "tensor '" << spec.name << "' declared dims disagree with inferred dims [";
        for (std::size_t d = 0; d < dims.size(); ++d) msg << (d ? "," : "") << dims[d];
        msg << "]";
        throw ValidationError(msg.str());
      }
      spec.dims = std::move(dims);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON model file
// ---------------------------------------------------------------------------

namespace {

using ordered_json = nlohmann::ordered_json;

AttrValue attr_from_json(const nlohmann::json& j, const std::string& ctx) {
  if (j.is_number_integer() || j.is_number_unsigned()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_array()) {
    std::vector<std::int64_t> v;
    for (const auto& e : j) {
      if (!e.is_number_integer() && !e.is_number_unsigned())
        throw ParseError(ctx + ": attr lists must hold integers");
      v.push_back(e.get<std::int64_t>());
    }
    return v;
  }
  throw ParseError(ctx + ": attr must be a number or integer list");
}

ordered_json attr_to_json(const AttrValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::vector<std::int64_t>>(v);
}

}  // namespace

Graph model_from_json_text(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }

  try {
    if (!j.is_object()) throw ParseError(origin + ": model file must be a JSON object");
    if (j.value("version", 0) != 1)
      throw ParseError(origin + ": unsupported model version");

    Graph g;
    for (const auto& jt : j.at("tensors")) {
      TensorSpec spec;
      spec.name = jt.at("name").get<std::string>();
      for (const auto& d : jt.at("dims")) spec.dims.push_back(d.get<std::int64_t>());
      spec.dtype = dtype_from_name(jt.at("dtype").get<std::string>());
      if (!g.tensors.emplace(spec.name, spec).second)
        throw ParseError(origin + ": duplicate tensor '" + spec.name + "'");
    }
    for (const auto& w : j.at("weights")) g.weights.insert(w.get<std::string>());
    for (const auto& i : j.at("inputs")) g.inputs.push_back(i.get<std::string>());
    for (const auto& o : j.at("outputs")) g.outputs.push_back(o.get<std::string>());
    for (const auto& jn : j.at("nodes")) {
      Node node;
      node.name = jn.at("name").get<std::string>();
      node.op = op_from_name(jn.at("op").get<std::string>());
      for (const auto& i : jn.at("inputs")) node.inputs.push_back(i.get<std::string>());
      for (const auto& o : jn.at("outputs")) node.outputs.push_back(o.get<std::string>());
      if (jn.contains("attrs"))
        for (const auto& [k, v] : jn.at("attrs").items())
          node.attrs.emplace(k, attr_from_json(v, origin + ": node '" + node.name + "'"));
      g.nodes.push_back(std::move(node));
    }

    auto diags = validate_graph(g);
    if (!diags.empty()) {
      std::string msg = origin + ": invalid model:";
      for (const auto& d : diags) msg += "\n  [" + d.code + "] " + d.message;
      throw ValidationError(msg);
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

std::string model_to_json_text(const Graph& g) {
  ordered_json j;
  j["version"] = 1;
  j["tensors"] = ordered_json::array();
  for (const auto& [name, spec] : g.tensors) {
    ordered_json jt;
    jt["name"] = name;
    jt["dims"] = spec.dims;
    jt["dtype"] = dtype_name(spec.dtype);
    j["tensors"].push_back(std::move(jt));
  }
  j["weights"] = std::vector<std::string>(g.weights.begin(), g.weights.end());
  j["inputs"] = g.inputs;
  j["outputs"] = g.outputs;
  j["nodes"] = ordered_json::array();
  for (const auto& node : g.nodes) {
    ordered_json jn;
    jn["name"] = node.name;
    jn["op"] = std::string(op_name(node.op));
    jn["inputs"] = node.inputs;
    jn["outputs"] = node.outputs;
    if (!node.attrs.empty()) {
      ordered_json ja = ordered_json::object();
      for (const auto& [k, v] : node.attrs) ja[k] = attr_to_json(v);
      jn["attrs"] = std::move(ja);
    }
    j["nodes"].push_back(std::move(jn));
  }
  return j.dump(2) + "\n";
}

Graph load_model(const std::string& path, const std::optional<std::string>& weights_path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  Graph g = model_from_json_text(ss.str(), path);
  if (weights_path) attach_weights(g, load_weight_container(*weights_path));
  return g;
}

void save_model(const Graph& g, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write model file '" + path + "'");
  f << model_to_json_text(g);
  if (!f) throw IoError("failed writing model file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Binary weight container: magic "DLIW", u32 version, u32 count, entries.
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& buf, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > buf.size()) throw ParseError(path + ": truncated weight container");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace

std::map<std::string, Tensor> load_weight_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weight container '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();

  std::size_t pos = 0;
  if (buf.size() < 4 || buf.compare(0, 4, "DLIW") != 0)
    throw ParseError(path + ": bad magic, not a DLIW container");
  pos = 4;
  const auto version = get_le<std::uint32_t>(buf, pos, path);
  if (version != 1) throw ParseError(path + ": unsupported container version");
  const auto count = get_le<std::uint32_t>(buf, pos, path);

  std::map<std::string, Tensor> entries;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = get_le<std::uint16_t>(buf, pos, path);
    if (pos + name_len > buf.size()) throw ParseError(path + ": truncated entry name");
    std::string name = buf.substr(pos, name_len);
    pos += name_len;
    const auto dtype_code = get_le<std::uint8_t>(buf, pos, path);
    if (dtype_code > 4) throw ParseError(path + ": bad dtype code");
    const auto ndim = get_le<std::uint8_t>(buf, pos, path);
    std::vector<std::int64_t> dims;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const auto v = get_le<std::uint64_t>(buf, pos, path);
      if (v == 0 || v > (1ull << 40)) throw ParseError(path + ": implausible dim");
      dims.push_back(static_cast<std::int64_t>(v));
    }
    Tensor t(static_cast<DType>(dtype_code), dims);
    if (pos + t.nbytes() > buf.size()) throw ParseError(path + ": truncated entry data");
    std::memcpy(t.raw().data(), buf.data() + pos, t.nbytes());
    pos += t.nbytes();
    if (!entries.emplace(std::move(name), std::move(t)).second)
      throw ParseError(path + ": duplicate entry");
  }
  return entries;
}

void save_weight_container(const std::map<std::string, Tensor>& entries,
                           const std::string& path) {
  std::string out = "DLIW";
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > 0xFFFF) throw ValidationError("weight name too long: " + name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims().size()));
    for (auto d : t.dims()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    out.append(reinterpret_cast<const char*>(t.raw().data()), t.nbytes());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write weight container '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing weight container '" + path + "'");
}

void attach_weights(Graph& g, const std::map<std::string, Tensor>& entries) {
  for (const auto& [name, t] : entries) {
    if (!g.is_weight(name))
      throw ValidationError("container entry '" + name + "' is not a declared weight");
    const auto& spec = g.tensor(name);
    if (!spec.dims.empty() && spec.dims != t.dims())
      throw ValidationError("weight '" + name + "' dims disagree with model");
    if (spec.dtype != t.dtype())
      throw ValidationError("weight '" + name + "' dtype disagrees with model");
    g.weight_data[name] = t;
  }
}

}  // namespace inferlab::ir
