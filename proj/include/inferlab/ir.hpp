#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "inferlab/common.hpp"
#include "inferlab/tensor.hpp"

namespace inferlab::ir {

enum class Op : std::uint8_t {
  FC,
  Conv,
  SparseLengthsSum,
  Concat,
  Split,
  Flatten,
  BatchMatMul,
  BatchGather,
  Relu,
  Add,
  Mul,
  Clip,
  Sum,
  SpatialBN,
  Softmax,
};

std::string_view op_name(Op op);
Op op_from_name(std::string_view name);  // throws ParseError on unknown ops

using AttrValue = std::variant<std::int64_t, double, std::vector<std::int64_t>>;
using AttrMap = std::map<std::string, AttrValue>;

struct TensorSpec {
  std::string name;
  std::vector<std::int64_t> dims;  // may be empty until shape inference
  DType dtype = DType::f32;

  std::size_t elem_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
  std::size_t nbytes() const { return elem_count() * dtype_size(dtype); }
};

struct Node {
  std::string name;
  Op op = Op::FC;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  AttrMap attrs;

  bool has_attr(const std::string& key) const { return attrs.count(key) != 0; }
  std::int64_t attr_int(const std::string& key) const;
  std::int64_t attr_int(const std::string& key, std::int64_t fallback) const;
  double attr_double(const std::string& key, double fallback) const;
  // Scalar attrs promote to a repeated list of the requested length.
  std::vector<std::int64_t> attr_ints(const std::string& key, std::size_t expect) const;
};

struct Graph {
  std::vector<Node> nodes;
  std::map<std::string, TensorSpec> tensors;  // name-sorted, the canonical order
  std::set<std::string> weights;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, Tensor> weight_data;

  bool is_weight(const std::string& name) const { return weights.count(name) != 0; }
  bool is_input(const std::string& name) const;
  bool is_output(const std::string& name) const;
  const TensorSpec& tensor(const std::string& name) const;
  TensorSpec& tensor(const std::string& name);

  // Producing node index per tensor, -1 for inputs/weights. Built on demand.
  std::map<std::string, int> producers() const;
  // Consumer node indices per tensor, in node order.
  std::map<std::string, std::vector<int>> consumers() const;
  // Node indices in topological order; throws ValidationError on cycles.
  std::vector<int> topo_order() const;
};

struct Diagnostic {
  std::string code;     // e.g. "dangling-ref", "cycle", "multiple-producers"
  std::string subject;  // node or tensor name
  std::string message;
};

// Structural checks: references resolve, single producer per non-input tensor,
// weights are never produced, DAG, dims positive where present.
std::vector<Diagnostic> validate_graph(const Graph& g);

// Fills intermediate/output dims from inputs and weights. Declared dims that
// disagree with the inferred ones are an inconsistency error. Idempotent.
Graph infer_shapes(const Graph& g);

Graph load_model(const std::string& path,
                 const std::optional<std::string>& weights_path = std::nullopt);
Graph model_from_json_text(const std::string& text, const std::string& origin = "<string>");
std::string model_to_json_text(const Graph& g);
void save_model(const Graph& g, const std::string& path);

// Binary weight container ("DLIW"), little-endian.
std::map<std::string, Tensor> load_weight_container(const std::string& path);
void save_weight_container(const std::map<std::string, Tensor>& entries,
                           const std::string& path);
void attach_weights(Graph& g, const std::map<std::string, Tensor>& entries);

// Normalized view of a Conv node; shared by shape inference, cost and kernels.
struct ConvSpec {
  std::int64_t batch = 1;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t groups = 1;
  std::vector<std::int64_t> in_spatial;
  std::vector<std::int64_t> out_spatial;
  std::vector<std::int64_t> kernel;
  std::vector<std::int64_t> stride;
  std::vector<std::int64_t> pad;

  std::int64_t group_width() const { return in_channels / groups; }  // d
  std::int64_t spatial_rank() const { return static_cast<std::int64_t>(kernel.size()); }
  std::int64_t out_positions() const {  // H_o*W_o(*F_o)
    std::int64_t p = 1;
    for (auto d : out_spatial) p *= d;
    return p;
  }
  std::int64_t kernel_volume() const {
    std::int64_t p = 1;
    for (auto d : kernel) p *= d;
    return p;
  }
  bool depthwise() const { return groups == in_channels && groups == out_channels; }
};

ConvSpec conv_spec(const Node& node, const Graph& g);

}  // namespace inferlab::ir
