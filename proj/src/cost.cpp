#include "inferlab/cost.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace inferlab::cost {

namespace {

std::size_t size_of(const DtypeSizes& sizes, DType t) {
  return sizes[static_cast<std::size_t>(t)];
}

std::int64_t elem_product(const std::vector<std::int64_t>& dims) {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

GemmShape fc_gemm_shape(const ir::Node& node, const ir::Graph& g) {
  if (node.op != ir::Op::FC) throw ValidationError("fc_gemm_shape on non-FC node");
  const auto& x = g.tensor(node.inputs.at(0));
  const auto& w = g.tensor(node.inputs.at(1));
  return {x.dims.at(0), w.dims.at(0), x.dims.at(1)};
}

GemmShape conv_gemm_shape(const ir::ConvSpec& s) {
  return {s.batch * s.out_positions(), s.out_channels / s.groups,
          s.group_width() * s.kernel_volume()};
}

OpCost op_cost(const ir::Node& node, const ir::Graph& g, const DtypeSizes& sizes) {
  OpCost c;

  // Traffic: constant operands are weight traffic, the rest is activation
  // traffic. SparseLengthsSum replaces the table term with touched rows below.
  for (const auto& in : node.inputs) {
    const auto& spec = g.tensor(in);
    const auto elems = elem_product(spec.dims);
    const auto bytes = elems * static_cast<std::int64_t>(size_of(sizes, spec.dtype));
    if (g.is_weight(in)) {
      c.weight_elems += elems;
      c.weight_bytes += bytes;
    } else {
      c.act_in_elems += elems;
      c.act_in_bytes += bytes;
    }
  }
  for (const auto& out : node.outputs) {
    const auto& spec = g.tensor(out);
    c.act_out_elems += elem_product(spec.dims);
    c.act_out_bytes +=
        elem_product(spec.dims) * static_cast<std::int64_t>(size_of(sizes, spec.dtype));
  }

  switch (node.op) {
    case ir::Op::FC: {
      const GemmShape s = fc_gemm_shape(node, g);
      c.flops = 2 * s.m * s.k * s.n;
      break;
    }
    case ir::Op::Conv: {
      const ir::ConvSpec spec = ir::conv_spec(node, g);
      const GemmShape s = conv_gemm_shape(spec);
      c.flops = spec.groups * 2 * s.m * s.k * s.n;
      break;
    }
    case ir::Op::BatchMatMul: {
      const auto& a = g.tensor(node.inputs.at(0));
      const auto& b = g.tensor(node.inputs.at(1));
      const auto r = a.dims.size();
      std::int64_t batch = 1;
      for (std::size_t d = 0; d + 2 < r; ++d) batch *= a.dims[d];
      c.flops = 2 * batch * a.dims[r - 2] * a.dims[r - 1] * b.dims[r - 1];
      break;
    }
    case ir::Op::SparseLengthsSum: {
      const auto& table = g.tensor(node.inputs.at(0));
      const auto& indices = g.tensor(node.inputs.at(1));
      const auto& out = g.tensor(node.outputs.at(0));
      const std::int64_t lookups = elem_product(indices.dims);
      const std::int64_t d = out.dims.at(1);
      // Pooling is pure adds (1 flop each); weight traffic is the rows the
      // lookups actually touch, not the table size. Row-quantized u8 rows
      // carry 8 extra bytes of scale/bias but still D logical elements.
      c.flops = lookups * d;
      c.weight_elems = lookups * d;
      c.weight_bytes =
          lookups * table.dims.at(1) * static_cast<std::int64_t>(size_of(sizes, table.dtype));
      break;
    }
    case ir::Op::Concat:
    case ir::Op::Split:
    case ir::Op::Flatten:
    case ir::Op::BatchGather:
      c.flops = 0;
      break;
    case ir::Op::Relu:
    case ir::Op::Add:
    case ir::Op::Mul:
    case ir::Op::Clip:
    case ir::Op::Sum:
    case ir::Op::SpatialBN:
    case ir::Op::Softmax:
      c.flops = c.act_out_elems;
      break;
  }
  return c;
}

double arithmetic_intensity(const OpCost& c, IntensityMode mode) {
  std::int64_t denom = 0;
  switch (mode) {
    case IntensityMode::weights_only: denom = c.weight_elems; break;
    case IntensityMode::acts_only: denom = c.act_in_elems; break;
    case IntensityMode::weights_and_acts:
      denom = c.weight_elems + c.act_in_elems + c.act_out_elems;
      break;
  }
  if (denom == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(c.flops) / static_cast<double>(denom);
}

double bandwidth_to_saturate(double intensity_flops_per_byte, double peak_flops) {
  if (std::isinf(intensity_flops_per_byte)) return 0.0;
  if (!(intensity_flops_per_byte > 0.0))
    throw NumericError("bandwidth_to_saturate requires positive intensity");
  return peak_flops / intensity_flops_per_byte;
}

std::string cost_csv(const ir::Graph& g, const DtypeSizes& sizes) {
  std::ostringstream out;
  out << "name,op,flops,weight_bytes,act_bytes,intensity_w,intensity_wa\n";
  for (const auto& node : g.nodes) {
    const OpCost c = op_cost(node, g, sizes);
    out << node.name << ',' << ir::op_name(node.op) << ',' << c.flops << ','
        << c.weight_bytes << ',' << c.act_bytes() << ','
        << format_double(arithmetic_intensity(c, IntensityMode::weights_only)) << ','
        << format_double(arithmetic_intensity(c, IntensityMode::weights_and_acts)) << '\n';
  }
  return out.str();
}

ModelAggregates aggregate_costs(const ir::Graph& g, const DtypeSizes& sizes) {
  ModelAggregates a;
  for (const auto& w : g.weights) {
    const auto& spec = g.tensor(w);
    std::int64_t n = 1;
    for (auto d : spec.dims) n *= d;
    a.total_params += n;
  }
  for (const auto& node : g.nodes) {
    const OpCost c = op_cost(node, g, sizes);
    a.total_flops += c.flops;
    a.weight_traffic_elems += c.weight_elems;
    a.act_traffic_elems += c.act_in_elems + c.act_out_elems;
  }
  const auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? std::numeric_limits<double>::infinity()
                    : static_cast<double>(num) / static_cast<double>(den);
  };
  a.intensity_w = ratio(a.total_flops, a.weight_traffic_elems);
  a.intensity_wa = ratio(a.total_flops, a.weight_traffic_elems + a.act_traffic_elems);
  return a;
}

}  // namespace inferlab::cost
