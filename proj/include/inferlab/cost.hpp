#pragma once

#include <array>

#include "inferlab/ir.hpp"

namespace inferlab::cost {

// Element sizes in bytes, indexed by DType; override to cost a graph "as if"
// stored at a different precision.
using DtypeSizes = std::array<std::size_t, 5>;

inline DtypeSizes default_dtype_sizes() {
  return {dtype_size(DType::f32), dtype_size(DType::f16), dtype_size(DType::u8),
          dtype_size(DType::i8), dtype_size(DType::i32)};
}

struct GemmShape {
  std::int64_t m = 1;
  std::int64_t n = 1;
  std::int64_t k = 1;
};

// A multiply-add counts as 2 flops; a bare add counts as 1.
struct OpCost {
  std::int64_t flops = 0;
  std::int64_t weight_bytes = 0;
  std::int64_t act_in_bytes = 0;
  std::int64_t act_out_bytes = 0;
  std::int64_t weight_elems = 0;
  std::int64_t act_in_elems = 0;
  std::int64_t act_out_elems = 0;

  std::int64_t total_bytes() const { return weight_bytes + act_in_bytes + act_out_bytes; }
  std::int64_t act_bytes() const { return act_in_bytes + act_out_bytes; }
};

// Traffic denominator for intensity. The paper counts elements, not bytes:
// weights_only gives ops/weight, acts_only gives ops/(input activation).
enum class IntensityMode { weights_only, acts_only, weights_and_acts };

GemmShape fc_gemm_shape(const ir::Node& node, const ir::Graph& g);
// Per-group shape; the op runs `groups` of these.
GemmShape conv_gemm_shape(const ir::ConvSpec& spec);

OpCost op_cost(const ir::Node& node, const ir::Graph& g,
               const DtypeSizes& sizes = default_dtype_sizes());

// flops per element of traffic; +inf when the op moves no data in that mode.
double arithmetic_intensity(const OpCost& c, IntensityMode mode);

// DRAM bandwidth needed to keep `peak_flops` busy at `intensity` flops/byte.
// Infinite intensity (all traffic on-chip) needs zero bandwidth.
double bandwidth_to_saturate(double intensity_flops_per_byte, double peak_flops);

// One row per node, declaration order:
// name,op,flops,weight_bytes,act_bytes,intensity_w,intensity_wa
std::string cost_csv(const ir::Graph& g, const DtypeSizes& sizes = default_dtype_sizes());

struct ModelAggregates {
  std::int64_t total_params = 0;  // unique weight tensors, counted once
  std::int64_t total_flops = 0;
  std::int64_t weight_traffic_elems = 0;  // per-op sums (weights recounted per use)
  std::int64_t act_traffic_elems = 0;
  double intensity_w = 0;
  double intensity_wa = 0;
};

ModelAggregates aggregate_costs(const ir::Graph& g,
                                const DtypeSizes& sizes = default_dtype_sizes());

}  // namespace inferlab::cost
