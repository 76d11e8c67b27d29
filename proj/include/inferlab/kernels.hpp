#pragma once

#include <optional>

#include "inferlab/ir.hpp"
#include "inferlab/tensor.hpp"

namespace inferlab::kernels {

struct TileParams {
  std::int64_t tile_n = 8;   // rows of W ([N,K] layout) per tile
  std::int64_t tile_k = 32;  // reduction elements per tile
};

// Weight matrix in tiled storage: tiles laid out row-block-major, elements
// within a tile row-major (n outer, k inner), partial edge tiles stored
// compactly. Pack once, reuse across any number of GEMM calls.
class PackedMatrix {
 public:
  static PackedMatrix pack(const Tensor& w, TileParams tp = {}, std::int32_t zp_w = 0);

  Tensor unpack() const;

  std::int64_t n() const { return n_; }
  std::int64_t k() const { return k_; }
  DType dtype() const { return dtype_; }
  std::int32_t zp_w() const { return zp_w_; }
  const TileParams& tiles() const { return tp_; }

  // Σ_k W[n,k], present for i8 weights; feeds the asymmetric-activation
  // zero-point correction.
  const std::vector<std::int32_t>& col_sums() const { return col_sums_; }

  // Storage offset of logical element [n,k] in the tiled layout.
  std::size_t index(std::int64_t n, std::int64_t k) const;

  template <typename T>
  T at(std::int64_t n, std::int64_t k) const {
    return reinterpret_cast<const T*>(storage_.data())[index(n, k)];
  }
  std::span<const std::byte> storage() const { return storage_; }

 private:
  std::int64_t n_ = 0;
  std::int64_t k_ = 0;
  TileParams tp_;
  DType dtype_ = DType::f32;
  std::int32_t zp_w_ = 0;
  std::vector<std::byte> storage_;
  std::vector<std::int32_t> col_sums_;
};

// W_outlier compressed along the reduction dimension: per output row of the
// [N,K] weight, a strictly-k-ascending list of residual entries.
struct SparseResidual {
  struct Entry {
    std::int64_t k;
    std::int32_t value;
  };
  std::int64_t n = 0;
  std::int64_t k = 0;
  std::vector<std::vector<Entry>> rows;  // size n

  static SparseResidual from_dense(const Tensor& outliers);  // i32 [N,K]
  Tensor densify() const;
  std::int64_t nnz() const;
};

// Epilogue fused behind a GEMM. Stage order: bias (integer domain), rescale,
// Relu, then the terminal representation. Exactly one terminal.
struct OutputPipeline {
  enum class Terminal : std::uint8_t { i32_pass, u8_requant, f32_out };

  Terminal terminal = Terminal::i32_pass;
  std::optional<std::vector<std::int32_t>> bias_i32;  // [N], scale s_a*s_w
  std::optional<std::vector<float>> bias_f32;         // [N], float kernels only
  bool relu = false;
  // u8_requant: s_a*s_w/s_out; f32_out: s_a*s_w. Size 1 (per tensor) or N
  // (per output channel).
  std::vector<double> rescale;
  std::int32_t zp_out = 0;
};

// acc: i32 [M,N]. Bias lands in the i32 domain before rescaling.
Tensor apply_output_pipeline(const Tensor& acc, const OutputPipeline& pipe);

// C = A·Wᵀ, f32 with fully specified accumulation order (k ascending), so
// results are bit-stable across runs, tile shapes and thread counts.
Tensor gemm_fp32(const Tensor& a, const PackedMatrix& b,
                 const OutputPipeline* pipe = nullptr, int threads = 1);

// Same arithmetic as gemm_fp32 on fp16_to_fp32(weights): storage is halved,
// compute stays f32.
Tensor gemm_fp16w(const Tensor& a, const PackedMatrix& b,
                  const OutputPipeline* pipe = nullptr, int threads = 1);

// u8 activations × i8 weights, exact i32 accumulation, zero-point corrections
// from packed column sums and per-row activation sums.
Tensor gemm_u8i8_acc32(const Tensor& a, std::int32_t zp_a, const PackedMatrix& b,
                       const OutputPipeline& pipe, int threads = 1);

struct Acc16Result {
  Tensor acc;  // i32 [M,N], zero-point corrected, pre-pipeline
  std::int64_t saturation_count = 0;
};

// Emulated i8-acc16: adjacent-k pair products (exact, |pair| ≤ 255·64·2 < 2¹⁵
// because weights are 7-bit), saturating i16 accumulation, spill to i32 every
// `spill_period` multiply-accumulates. Weights must lie in [−64,63].
Acc16Result gemm_u8i8_acc16(const Tensor& a, std::int32_t zp_a, const PackedMatrix& b_main,
                            int spill_period = 256);

// Σ_k (a[m,k] − zp_a)·R[n,k], exact i32: the outlier completion of acc16.
Tensor spmm_outlier(const Tensor& a, std::int32_t zp_a, const SparseResidual& r);

// Patch matrix [B·out_positions, group_width·kernel_volume] for one group.
// Padding cells hold `pad_value` (the zero point for quantized inputs).
Tensor im2col(const Tensor& input, const ir::ConvSpec& spec, std::int64_t group,
              double pad_value = 0.0);

// Whole convolution via per-group im2col + GEMM. Weights [C_o, d, K1, K2...].
Tensor conv_im2col_f32(const Tensor& input, const Tensor& weights, const ir::ConvSpec& spec,
                       const OutputPipeline* pipe = nullptr);
Tensor conv_im2col_u8(const Tensor& input, std::int32_t zp_a, const Tensor& weights,
                      std::int32_t zp_w, const ir::ConvSpec& spec, const OutputPipeline& pipe);

// Depthwise convolution without materializing im2col; bitwise equal to the
// im2col path (it performs the identical adds in the identical order).
Tensor depthwise_conv_direct_f32(const Tensor& input, const Tensor& weights,
                                 const ir::ConvSpec& spec,
                                 const OutputPipeline* pipe = nullptr);
Tensor depthwise_conv_direct_u8(const Tensor& input, std::int32_t zp_a, const Tensor& weights,
                                std::int32_t zp_w, const ir::ConvSpec& spec,
                                const OutputPipeline& pipe);

// Segmented row sums. f32 tables sum directly; row-quantized u8 tables
// ([R, D+8], trailing f32 scale then bias per row) dequantize per row first.
Tensor sparse_lengths_sum(const Tensor& table, const Tensor& indices, const Tensor& lengths);

// Elementwise converters used for fp16 weight storage.
Tensor tensor_to_fp16(const Tensor& f32);
Tensor tensor_from_fp16(const Tensor& f16);

}  // namespace inferlab::kernels
