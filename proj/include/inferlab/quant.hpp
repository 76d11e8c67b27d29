#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "inferlab/ir.hpp"
#include "inferlab/kernels.hpp"
#include "inferlab/tensor.hpp"

namespace inferlab::quant {

// Affine quantization parameters for one tensor slice:
//   real = (q - zero_point) * scale.
struct QParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  std::int32_t qmin = 0;
  std::int32_t qmax = 255;
  bool symmetric = false;
  DType target = DType::u8;
};

// Range selection from observed [min, max]. The range is first widened to
// include zero so that zero is exactly representable. Degenerate all-equal
// ranges pin scale to 1 (zero_point = qmin asymmetric, 0 symmetric signed).
QParams choose_qparams_minmax(double min, double max, DType target, bool symmetric);

// Uniform-bin histogram of observed values; the calibration statistic.
struct Histogram {
  double min = 0.0;
  double max = 0.0;
  std::vector<std::int64_t> counts;

  static Histogram collect(std::span<const float> values, int bins = 2048);
  // Accumulate more observations into fixed [min,max] edges.
  void add(std::span<const float> values);
  void merge(const Histogram& other);  // identical edges required

  int bins() const { return static_cast<int>(counts.size()); }
  double bin_width() const { return (max - min) / bins(); }
  double edge(int i) const { return min + bin_width() * i; }
  std::int64_t total() const;
};

// Expected squared error of clipping to [lo, hi] and uniform-quantizing with
// `levels` steps, under a within-bin uniform density model: in-range mass
// contributes scale²/12, clipped mass integrates (x - edge)².
double estimate_l2_error(const Histogram& h, double lo, double hi, int levels);

// Clip-range selection minimizing estimate_l2_error. Asymmetric ranges scan
// all bin-edge pairs (widened to include zero); symmetric ranges scan [-t, t]
// over a uniform magnitude grid. Ties break toward the smallest range, then
// the smallest lower edge.
QParams choose_qparams_l2(const Histogram& h, DType target, bool symmetric);

// The selection plus the scanned range and its error, before zero-point
// rounding; `error` is estimate_l2_error(h, lo, hi, levels).
struct L2Selection {
  QParams params;
  double lo = 0.0;
  double hi = 0.0;
  double error = 0.0;
  int levels = 0;
};
L2Selection choose_qparams_l2_detail(const Histogram& h, DType target, bool symmetric);

struct QGranularity {
  enum class Kind : std::uint8_t { per_tensor, per_channel, per_row, per_group };
  Kind kind = Kind::per_tensor;
  std::int64_t axis = 0;        // per_channel / per_group
  std::int64_t group_size = 0;  // per_group: consecutive channels sharing params

  static QGranularity per_tensor() { return {}; }
  static QGranularity per_channel(std::int64_t axis) {
    return {Kind::per_channel, axis, 0};
  }
  static QGranularity per_row() { return {Kind::per_row, 0, 0}; }
  static QGranularity per_group(std::int64_t axis, std::int64_t group_size) {
    return {Kind::per_group, axis, group_size};
  }

  // Number of parameter slices for a tensor of the given dims.
  std::int64_t slices(const std::vector<std::int64_t>& dims) const;
  // Parameter slice owning flat element index i.
  std::int64_t slice_of(std::int64_t flat, const std::vector<std::int64_t>& dims) const;
};

std::string granularity_to_string(const QGranularity& g);
QGranularity granularity_from_string(const std::string& s);

// Per-slice range selection: one QParams per granularity slice.
std::vector<QParams> choose_qparams_tensor(const Tensor& x, const QGranularity& gran,
                                           DType target, bool symmetric);

// xq = clamp(round_half_to_even(x / scale) + zero_point, qmin, qmax).
Tensor quantize_affine(const Tensor& x, std::span<const QParams> params,
                       const QGranularity& gran);
Tensor dequantize_affine(const Tensor& xq, std::span<const QParams> params,
                         const QGranularity& gran);

// W = main + outliers with main in the 7-bit band [-64, 63]; the residual is
// sparse and exact. Accepts i8 weights or i32 unclamped integer weights (the
// latter lets outliers beyond the 8-bit range ride the residual losslessly).
struct OutlierSplit {
  Tensor main;                       // i8, entries in [-64, 63]
  kernels::SparseResidual outliers;  // i32 residual, main + outliers == input
  double density = 0.0;              // nnz / size
};
OutlierSplit split_outliers(const Tensor& wq);

// Tensor name -> (min, max) observed range.
using RangeMap = std::map<std::string, std::pair<double, double>>;

// Narrows ranges using consumer structure: a tensor consumed only by Relu
// drops its negative range; Clip consumers intersect with [lo, hi]. Runs to
// a fixed point; never widens.
RangeMap net_aware_narrow(const ir::Graph& g, RangeMap ranges);

// f32 [R, D] -> u8 [R, D+8]; per row scale = (max-min)/255 (1 if constant),
// bias = min, with the f32 scale then bias appended to each row.
Tensor quantize_embedding_rows(const Tensor& table);

// Per-layer quantization decisions, serializable as the plan file.
struct LayerPlan {
  std::string name;
  bool quantize = true;
  QGranularity granularity;
  bool symmetric = false;
  std::vector<QParams> params;  // weight params, one per slice
  double act_scale = 1.0;       // input activation params for the layer
  std::int32_t act_zero_point = 0;
  double out_scale = 0.0;  // >0 requantizes the output to u8 at this scale
  std::int32_t out_zero_point = 0;
  bool split_outliers = false;  // route weights through the 7-bit main + sparse path
};

struct QuantPlan {
  std::vector<LayerPlan> layers;
  const LayerPlan* find(const std::string& name) const;
};

std::string plan_to_json_text(const QuantPlan& plan);
QuantPlan plan_from_json_text(const std::string& text);
void save_plan(const std::string& path, const QuantPlan& plan);
QuantPlan load_plan(const std::string& path);

}  // namespace inferlab::quant
