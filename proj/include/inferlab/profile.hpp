#pragma once

// Calibration-driven quantization planning and per-layer error profiling.
//
// The pipeline mirrors how a post-training quantization pass is actually run:
// execute the f32 model over a calibration set to observe activation ranges,
// narrow those ranges using consumer structure, propose a full-quantization
// plan, measure each layer's error in isolation, and finally fall back to f32
// wherever the error exceeds a threshold.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "inferlab/interp.hpp"
#include "inferlab/ir.hpp"
#include "inferlab/quant.hpp"
#include "inferlab/tensor.hpp"

namespace inferlab::profile {

// One calibration item: graph input name -> tensor.
using Batch = std::map<std::string, Tensor>;

// Activation statistics observed while running the f32 backend over the
// calibration set. Covers every f32 graph input and node output; values are
// accumulated in batch order, so the statistics are deterministic.
struct CalibrationStats {
  quant::RangeMap ranges;
  std::map<std::string, quant::Histogram> histograms;
  std::int64_t batches = 0;
};

CalibrationStats calibrate(const ir::Graph& g, std::span<const Batch> batches,
                           int bins = 2048);

struct ProposeOptions {
  quant::QGranularity granularity = quant::QGranularity::per_channel(0);
  bool symmetric = true;  // required for sliced granularities (uniform zero point)
  // FC layers route weights through the 7-bit main + sparse residual path;
  // their scale is then chosen from the weight histogram (L2-optimal) instead
  // of min/max, since the residual absorbs the clipped tail exactly.
  bool split_outliers = false;
};

// Full-quantization plan draft: every FC/Conv layer quantized, activation
// scales from the narrowed calibration ranges, weight params from the data.
quant::QuantPlan propose_plan(const ir::Graph& g, const CalibrationStats& stats,
                              const ProposeOptions& opts = {});

struct LayerError {
  std::string layer;
  double l2_rel = 0.0;   // ||quantized - f32|| / ||f32|| over the calibration set
  double sqnr_db = 0.0;  // 10·log10(||f32||² / ||quantized - f32||²)
};

struct ErrorReport {
  std::vector<LayerError> layers;  // one-at-a-time attribution, plan order
  LayerError end_to_end;           // the full plan, measured at the graph outputs
};

// Runs each planned layer quantized in isolation (everything else f32) and
// compares that layer's output against the f32 reference, accumulating over
// all calibration batches; then measures the plan as given end to end.
ErrorReport profile_quant_error(const ir::Graph& g, std::span<const Batch> calib,
                                const quant::QuantPlan& plan);

// Copies the plan, turning off quantization for every layer whose relative
// error exceeds the threshold. Monotone: lowering the threshold only grows
// the fallback set.
quant::QuantPlan selective_plan(const quant::QuantPlan& plan, const ErrorReport& report,
                                double threshold);

// "layer,l2_rel,sqnr_db" rows in report order, ending with the end_to_end row.
std::string error_report_csv(const ErrorReport& report);

}  // namespace inferlab::profile
