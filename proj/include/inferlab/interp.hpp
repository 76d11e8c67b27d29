#pragma once

#include "inferlab/cost.hpp"
#include "inferlab/ir.hpp"
#include "inferlab/quant.hpp"
#include "inferlab/roofline.hpp"

namespace inferlab::interp {

struct TensorMeta {
  std::string name;
  std::vector<std::int64_t> dims;
  DType dtype = DType::f32;
};

// One record per executed node, in execution order.
struct ObserverRecord {
  std::string node;
  std::string op;
  double wall_s = 0.0;
  double flops = 0.0;
  double weight_bytes = 0.0;
  double act_bytes = 0.0;
  double attained_flops = 0.0;  // flops / wall_s when both are positive
  roofline::Bound predicted_bound = roofline::Bound::compute;
  std::int64_t saturations = 0;  // i8-acc16 path only, 0 elsewhere
  std::vector<TensorMeta> inputs;
  std::vector<TensorMeta> outputs;
};

// Hooks fire on the executing thread, before and after each node. Observers
// see values by const reference only, so attaching them cannot change any
// output bit.
class Observer {
 public:
  virtual ~Observer() = default;
  virtual void on_node_start(const ir::Node& node) { (void)node; }
  virtual void on_node_end(const ObserverRecord& record) { (void)record; }
};

struct OpShare {
  std::string op;
  double total_s = 0.0;
  double share = 0.0;
};

struct ExecutionReport {
  std::vector<ObserverRecord> records;
  double total_s = 0.0;
  double total_flops = 0.0;
  // Cost of an empty timed section, measured next to the run and reported
  // rather than subtracted.
  double observer_overhead_s = 0.0;

  // Per-op-type time shares, largest first. Shares sum to 1 for non-empty
  // reports; when no time was collected the share falls back to record counts
  // so the aggregation stays meaningful.
  std::vector<OpShare> op_shares() const;
};

enum class Backend : std::uint8_t { f32, quantized };

struct RunOptions {
  Backend backend = Backend::f32;
  const quant::QuantPlan* plan = nullptr;  // required for the quantized backend
  roofline::AcceleratorConfig host;        // ceilings behind predicted_bound
  int threads = 1;
  bool collect_timing = true;  // false zeroes wall_s/attained for reproducible output
};

struct RunResult {
  std::map<std::string, Tensor> outputs;  // graph outputs only
  ExecutionReport report;
};

// Topological single-threaded execution (kernels may parallelize rows
// internally). Outputs are deterministic per backend; a plan that quantizes
// zero layers makes the quantized backend bitwise equal to f32.
RunResult run(const ir::Graph& g, const std::map<std::string, Tensor>& inputs,
              const RunOptions& opts = {}, const std::vector<Observer*>& observers = {});

struct Deviation {
  std::string node;
  std::string op;
  double measured_s = 0.0;
  double predicted_s = 0.0;
  double ratio = 0.0;    // measured / predicted; 0 when nothing was predicted
  bool flagged = false;  // ratio outside [band_lo, band_hi]
};

// Roofline prediction per record under `cfg`: max(flops/peak, bytes/dram_bw).
// flops=0 ops predict from bytes alone.
std::vector<Deviation> compare_predicted_measured(const ExecutionReport& report,
                                                  const roofline::AcceleratorConfig& cfg,
                                                  double band_lo = 0.1, double band_hi = 10.0);

// One JSON object per line, execution order.
std::string records_jsonl(const ExecutionReport& report);
// Header op_type,total_s,share; rows ordered by share descending.
std::string aggregation_csv(const ExecutionReport& report);
// Header node,op,measured_s,predicted_s,ratio,flagged.
std::string deviation_csv(const std::vector<Deviation>& rows);

}  // namespace inferlab::interp
