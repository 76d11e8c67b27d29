#pragma once

#include "inferlab/cost.hpp"
#include "inferlab/ir.hpp"

namespace inferlab::roofline {

struct AcceleratorConfig {
  double peak_flops = 100e12;
  double dram_bw = 100e9;
  double onchip_capacity = 0;  // bytes; 0 means no on-chip residency
  double onchip_bw = 1e12;
};

AcceleratorConfig accel_from_json_text(const std::string& text,
                                       const std::string& origin = "<string>");
std::string accel_to_json_text(const AcceleratorConfig& cfg);
AcceleratorConfig load_accel(const std::string& path);

enum class Placement : std::uint8_t { onchip_pinned, onchip_transient, offchip };

struct ResidencyPlan {
  std::map<std::string, Placement> placement;
  std::int64_t pinned_bytes = 0;
  std::int64_t peak_onchip_bytes = 0;  // pinned + max live transient set

  Placement at(const std::string& name) const {
    auto it = placement.find(name);
    return it == placement.end() ? Placement::offchip : it->second;
  }
};

enum class Bound : std::uint8_t { compute, dram, onchip };

struct LayerTiming {
  std::string name;
  double compute_s = 0;
  double offchip_s = 0;
  double onchip_s = 0;
  Bound bound = Bound::compute;

  double time_s() const { return std::max(compute_s, std::max(offchip_s, onchip_s)); }
};

struct ModelPerf {
  double total_s = 0;
  double effective_flops = 0;
  std::int64_t total_flops = 0;
  std::vector<LayerTiming> layers;  // topological order
  ResidencyPlan plan;
};

// Greedy residency: weights pinned in descending saved-DRAM-traffic-per-byte
// order (first-use order breaks ties) until the next one no longer fits;
// activations (graph inputs included) go on-chip transiently when the live set
// plus the tensor fits in what pinning left over, and are freed after their
// last consumer. Graph outputs stay live to the end of the run.
ResidencyPlan allocate_onchip(const ir::Graph& g, const std::vector<cost::OpCost>& costs,
                              const AcceleratorConfig& cfg);

// Bytes a single consumer moves for one read of `tensor`. Equals the tensor
// size except for SparseLengthsSum tables, where only touched rows count.
std::int64_t tensor_read_bytes(const ir::Node& node, const ir::Graph& g,
                               const std::string& tensor);

// Per-layer roofline. `charged_onchip` implements the charge-once rule for
// on-chip residents: a tensor already in the set costs later readers nothing.
LayerTiming layer_time(const ir::Node& node, const cost::OpCost& c, const ir::Graph& g,
                       const ResidencyPlan& plan, const AcceleratorConfig& cfg,
                       std::set<std::string>& charged_onchip);

ModelPerf simulate(const ir::Graph& g, const AcceleratorConfig& cfg);

// Replays the plan against liveness; throws ValidationError if pinned + live
// transients ever exceed capacity. Returns the observed peak bytes.
std::int64_t verify_plan(const ir::Graph& g, const ResidencyPlan& plan,
                         const AcceleratorConfig& cfg);

struct SweepPoint {
  double capacity = 0;
  double onchip_bw = 0;
  double total_s = 0;
  double effective_flops = 0;
  int compute_bound = 0;
  int dram_bound = 0;
  int onchip_bound = 0;
};

// Full cross-product, rows ordered by (capacity, onchip_bw).
std::vector<SweepPoint> capacity_sweep(const ir::Graph& g, const AcceleratorConfig& base,
                                       const std::vector<double>& capacities,
                                       const std::vector<double>& onchip_bws);

std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace inferlab::roofline
