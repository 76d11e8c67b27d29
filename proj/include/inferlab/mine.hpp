#pragma once

// Frequent-subgraph mining over operator graphs with roofline-projected
// fusion speedups and top-k ranking.
//
// Patterns are connected DAG fragments matched on op types and internal
// connection shape only (tensor dims do not participate in identity);
// speedup is projected per concrete occurrence. Occurrences are counted
// non-overlapping (greedy, deterministic order) so projected savings can
// never exceed the runtime they come from.

#include <span>
#include <string>
#include <vector>

#include "inferlab/ir.hpp"
#include "inferlab/roofline.hpp"

namespace inferlab::mine {

// Canonical form of a connected node-labeled DAG fragment. The string is the
// minimum over all topological labelings of the fragment, so any two
// isomorphic fragments (same ops, internal edges, and boundary roles) yield
// identical text. One node renders as `Op(preds;ext_in;bnd_out)` where preds
// are '+'-joined labels of internal producers (per input slot, sorted),
// ext_in counts input slots fed from outside the fragment, and bnd_out
// counts output tensors that escape it; nodes are '|'-joined in label order.
struct SubgraphPattern {
  std::string canonical;
  int size = 0;

  friend bool operator==(const SubgraphPattern&, const SubgraphPattern&) = default;
};

// Canonicalize the fragment induced by `nodes` (names of nodes in g).
// Throws if a name is unknown, duplicated, or the fragment is not weakly
// connected through producer-consumer edges.
SubgraphPattern canonical_form(const ir::Graph& g, std::span<const std::string> nodes);

// The op names appearing in a canonical string, in label order.
std::vector<std::string> pattern_ops(const SubgraphPattern& pattern);

// Data-parallel allowlist: FC, Conv, Relu, Add, Mul, Clip, Sum, SpatialBN,
// BatchMatMul, Concat, Flatten, BatchGather. Softmax (cross-element
// reduction) and SparseLengthsSum (gather-scatter) disqualify a pattern.
bool filter_eligible(const SubgraphPattern& pattern);

struct CorpusGraph {
  ir::Graph graph;
  double frequency = 1.0;  // executions per unit time; weights the counts
};

struct MinedPattern {
  SubgraphPattern pattern;
  double count = 0.0;                  // Σ per-graph non-overlapping picks × frequency
  std::size_t rep_graph = 0;           // corpus index of the representative occurrence
  std::vector<std::string> rep_nodes;  // its node names
};

// Exhaustive enumeration of connected patterns of 2..max_size nodes by
// iterative extension, deduplicated by canonical form, counted with
// non-overlapping greedy matching per graph and per-graph frequency weights.
// Patterns whose weighted count reaches min_support survive; output is
// ordered by count descending, then canonical string ascending.
std::vector<MinedPattern> mine_frequent_subgraphs(std::span<const CorpusGraph> corpus,
                                                  double min_support, int max_size);

struct FusionProjection {
  double before_s = 0.0;  // Σ per-op roofline times, intermediates through DRAM
  double after_s = 0.0;   // one fused op: flops summed, only boundary tensors in DRAM
  double speedup = 1.0;   // before / after (≥ 1: the fused bound never loses)
};

// Roofline projection for fusing one concrete occurrence. Shapes are taken
// from the graph (inferred internally), so the occurrence must type-check.
FusionProjection project_fusion_speedup(const ir::Graph& g,
                                        std::span<const std::string> nodes,
                                        const roofline::AcceleratorConfig& cfg);

struct FusionCandidate {
  SubgraphPattern pattern;
  double frequency = 0.0;
  std::size_t rep_graph = 0;
  std::vector<std::string> rep_nodes;
  bool eligible = false;
  double per_occurrence_speedup = 1.0;
  double before_s = 0.0;
  double after_s = 0.0;
  double total_saving_s = 0.0;  // frequency × (before_s − after_s)
};

// Evaluate mined patterns against the accelerator: eligibility plus the
// roofline projection of each representative occurrence.
std::vector<FusionCandidate> rank_candidates(std::span<const CorpusGraph> corpus,
                                             std::span<const MinedPattern> mined,
                                             const roofline::AcceleratorConfig& cfg);

// Eligible candidates by total projected saving descending (ties by
// canonical string ascending), truncated to k. k must be ≥ 1.
std::vector<FusionCandidate> top_k(std::span<const FusionCandidate> candidates,
                                   std::size_t k);

// "pattern,frequency,eligible,per_occurrence_speedup,total_saving_s" rows.
std::string candidates_csv(std::span<const FusionCandidate> candidates);

}  // namespace inferlab::mine
