#include "inferlab/mine.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "inferlab/common.hpp"
#include "inferlab/cost.hpp"

namespace inferlab::mine {

namespace {

// Producer/consumer structure of one graph, with nodes as indices into
// g.nodes so subsets are cheap to sort and compare.
struct GraphIndex {
  const ir::Graph* g = nullptr;
  std::map<std::string, int> node_index;
  std::map<std::string, int> producer;                 // tensor -> producing node
  std::map<std::string, std::vector<int>> consumers;   // tensor -> consuming nodes
  std::vector<std::vector<int>> adjacent;              // undirected, deduplicated

  explicit GraphIndex(const ir::Graph& graph) : g(&graph) {
    const int n = static_cast<int>(graph.nodes.size());
    for (int i = 0; i < n; ++i) {
      const auto& node = graph.nodes[static_cast<std::size_t>(i)];
      if (!node_index.emplace(node.name, i).second)
        throw ValidationError("mine: duplicate node name '" + node.name + "'");
      for (const auto& t : node.outputs) producer[t] = i;
    }
    for (int i = 0; i < n; ++i)
      for (const auto& t : graph.nodes[static_cast<std::size_t>(i)].inputs)
        consumers[t].push_back(i);

    adjacent.resize(static_cast<std::size_t>(n));
    for (const auto& [tensor, from] : producer) {
      const auto it = consumers.find(tensor);
      if (it == consumers.end()) continue;
      for (const int to : it->second) {
        if (to == from) continue;
        adjacent[static_cast<std::size_t>(from)].push_back(to);
        adjacent[static_cast<std::size_t>(to)].push_back(from);
      }
    }
    for (auto& a : adjacent) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
  }
};

bool connected(const GraphIndex& gi, const std::vector<int>& nodes) {
  if (nodes.empty()) return false;
  std::set<int> in_set(nodes.begin(), nodes.end());
  std::vector<int> stack = {nodes[0]};
  std::set<int> seen = {nodes[0]};
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const int v : gi.adjacent[static_cast<std::size_t>(u)])
      if (in_set.count(v) && seen.insert(v).second) stack.push_back(v);
  }
  return seen.size() == nodes.size();
}

// The fragment induced by a sorted node subset, in local indices.
struct Fragment {
  std::vector<std::string> ops;
  std::vector<std::vector<int>> preds;  // internal producer per input slot
  std::vector<int> ext_in;              // input slots fed from outside
  std::vector<int> bnd_out;             // output tensors escaping the fragment
};

Fragment build_fragment(const GraphIndex& gi, const std::vector<int>& nodes) {
  const auto s = nodes.size();
  std::map<int, int> local;  // graph index -> local index
  for (std::size_t i = 0; i < s; ++i) local[nodes[i]] = static_cast<int>(i);

  const auto& g = *gi.g;
  Fragment f;
  f.ops.resize(s);
  f.preds.resize(s);
  f.ext_in.assign(s, 0);
  f.bnd_out.assign(s, 0);
  for (std::size_t i = 0; i < s; ++i) {
    const auto& node = g.nodes[static_cast<std::size_t>(nodes[i])];
    f.ops[i] = std::string(ir::op_name(node.op));
    for (const auto& t : node.inputs) {
      const auto p = gi.producer.find(t);
      const auto l = p == gi.producer.end() ? local.end() : local.find(p->second);
      if (l == local.end())
        ++f.ext_in[i];
      else
        f.preds[i].push_back(l->second);
    }
    for (const auto& t : node.outputs) {
      bool escapes = std::find(g.outputs.begin(), g.outputs.end(), t) != g.outputs.end();
      const auto c = gi.consumers.find(t);
      if (c == gi.consumers.end() || c->second.empty()) escapes = true;
      if (!escapes)
        for (const int consumer : c->second)
          if (!local.count(consumer)) {
            escapes = true;
            break;
          }
      if (escapes) ++f.bnd_out[i];
    }
  }
  return f;
}

std::string render_labeling(const Fragment& f, const std::vector<int>& label_of,
                            const std::vector<int>& order) {
  std::string out;
  for (std::size_t p = 0; p < order.size(); ++p) {
    const int u = order[p];
    if (p) out += '|';
    out += f.ops[static_cast<std::size_t>(u)];
    out += '(';
    std::vector<int> srcs;
    for (const int q : f.preds[static_cast<std::size_t>(u)])
      srcs.push_back(label_of[static_cast<std::size_t>(q)]);
    std::sort(srcs.begin(), srcs.end());
    for (std::size_t j = 0; j < srcs.size(); ++j) {
      if (j) out += '+';
      out += std::to_string(srcs[j]);
    }
    out += ';';
    out += std::to_string(f.ext_in[static_cast<std::size_t>(u)]);
    out += ';';
    out += std::to_string(f.bnd_out[static_cast<std::size_t>(u)]);
    out += ')';
  }
  return out;
}

// Minimal rendering over every topological labeling of the fragment.
std::string minimal_string(const Fragment& f) {
  const int s = static_cast<int>(f.ops.size());
  std::vector<std::set<int>> pred_sets(static_cast<std::size_t>(s));
  for (int u = 0; u < s; ++u)
    for (const int q : f.preds[static_cast<std::size_t>(u)])
      pred_sets[static_cast<std::size_t>(u)].insert(q);

  std::vector<int> label_of(static_cast<std::size_t>(s), -1);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(s));
  std::string best;

  auto ready = [&](int u) {
    if (label_of[static_cast<std::size_t>(u)] != -1) return false;
    for (const int q : pred_sets[static_cast<std::size_t>(u)])
      if (label_of[static_cast<std::size_t>(q)] == -1) return false;
    return true;
  };

  auto recurse = [&](auto&& self) -> void {
    if (static_cast<int>(order.size()) == s) {
      std::string candidate = render_labeling(f, label_of, order);
      if (best.empty() || candidate < best) best = std::move(candidate);
      return;
    }
    for (int u = 0; u < s; ++u) {
      if (!ready(u)) continue;
      label_of[static_cast<std::size_t>(u)] = static_cast<int>(order.size());
      order.push_back(u);
      self(self);
      order.pop_back();
      label_of[static_cast<std::size_t>(u)] = -1;
    }
  };
  recurse(recurse);
  return best;
}

SubgraphPattern pattern_of(const GraphIndex& gi, const std::vector<int>& nodes) {
  SubgraphPattern p;
  p.size = static_cast<int>(nodes.size());
  p.canonical = minimal_string(build_fragment(gi, nodes));
  return p;
}

std::vector<int> resolve_nodes(const GraphIndex& gi, std::span<const std::string> names,
                               const char* who) {
  if (names.empty()) throw ValidationError(std::string(who) + ": empty occurrence");
  std::vector<int> nodes;
  nodes.reserve(names.size());
  for (const auto& name : names) {
    const auto it = gi.node_index.find(name);
    if (it == gi.node_index.end())
      throw ValidationError(std::string(who) + ": unknown node '" + name + "'");
    nodes.push_back(it->second);
  }
  std::sort(nodes.begin(), nodes.end());
  if (std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end())
    throw ValidationError(std::string(who) + ": duplicate node in occurrence");
  if (!connected(gi, nodes))
    throw ValidationError(std::string(who) + ": occurrence is not connected");
  return nodes;
}

// All connected node subsets of size 2..max_size, by iterative extension.
std::vector<std::vector<int>> connected_subsets(const GraphIndex& gi, int max_size) {
  std::set<std::vector<int>> current;
  for (int i = 0; i < static_cast<int>(gi.g->nodes.size()); ++i) current.insert({i});

  std::vector<std::vector<int>> all;
  for (int size = 2; size <= max_size; ++size) {
    std::set<std::vector<int>> next;
    for (const auto& subset : current)
      for (const int u : subset)
        for (const int v : gi.adjacent[static_cast<std::size_t>(u)]) {
          if (std::binary_search(subset.begin(), subset.end(), v)) continue;
          std::vector<int> grown = subset;
          grown.insert(std::upper_bound(grown.begin(), grown.end(), v), v);
          next.insert(std::move(grown));
        }
    all.insert(all.end(), next.begin(), next.end());
    current = std::move(next);
  }
  return all;
}

double tensor_bytes(const ir::Graph& g, const std::string& name,
                    const cost::DtypeSizes& sizes) {
  const auto& spec = g.tensor(name);
  std::int64_t elems = 1;
  for (const auto d : spec.dims) elems *= d;
  return static_cast<double>(elems) *
         static_cast<double>(sizes[static_cast<std::size_t>(spec.dtype)]);
}

}  // namespace

SubgraphPattern canonical_form(const ir::Graph& g, std::span<const std::string> nodes) {
  const GraphIndex gi(g);
  return pattern_of(gi, resolve_nodes(gi, nodes, "canonical_form"));
}

std::vector<std::string> pattern_ops(const SubgraphPattern& pattern) {
  std::vector<std::string> ops;
  std::size_t pos = 0;
  while (pos < pattern.canonical.size()) {
    const auto open = pattern.canonical.find('(', pos);
    if (open == std::string::npos) break;
    ops.push_back(pattern.canonical.substr(pos, open - pos));
    const auto bar = pattern.canonical.find('|', open);
    if (bar == std::string::npos) break;
    pos = bar + 1;
  }
  return ops;
}

bool filter_eligible(const SubgraphPattern& pattern) {
  static const std::set<std::string> allow = {
      "FC",  "Conv", "Relu",      "Add",          "Mul",    "Clip",
      "Sum", "SpatialBN", "BatchMatMul", "Concat", "Flatten", "BatchGather"};
  const auto ops = pattern_ops(pattern);
  if (ops.empty()) return false;
  for (const auto& op : ops)
    if (!allow.count(op)) return false;
  return true;
}

std::vector<MinedPattern> mine_frequent_subgraphs(std::span<const CorpusGraph> corpus,
                                                  double min_support, int max_size) {
  if (max_size < 2)
    throw ValidationError("mine_frequent_subgraphs: max_size must be at least 2");

  std::map<std::string, MinedPattern> by_canonical;
  for (std::size_t gidx = 0; gidx < corpus.size(); ++gidx) {
    const GraphIndex gi(corpus[gidx].graph);

    std::map<std::string, std::pair<SubgraphPattern, std::vector<std::vector<int>>>> occs;
    for (auto& subset : connected_subsets(gi, max_size)) {
      SubgraphPattern p = pattern_of(gi, subset);
      auto& entry = occs[p.canonical];
      entry.first = std::move(p);
      entry.second.push_back(std::move(subset));
    }

    for (auto& [canonical, entry] : occs) {
      // Non-overlapping greedy picks in deterministic (lexicographic) order:
      // a node joins at most one counted occurrence of this pattern.
      std::sort(entry.second.begin(), entry.second.end());
      std::set<int> used;
      std::int64_t picks = 0;
      const std::vector<int>* first_pick = nullptr;
      for (const auto& occ : entry.second) {
        bool free = true;
        for (const int u : occ)
          if (used.count(u)) {
            free = false;
            break;
          }
        if (!free) continue;
        used.insert(occ.begin(), occ.end());
        ++picks;
        if (!first_pick) first_pick = &occ;
      }
      if (picks == 0) continue;

      auto& mined = by_canonical[canonical];
      if (mined.pattern.canonical.empty()) {
        mined.pattern = entry.first;
        mined.rep_graph = gidx;
        for (const int u : *first_pick)
          mined.rep_nodes.push_back(corpus[gidx].graph.nodes[static_cast<std::size_t>(u)].name);
      }
      mined.count += static_cast<double>(picks) * corpus[gidx].frequency;
    }
  }

  std::vector<MinedPattern> out;
  for (auto& [canonical, mined] : by_canonical)
    if (mined.count >= min_support) out.push_back(std::move(mined));
  std::sort(out.begin(), out.end(), [](const MinedPattern& a, const MinedPattern& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.pattern.canonical < b.pattern.canonical;
  });
  return out;
}

FusionProjection project_fusion_speedup(const ir::Graph& g,
                                        std::span<const std::string> nodes,
                                        const roofline::AcceleratorConfig& cfg) {
  const ir::Graph meta = ir::infer_shapes(g);
  const GraphIndex gi(meta);
  const std::vector<int> subset = resolve_nodes(gi, nodes, "project_fusion_speedup");
  std::set<int> in_set(subset.begin(), subset.end());
  const cost::DtypeSizes sizes = cost::default_dtype_sizes();

  double before = 0.0;
  double flops = 0.0;
  double weight_bytes = 0.0;
  for (const int u : subset) {
    const auto& node = meta.nodes[static_cast<std::size_t>(u)];
    const cost::OpCost c = cost::op_cost(node, meta, sizes);
    before += std::max(static_cast<double>(c.flops) / cfg.peak_flops,
                       static_cast<double>(c.total_bytes()) / cfg.dram_bw);
    flops += static_cast<double>(c.flops);
    weight_bytes += static_cast<double>(c.weight_bytes);
  }

  // Boundary traffic of the fused op: unique external activation inputs read
  // once, escaping outputs written once; internal intermediates stay on chip.
  std::set<std::string> boundary_in;
  std::set<std::string> boundary_out;
  for (const int u : subset) {
    const auto& node = meta.nodes[static_cast<std::size_t>(u)];
    for (const auto& t : node.inputs) {
      if (meta.is_weight(t)) continue;  // already in weight_bytes
      const auto p = gi.producer.find(t);
      if (p == gi.producer.end() || !in_set.count(p->second)) boundary_in.insert(t);
    }
    for (const auto& t : node.outputs) {
      bool escapes = std::find(meta.outputs.begin(), meta.outputs.end(), t) !=
                     meta.outputs.end();
      const auto c = gi.consumers.find(t);
      if (c == gi.consumers.end() || c->second.empty()) escapes = true;
      if (!escapes)
        for (const int consumer : c->second)
          if (!in_set.count(consumer)) {
            escapes = true;
            break;
          }
      if (escapes) boundary_out.insert(t);
    }
  }
  double after_bytes = weight_bytes;
  for (const auto& t : boundary_in) after_bytes += tensor_bytes(meta, t, sizes);
  for (const auto& t : boundary_out) after_bytes += tensor_bytes(meta, t, sizes);

  FusionProjection proj;
  proj.before_s = before;
  proj.after_s = std::max(flops / cfg.peak_flops, after_bytes / cfg.dram_bw);
  proj.speedup = proj.after_s > 0 ? proj.before_s / proj.after_s : 1.0;
  return proj;
}

std::vector<FusionCandidate> rank_candidates(std::span<const CorpusGraph> corpus,
                                             std::span<const MinedPattern> mined,
                                             const roofline::AcceleratorConfig& cfg) {
  std::vector<FusionCandidate> out;
  out.reserve(mined.size());
  for (const auto& m : mined) {
    FusionCandidate c;
    c.pattern = m.pattern;
    c.frequency = m.count;
    c.rep_graph = m.rep_graph;
    c.rep_nodes = m.rep_nodes;
    c.eligible = filter_eligible(m.pattern);
    const FusionProjection proj =
        project_fusion_speedup(corpus[m.rep_graph].graph, m.rep_nodes, cfg);
    c.per_occurrence_speedup = proj.speedup;
    c.before_s = proj.before_s;
    c.after_s = proj.after_s;
    c.total_saving_s = m.count * (proj.before_s - proj.after_s);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<FusionCandidate> top_k(std::span<const FusionCandidate> candidates,
                                   std::size_t k) {
  if (k < 1) throw ValidationError("top_k: k must be at least 1");
  std::vector<FusionCandidate> out;
  for (const auto& c : candidates)
    if (c.eligible) out.push_back(c);
  std::sort(out.begin(), out.end(), [](const FusionCandidate& a, const FusionCandidate& b) {
    if (a.total_saving_s != b.total_saving_s) return a.total_saving_s > b.total_saving_s;
    return a.pattern.canonical < b.pattern.canonical;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::string candidates_csv(std::span<const FusionCandidate> candidates) {
  std::ostringstream out;
  out << "pattern,frequency,eligible,per_occurrence_speedup,total_saving_s\n";
  for (const auto& c : candidates) {
    out << c.pattern.canonical << ',' << format_double(c.frequency) << ','
        << (c.eligible ? 1 : 0) << ',' << format_double(c.per_occurrence_speedup) << ','
        << format_double(c.total_saving_s) << '\n';
  }
  return out.str();
}

}  // namespace inferlab::mine
