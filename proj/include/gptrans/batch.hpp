#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gptrans/errors.hpp"
#include "gptrans/graph.hpp"
#include "gptrans/tensor.hpp"

namespace gptrans {

/// Sentinel ids for attribute tensors; the embedding layer maps them onto
/// dedicated table rows (edges) or zero rows (nodes).
inline constexpr std::int32_t kNoEdgeId = -1;
inline constexpr std::int32_t kPadId = -2;

/// Shortest-path bucket vocabulary: 0..clip, then UNREACHABLE, VIRTUAL, PAD.
struct SpdVocab {
  std::int32_t clip = 20;
  std::int32_t unreachable() const { return clip + 1; }
  std::int32_t virtual_token() const { return clip + 2; }
  std::int32_t pad() const { return clip + 3; }
  std::size_t table_size() const { return static_cast<std::size_t>(clip) + 4; }
};

/// Degree vocabulary: 0..clip, then one special token used for padding.
struct DegreeVocab {
  std::int32_t clip = 64;
  std::int32_t pad() const { return clip + 1; }
  std::size_t table_size() const { return static_cast<std::size_t>(clip) + 2; }
};

struct BatchOptions {
  std::int32_t spd_clip = 20;
  std::int32_t deg_clip = 64;
  bool undirected_spd = true;
  /// Pad to at least this many real-node slots.
  std::size_t pad_to = 0;
};

/// Padded tensor form of a list of graphs. Attention axes have 1+N positions
/// with the virtual node at index 0.
struct BatchedGraph {
  std::size_t batch_size = 0;
  std::size_t max_nodes = 0;
  std::size_t node_slots = 1;
  std::size_t edge_slots = 1;
  SpdVocab spd_vocab;
  DegreeVocab deg_vocab;
  std::vector<std::size_t> num_nodes;

  IdTensor node_attr_ids;          // [B, N, A_n]
  IdTensor indeg_ids;              // [B, N]
  IdTensor outdeg_ids;             // [B, N]
  MaskTensor node_mask;            // [B, 1+N]
  IdTensor spd;                    // [B, 1+N, 1+N]
  IdTensor direct_edge_attr_ids;   // [B, 1+N, 1+N, A_e]

  std::size_t tokens() const { return max_nodes + 1; }
};

inline BatchedGraph batch_graphs(std::span<const Graph> graphs, const BatchOptions& opt = {}) {
  if (graphs.empty()) throw EmptyBatchError("batch_graphs needs at least one graph");
  if (opt.spd_clip < 1 || opt.deg_clip < 1) throw ConfigError("spd_clip and deg_clip must be positive");
  BatchedGraph b;
  b.batch_size = graphs.size();
  b.spd_vocab.clip = opt.spd_clip;
  b.deg_vocab.clip = opt.deg_clip;
  b.node_slots = graphs.front().node_slots();
  b.edge_slots = graphs.front().edge_slots();
  for (const auto& g : graphs) {
    validate(g);
    if (g.node_slots() != b.node_slots) throw MalformedGraphError("graphs in a batch disagree on node attribute slots");
    if (!g.edges.empty() && g.edge_slots() != b.edge_slots)
      throw MalformedGraphError("graphs in a batch disagree on edge attribute slots");
    b.max_nodes = std::max(b.max_nodes, g.num_nodes);
    b.num_nodes.push_back(g.num_nodes);
  }
  b.max_nodes = std::max(b.max_nodes, opt.pad_to);
  const std::size_t B = b.batch_size, N = b.max_nodes, T = N + 1;

  b.node_attr_ids = IdTensor({B, N, b.node_slots}, kPadId);
  b.indeg_ids = IdTensor({B, N}, b.deg_vocab.pad());
  b.outdeg_ids = IdTensor({B, N}, b.deg_vocab.pad());
  b.node_mask = MaskTensor({B, T}, 0);
  b.spd = IdTensor({B, T, T}, b.spd_vocab.pad());
  b.direct_edge_attr_ids = IdTensor({B, T, T, b.edge_slots}, kPadId);

  for (std::size_t bi = 0; bi < B; ++bi) {
    const Graph& g = graphs[bi];
    const std::size_t n = g.num_nodes;
    const auto deg = degree_stats(g);
    const auto dist = all_pairs_shortest_path(g, opt.undirected_spd);

    b.node_mask.at({bi, 0}) = 1;
    for (std::size_t v = 0; v < n; ++v) {
      b.node_mask.at({bi, v + 1}) = 1;
      for (std::size_t s = 0; s < b.node_slots; ++s) b.node_attr_ids.at({bi, v, s}) = g.node_attrs[v][s];
      b.indeg_ids.at({bi, v}) = std::min(deg.indegree[v], opt.deg_clip);
      b.outdeg_ids.at({bi, v}) = std::min(deg.outdegree[v], opt.deg_clip);
    }
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t j = 0; j <= n; ++j) {
        std::int32_t tok;
        if (i == 0 || j == 0) {
          tok = b.spd_vocab.virtual_token();
        } else {
          const std::int32_t d = dist[(i - 1) * n + (j - 1)];
          tok = d == kUnreachable ? b.spd_vocab.unreachable() : std::min(d, opt.spd_clip);
        }
        b.spd.at({bi, i, j}) = tok;
        for (std::size_t s = 0; s < b.edge_slots; ++s) b.direct_edge_attr_ids.at({bi, i, j, s}) = kNoEdgeId;
      }
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const auto u = static_cast<std::size_t>(g.edges[e].first) + 1;
      const auto v = static_cast<std::size_t>(g.edges[e].second) + 1;
      for (std::size_t s = 0; s < b.edge_slots; ++s) b.direct_edge_attr_ids.at({bi, u, v, s}) = g.edge_attrs[e][s];
    }
  }
  return b;
}

/// Per-task supervision aligned with a BatchedGraph.
struct BatchTargets {
  std::vector<double> graph_values;  // [B]
  MaskTensor graph_mask;             // [B]
  IdTensor node_labels;              // [B, N]
  MaskTensor node_mask;              // [B, N]
  IdTensor edge_labels;              // [B, 1+N, 1+N]
  MaskTensor edge_mask;              // [B, 1+N, 1+N]
};

inline BatchTargets batch_targets(std::span<const Graph> graphs, const BatchedGraph& b) {
  const std::size_t B = b.batch_size, N = b.max_nodes, T = N + 1;
  BatchTargets t;
  t.graph_values.assign(B, 0.0);
  t.graph_mask = MaskTensor({B}, 0);
  t.node_labels = IdTensor({B, N}, 0);
  t.node_mask = MaskTensor({B, N}, 0);
  t.edge_labels = IdTensor({B, T, T}, 0);
  t.edge_mask = MaskTensor({B, T, T}, 0);
  for (std::size_t bi = 0; bi < B; ++bi) {
    const Graph& g = graphs[bi];
    if (g.graph_target) {
      t.graph_values[bi] = *g.graph_target;
      t.graph_mask[bi] = 1;
    }
    if (g.node_targets) {
      for (std::size_t v = 0; v < g.num_nodes; ++v) {
        t.node_labels.at({bi, v}) = (*g.node_targets)[v];
        t.node_mask.at({bi, v}) = 1;
      }
    }
    if (g.edge_targets) {
      for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto u = static_cast<std::size_t>(g.edges[e].first) + 1;
        const auto v = static_cast<std::size_t>(g.edges[e].second) + 1;
        t.edge_labels.at({bi, u, v}) = (*g.edge_targets)[e];
        t.edge_mask.at({bi, u, v}) = 1;
      }
    }
  }
  return t;
}

}  // namespace gptrans
