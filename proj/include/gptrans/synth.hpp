#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/config.hpp"
#include "gptrans/errors.hpp"
#include "gptrans/graph.hpp"

namespace gptrans {

enum class SynthTask { SpdRegression, DegreeClass, ClusterLike, TspLike };

inline SynthTask parse_synth_task(std::string_view s) {
  if (s == "spd-regression") return SynthTask::SpdRegression;
  if (s == "degree-class") return SynthTask::DegreeClass;
  if (s == "cluster-like") return SynthTask::ClusterLike;
  if (s == "tsp-like") return SynthTask::TspLike;
  throw ConfigError("unknown synthetic task '" + std::string(s) + "'");
}

inline std::string synth_task_name(SynthTask t) {
  switch (t) {
    case SynthTask::SpdRegression: return "spd-regression";
    case SynthTask::DegreeClass: return "degree-class";
    case SynthTask::ClusterLike: return "cluster-like";
    case SynthTask::TspLike: return "tsp-like";
  }
  return "unknown";
}

struct SynthOptions {
  SynthTask task = SynthTask::SpdRegression;
  std::size_t n_graphs = 100;
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 16;
  std::uint64_t seed = 0;
  double extra_edge_prob = 0.1;  // chords added on top of the random spanning tree
  std::size_t clusters = 3;      // cluster-like
  double p_in = 0.5;             // cluster-like
  double p_out = 0.05;           // cluster-like
  std::size_t knn = 4;           // tsp-like candidate graph
  std::size_t coord_buckets = 16;

  void validate() const {
    if (n_graphs == 0) throw ConfigError("n_graphs must be positive");
    if (min_nodes < 1 || min_nodes > max_nodes) throw ConfigError("node range must satisfy 1 <= min <= max");
    if (task == SynthTask::TspLike && min_nodes < 3) throw ConfigError("tsp-like graphs need at least 3 nodes");
    if (task == SynthTask::ClusterLike && clusters < 2) throw ConfigError("cluster-like needs at least 2 clusters");
    for (double p : {extra_edge_prob, p_in, p_out})
      if (p < 0.0 || p > 1.0) throw ConfigError("probabilities must lie in [0, 1]");
  }
};

inline nlohmann::json to_json(const SynthOptions& o) {
  return {{"task", synth_task_name(o.task)}, {"n_graphs", o.n_graphs}, {"min_nodes", o.min_nodes},
          {"max_nodes", o.max_nodes},        {"seed", o.seed},         {"extra_edge_prob", o.extra_edge_prob},
          {"clusters", o.clusters},          {"p_in", o.p_in},         {"p_out", o.p_out},
          {"knn", o.knn},                    {"coord_buckets", o.coord_buckets}};
}

/// Task the model must be configured with to learn a synthetic dataset.
inline Task synth_model_task(const SynthOptions& o) {
  switch (o.task) {
    case SynthTask::SpdRegression: return {TaskKind::GraphRegression, 1};
    case SynthTask::DegreeClass: return {TaskKind::NodeClassification, 2};
    case SynthTask::ClusterLike: return {TaskKind::NodeClassification, o.clusters};
    case SynthTask::TspLike: return {TaskKind::EdgeClassification, 2};
  }
  return {};
}

namespace detail {

using Rng = std::mt19937_64;

// Draws from the engine directly so files are identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline std::size_t uniform_below(Rng& rng, std::size_t n) { return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)); }

/// Stores each undirected edge as two directed edges with the same attributes.
inline void add_undirected(Graph& g, std::int32_t u, std::int32_t v, std::vector<std::int32_t> attrs) {
  g.edges.emplace_back(u, v);
  g.edge_attrs.push_back(attrs);
  g.edges.emplace_back(v, u);
  g.edge_attrs.push_back(std::move(attrs));
}

/// Random recursive tree plus independent chords: connected, molecule-like sparsity.
inline Graph random_connected(Rng& rng, std::size_t n, double chord_prob) {
  Graph g;
  g.num_nodes = n;
  for (std::size_t i = 0; i < n; ++i) g.node_attrs.push_back({static_cast<std::int32_t>(uniform_below(rng, 4))});
  std::set<std::pair<std::size_t, std::size_t>> present;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t j = uniform_below(rng, i);
    present.emplace(j, i);
    add_undirected(g, static_cast<std::int32_t>(j), static_cast<std::int32_t>(i), {static_cast<std::int32_t>(uniform_below(rng, 3))});
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool chord = uniform01(rng) < chord_prob;
      const auto bond = static_cast<std::int32_t>(uniform_below(rng, 3));
      if (chord && !present.count({i, j})) {
        present.emplace(i, j);
        add_undirected(g, static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), {bond});
      }
    }
  return g;
}

inline double mean_pairwise_spd(const Graph& g) {
  const auto d = all_pairs_shortest_path(g);
  const std::size_t n = g.num_nodes;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && d[i * n + j] != kUnreachable) {
        sum += d[i * n + j];
        ++pairs;
      }
  return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

/// Parity of the undirected degree (distinct neighbours, either edge direction).
inline std::vector<std::int32_t> degree_parity(const Graph& g) {
  std::vector<std::set<std::int32_t>> nbr(g.num_nodes);
  for (auto [u, v] : g.edges) {
    if (u == v) continue;
    nbr[static_cast<std::size_t>(u)].insert(v);
    nbr[static_cast<std::size_t>(v)].insert(u);
  }
  std::vector<std::int32_t> out(g.num_nodes);
  for (std::size_t i = 0; i < g.num_nodes; ++i) out[i] = static_cast<std::int32_t>(nbr[i].size() % 2);
  return out;
}

inline Graph cluster_graph(Rng& rng, std::size_t n, const SynthOptions& o) {
  Graph g;
  g.num_nodes = n;
  std::vector<std::int32_t> label(n);
  for (auto& l : label) l = static_cast<std::int32_t>(uniform_below(rng, o.clusters));
  // One revealed node per community; every other node shows attribute 0.
  std::vector<bool> revealed(o.clusters, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(label[i]);
    std::int32_t attr = 0;
    if (!revealed[c]) {
      revealed[c] = true;
      attr = label[i] + 1;
    }
    g.node_attrs.push_back({attr});
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (uniform01(rng) < (label[i] == label[j] ? o.p_in : o.p_out))
        add_undirected(g, static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), {0});
  g.node_targets = label;
  return g;
}

inline Graph tsp_graph(Rng& rng, std::size_t n, const SynthOptions& o) {
  std::vector<std::pair<double, double>> pts(n);
  for (auto& p : pts) p = {uniform01(rng), uniform01(rng)};
  auto dist = [&](std::size_t a, std::size_t b) { return std::hypot(pts[a].first - pts[b].first, pts[a].second - pts[b].second); };

  // Nearest-neighbour tour starting at node 0.
  std::vector<std::size_t> tour{0};
  std::vector<bool> used(n, false);
  used[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    const std::size_t cur = tour.back();
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j)
      if (!used[j] && (best == n || dist(cur, j) < dist(cur, best))) best = j;
    used[best] = true;
    tour.push_back(best);
  }
  std::set<std::pair<std::size_t, std::size_t>> on_tour;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = tour[k], b = tour[(k + 1) % n];
    on_tour.emplace(std::min(a, b), std::max(a, b));
  }

  std::set<std::pair<std::size_t, std::size_t>> cand = on_tour;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) { return dist(i, a) < dist(i, b); });
    for (std::size_t k = 0; k < std::min(o.knn, others.size()); ++k) cand.emplace(std::min(i, others[k]), std::max(i, others[k]));
  }

  Graph g;
  g.num_nodes = n;
  const auto bucket = [&](double x) {
    return static_cast<std::int32_t>(std::min<double>(static_cast<double>(o.coord_buckets) - 1, std::floor(x * static_cast<double>(o.coord_buckets))));
  };
  for (const auto& p : pts) g.node_attrs.push_back({bucket(p.first), bucket(p.second)});
  std::vector<std::int32_t> labels;
  for (auto [a, b] : cand) {
    const auto len = bucket(std::min(1.0, dist(a, b) / std::sqrt(2.0)));
    add_undirected(g, static_cast<std::int32_t>(a), static_cast<std::int32_t>(b), {len});
    const std::int32_t lab = on_tour.count({a, b}) ? 1 : 0;
    labels.push_back(lab);
    labels.push_back(lab);
  }
  g.edge_targets = labels;
  return g;
}

}  // namespace detail

/// Deterministic synthetic dataset; graph i depends only on (seed, i).
inline std::vector<Graph> synthesize(const SynthOptions& o) {
  o.validate();
  std::vector<Graph> out;
  out.reserve(o.n_graphs);
  for (std::size_t i = 0; i < o.n_graphs; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(o.seed), static_cast<std::uint32_t>(o.seed >> 32), static_cast<std::uint32_t>(i)};
    detail::Rng rng(seq);
    const std::size_t n = o.min_nodes + detail::uniform_below(rng, o.max_nodes - o.min_nodes + 1);
    Graph g;
    switch (o.task) {
      case SynthTask::SpdRegression:
        g = detail::random_connected(rng, n, o.extra_edge_prob);
        g.graph_target = detail::mean_pairwise_spd(g);
        break;
      case SynthTask::DegreeClass:
        g = detail::random_connected(rng, n, o.extra_edge_prob);
        for (auto& a : g.node_attrs) a = {0};
        g.node_targets = detail::degree_parity(g);
        break;
      case SynthTask::ClusterLike:
        g = detail::cluster_graph(rng, n, o);
        break;
      case SynthTask::TspLike:
        g = detail::tsp_graph(rng, n, o);
        break;
    }
    validate(g);
    out.push_back(std::move(g));
  }
  return out;
}

/// Labels a fixed graph the way the generator would (used to label hand-built graphs).
inline void label_graph(Graph& g, SynthTask task) {
  switch (task) {
    case SynthTask::SpdRegression: g.graph_target = detail::mean_pairwise_spd(g); break;
    case SynthTask::DegreeClass: g.node_targets = detail::degree_parity(g); break;
    default: throw ConfigError("only spd-regression and degree-class can label an arbitrary graph");
  }
}

}  // namespace gptrans
