#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/errors.hpp"

namespace gptrans {

/// A raw attributed graph. Attribute ids are categorical; each node (edge)
/// carries the same number of attribute slots.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::int32_t>> node_attrs;
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  std::vector<std::vector<std::int32_t>> edge_attrs;
  std::optional<double> graph_target;
  std::optional<std::vector<std::int32_t>> node_targets;
  std::optional<std::vector<std::int32_t>> edge_targets;

  std::size_t node_slots() const { return node_attrs.empty() ? 0 : node_attrs.front().size(); }
  std::size_t edge_slots() const { return edge_attrs.empty() ? 1 : edge_attrs.front().size(); }

  friend bool operator==(const Graph&, const Graph&) = default;
};

inline constexpr std::int32_t kUnreachable = -1;

/// Checks every structural invariant; throws MalformedGraphError.
inline void validate(const Graph& g) {
  if (g.num_nodes < 1) throw MalformedGraphError("num_nodes must be >= 1");
  const auto n = static_cast<std::int64_t>(g.num_nodes);
  if (g.node_attrs.size() != g.num_nodes)
    throw MalformedGraphError("node_attrs has " + std::to_string(g.node_attrs.size()) + " rows for " +
                              std::to_string(g.num_nodes) + " nodes");
  for (const auto& a : g.node_attrs) {
    if (a.empty() || a.size() != g.node_attrs.front().size())
      throw MalformedGraphError("node_attrs rows must be non-empty and equally sized");
    for (auto id : a)
      if (id < 0) throw MalformedGraphError("negative node attribute id");
  }
  if (g.edge_attrs.size() != g.edges.size())
    throw MalformedGraphError("edge_attrs length " + std::to_string(g.edge_attrs.size()) +
                              " does not match edges length " + std::to_string(g.edges.size()));
  for (const auto& a : g.edge_attrs) {
    if (a.empty() || a.size() != g.edge_attrs.front().size())
      throw MalformedGraphError("edge_attrs rows must be non-empty and equally sized");
    for (auto id : a)
      if (id < 0) throw MalformedGraphError("negative edge attribute id");
  }
  std::set<std::pair<std::int32_t, std::int32_t>> seen;
  for (const auto& [u, v] : g.edges) {
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw MalformedGraphError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                ") has an endpoint outside [0," + std::to_string(n) + ")");
    if (!seen.insert({u, v}).second)
      throw MalformedGraphError("duplicate edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
  }
  if (g.node_targets && g.node_targets->size() != g.num_nodes)
    throw MalformedGraphError("node_targets length does not match num_nodes");
  if (g.edge_targets && g.edge_targets->size() != g.edges.size())
    throw MalformedGraphError("edge_targets length does not match edges length");
}

inline Graph graph_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw MalformedGraphError("graph record must be a JSON object");
  if (!j.contains("num_nodes") || !j.contains("edges"))
    throw MalformedGraphError("graph record needs num_nodes and edges");
  Graph g;
  try {
    const auto n = j.at("num_nodes").get<std::int64_t>();
    if (n < 1) throw MalformedGraphError("num_nodes must be >= 1");
    g.num_nodes = static_cast<std::size_t>(n);
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw MalformedGraphError("each edge must be a pair [u, v]");
      g.edges.emplace_back(e[0].get<std::int32_t>(), e[1].get<std::int32_t>());
    }
    if (j.contains("node_attrs") && !j["node_attrs"].is_null())
      g.node_attrs = j["node_attrs"].get<std::vector<std::vector<std::int32_t>>>();
    else
      g.node_attrs.assign(g.num_nodes, {0});
    if (j.contains("edge_attrs") && !j["edge_attrs"].is_null())
      g.edge_attrs = j["edge_attrs"].get<std::vector<std::vector<std::int32_t>>>();
    else
      g.edge_attrs.assign(g.edges.size(), {0});
    if (j.contains("graph_target") && !j["graph_target"].is_null()) g.graph_target = j["graph_target"].get<double>();
    if (j.contains("node_targets") && !j["node_targets"].is_null())
      g.node_targets = j["node_targets"].get<std::vector<std::int32_t>>();
    if (j.contains("edge_targets") && !j["edge_targets"].is_null())
      g.edge_targets = j["edge_targets"].get<std::vector<std::int32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedGraphError(std::string("bad graph record: ") + e.what());
  }
  validate(g);
  return g;
}

/// Parses one JSON Lines record.
inline Graph parse_graph(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedGraphError(std::string("invalid JSON: ") + e.what());
  }
  return graph_from_json(j);
}

inline nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json j;
  j["num_nodes"] = g.num_nodes;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [u, v] : g.edges) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  j["node_attrs"] = g.node_attrs;
  j["edge_attrs"] = g.edge_attrs;
  if (g.graph_target) j["graph_target"] = *g.graph_target;
  if (g.node_targets) j["node_targets"] = *g.node_targets;
  if (g.edge_targets) j["edge_targets"] = *g.edge_targets;
  return j;
}

inline std::string serialize_graph(const Graph& g) { return graph_to_json(g).dump(); }

inline std::vector<Graph> read_graphs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open graph file");
  std::vector<Graph> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_graph(line));
    } catch (const MalformedGraphError& e) {
      throw MalformedGraphError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_graphs(const std::string& path, const std::vector<Graph>& graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& g : graphs) out << serialize_graph(g) << '\n';
}

/// Hop-count distances by BFS from every node; row-major n*n, kUnreachable where
/// no path exists.
inline std::vector<std::int32_t> all_pairs_shortest_path(const Graph& g, bool treat_undirected = true) {
  const std::size_t n = g.num_nodes;
  std::vector<std::vector<std::int32_t>> adj(n);
  for (const auto& [u, v] : g.edges) {
    adj[static_cast<std::size_t>(u)].push_back(v);
    if (treat_undirected) adj[static_cast<std::size_t>(v)].push_back(u);
  }
  std::vector<std::int32_t> dist(n * n, kUnreachable);
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < n; ++s) {
    std::int32_t* row = dist.data() + s * n;
    row[s] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      std::size_t u = queue.front();
      queue.pop_front();
      for (auto v : adj[u]) {
        if (row[v] != kUnreachable) continue;
        row[v] = row[u] + 1;
        queue.push_back(static_cast<std::size_t>(v));
      }
    }
  }
  return dist;
}

struct DegreeStats {
  std::vector<std::int32_t> indegree;
  std::vector<std::int32_t> outdegree;
};

inline DegreeStats degree_stats(const Graph& g) {
  DegreeStats d{std::vector<std::int32_t>(g.num_nodes, 0), std::vector<std::int32_t>(g.num_nodes, 0)};
  for (const auto& [u, v] : g.edges) {
    ++d.outdegree[static_cast<std::size_t>(u)];
    ++d.indegree[static_cast<std::size_t>(v)];
  }
  return d;
}

}  // namespace gptrans
