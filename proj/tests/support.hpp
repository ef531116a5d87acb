#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// Everything here is written with plain loops over std::vector so it shares no
// code paths with the vectorized library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "gptrans/gptrans.hpp"

namespace oracle {

using gptrans::Graph;

inline constexpr int kInf = std::numeric_limits<int>::max() / 4;

/// Floyd–Warshall hop distances; unreachable pairs stay kInf.
inline std::vector<int> floyd_warshall(const Graph& g, bool undirected = true) {
  const std::size_t n = g.num_nodes;
  std::vector<int> d(n * n, kInf);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0;
  for (auto [u, v] : g.edges) {
    d[static_cast<std::size_t>(u) * n + static_cast<std::size_t>(v)] = std::min(d[u * n + v], 1);
    if (undirected) d[static_cast<std::size_t>(v) * n + static_cast<std::size_t>(u)] = std::min(d[v * n + u], 1);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i * n + k] + d[k * n + j] < d[i * n + j]) d[i * n + j] = d[i * n + k] + d[k * n + j];
  return d;
}

/// Random graph with unique directed edges and the requested attribute vocabularies.
inline Graph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t n_edges, std::size_t node_vocab = 4,
                          std::size_t edge_vocab = 3, std::size_t node_slots = 1, std::size_t edge_slots = 1) {
  Graph g;
  g.num_nodes = n;
  std::uniform_int_distribution<int> nv(0, static_cast<int>(node_vocab) - 1), ev(0, static_cast<int>(edge_vocab) - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::int32_t> a(node_slots);
    for (auto& x : a) x = nv(rng);
    g.node_attrs.push_back(a);
  }
  std::set<std::pair<int, int>> seen;
  std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);
  const std::size_t max_edges = n * (n - 1);
  n_edges = std::min(n_edges, max_edges);
  while (g.edges.size() < n_edges) {
    const int u = pick(rng), v = pick(rng);
    if (u == v || !seen.insert({u, v}).second) continue;
    g.edges.emplace_back(u, v);
    std::vector<std::int32_t> a(edge_slots);
    for (auto& x : a) x = ev(rng);
    g.edge_attrs.push_back(a);
  }
  return g;
}

/// Relabels nodes so old node v becomes perm[v]; edges keep their list order.
inline Graph permute_graph(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph h = g;
  for (std::size_t v = 0; v < g.num_nodes; ++v) h.node_attrs[perm[v]] = g.node_attrs[v];
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    h.edges[e] = {static_cast<std::int32_t>(perm[static_cast<std::size_t>(g.edges[e].first)]),
                  static_cast<std::int32_t>(perm[static_cast<std::size_t>(g.edges[e].second)])};
  if (g.node_targets) {
    std::vector<std::int32_t> t(g.num_nodes);
    for (std::size_t v = 0; v < g.num_nodes; ++v) t[perm[v]] = (*g.node_targets)[v];
    h.node_targets = t;
  }
  return h;
}

inline std::vector<std::size_t> random_perm(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

template <class T>
gptrans::Tensor<T> random_tensor(std::mt19937_64& rng, gptrans::Shape shape, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  gptrans::Tensor<T> t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<T>(nd(rng));
  return t;
}

/// Scalar GPA over one graph (no batch axis). All matrices row-major as in the library.
struct GpaCase {
  std::size_t T = 0, d1 = 0, d2 = 0, H = 1;
  std::vector<double> x;      // [T, d1]
  std::vector<double> e;      // [T, T, d2]
  std::vector<int> mask;      // [T]
  std::vector<double> wq, wk, wv, wo;  // [d1, d1]
  std::vector<double> wr;     // [d2, H]
  std::vector<double> we;     // [H, d2]
  std::vector<double> fcw;    // [d2, d1]
  std::vector<double> fcb;    // [d1]
};

struct GpaResult {
  std::vector<double> node;   // [T, d1]
  std::vector<double> edge;   // [T, T, d2]
  std::vector<double> logits; // [H, T, T], unmasked logits
  std::vector<double> probs;  // [H, T, T]
};

inline GpaResult gpa_loops(const GpaCase& c, bool n2e = true, bool e2n = true) {
  const std::size_t T = c.T, d1 = c.d1, d2 = c.d2, H = c.H, dh = d1 / H;
  auto proj = [&](const std::vector<double>& w) {
    std::vector<double> out(T * d1, 0.0);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t o = 0; o < d1; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < d1; ++k) s += c.x[i * d1 + k] * w[k * d1 + o];
        out[i * d1 + o] = s;
      }
    return out;
  };
  const auto Q = proj(c.wq), K = proj(c.wk), V = proj(c.wv);
  GpaResult r;
  r.logits.assign(H * T * T, 0.0);
  r.probs.assign(H * T * T, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < T; ++j) {
        double qk = 0.0;
        for (std::size_t k = 0; k < dh; ++k) qk += Q[i * d1 + h * dh + k] * K[j * d1 + h * dh + k];
        double phi = 0.0;
        for (std::size_t ch = 0; ch < d2; ++ch) phi += c.e[(i * T + j) * d2 + ch] * c.wr[ch * H + h];
        r.logits[(h * T + i) * T + j] = qk / std::sqrt(static_cast<double>(dh)) + phi;
      }
      double mx = -1e300;
      for (std::size_t j = 0; j < T; ++j)
        if (c.mask[j]) mx = std::max(mx, r.logits[(h * T + i) * T + j]);
      double z = 0.0;
      for (std::size_t j = 0; j < T; ++j)
        if (c.mask[j]) z += std::exp(r.logits[(h * T + i) * T + j] - mx);
      for (std::size_t j = 0; j < T; ++j)
        r.probs[(h * T + i) * T + j] = c.mask[j] ? std::exp(r.logits[(h * T + i) * T + j] - mx) / z : 0.0;
    }
  std::vector<double> fused(T * d1, 0.0);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t k = 0; k < dh; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < T; ++j) s += r.probs[(h * T + i) * T + j] * V[j * d1 + h * dh + k];
        fused[i * d1 + h * dh + k] = s;
      }
  r.edge.assign(T * T * d2, 0.0);
  if (n2e) {
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) {
        if (!c.mask[i] || !c.mask[j]) continue;
        for (std::size_t ch = 0; ch < d2; ++ch) {
          double s = 0.0;
          for (std::size_t h = 0; h < H; ++h)
            s += (r.logits[(h * T + i) * T + j] + r.probs[(h * T + i) * T + j]) * c.we[h * d2 + ch];
          r.edge[(i * T + j) * d2 + ch] = s;
        }
      }
    if (e2n) {
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> pooled(d2, 0.0);
        for (std::size_t ch = 0; ch < d2; ++ch) {
          double mx = -1e300;
          for (std::size_t j = 0; j < T; ++j)
            if (c.mask[j]) mx = std::max(mx, r.edge[(i * T + j) * d2 + ch]);
          double z = 0.0;
          for (std::size_t j = 0; j < T; ++j)
            if (c.mask[j]) z += std::exp(r.edge[(i * T + j) * d2 + ch] - mx);
          for (std::size_t j = 0; j < T; ++j)
            if (c.mask[j]) {
              const double x = r.edge[(i * T + j) * d2 + ch];
              pooled[ch] += x * std::exp(x - mx) / z;
            }
        }
        for (std::size_t o = 0; o < d1; ++o) {
          double s = c.fcb[o];
          for (std::size_t ch = 0; ch < d2; ++ch) s += pooled[ch] * c.fcw[ch * d1 + o];
          fused[i * d1 + o] += s;
        }
      }
    }
  }
  r.node.assign(T * d1, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    if (!c.mask[i]) continue;
    for (std::size_t o = 0; o < d1; ++o) {
      double s = 0.0;
      for (std::size_t k = 0; k < d1; ++k) s += fused[i * d1 + k] * c.wo[k * d1 + o];
      r.node[i * d1 + o] = s;
    }
  }
  return r;
}

inline GpaCase random_gpa_case(std::mt19937_64& rng, std::size_t T, std::size_t d1, std::size_t d2, std::size_t H,
                               std::size_t n_masked = 0) {
  std::normal_distribution<double> nd(0.0, 0.5);
  auto fill = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
  };
  GpaCase c;
  c.T = T, c.d1 = d1, c.d2 = d2, c.H = H;
  c.x = fill(T * d1);
  c.e = fill(T * T * d2);
  c.mask.assign(T, 1);
  for (std::size_t k = 0; k < n_masked && k + 1 < T; ++k) c.mask[T - 1 - k] = 0;
  c.wq = fill(d1 * d1), c.wk = fill(d1 * d1), c.wv = fill(d1 * d1), c.wo = fill(d1 * d1);
  c.wr = fill(d2 * H), c.we = fill(H * d2), c.fcw = fill(d2 * d1), c.fcb = fill(d1);
  return c;
}

/// Stores a GpaCase's parameters under `block0.gpa.` in a fresh ParamStore<T>.
template <class T>
gptrans::ParamStore<T> gpa_store(const GpaCase& c, const std::string& prefix = "gpa.") {
  gptrans::ParamStore<T> s;
  auto put = [&](const std::string& name, gptrans::Shape shape, const std::vector<double>& v) {
    auto& p = s.add(prefix + name, shape, true);
    for (std::size_t i = 0; i < v.size(); ++i) p.value[i] = static_cast<T>(v[i]);
  };
  put("w_q", {c.d1, c.d1}, c.wq);
  put("w_k", {c.d1, c.d1}, c.wk);
  put("w_v", {c.d1, c.d1}, c.wv);
  put("w_o", {c.d1, c.d1}, c.wo);
  put("w_reduce", {c.d2, c.H}, c.wr);
  put("w_expand", {c.H, c.d2}, c.we);
  put("fuse_fc.weight", {c.d2, c.d1}, c.fcw);
  put("fuse_fc.bias", {c.d1}, c.fcb);
  return s;
}

inline gptrans::MaskTensor mask_tensor(const std::vector<int>& m) {
  gptrans::MaskTensor t({1, m.size()});
  for (std::size_t i = 0; i < m.size(); ++i) t[i] = static_cast<std::uint8_t>(m[i]);
  return t;
}

template <class T>
gptrans::Tensor<T> to_tensor(gptrans::Shape shape, const std::vector<double>& v) {
  gptrans::Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
  return t;
}

/// Runs the library GPA on a GpaCase (batch of one).
template <class T>
gptrans::GPAOutput<T> run_gpa(gptrans::Tape<T>& tape, gptrans::ParamStore<T>& store, const GpaCase& c,
                              gptrans::PathToggles toggles = {}) {
  auto masks = gptrans::AttentionMasks::from_node_mask(mask_tensor(c.mask));
  auto p = gptrans::GPAParams<T>::bind(tape, store, "gpa.", c.H, toggles);
  gptrans::StochasticContext ctx(false, 0);
  auto x = tape.constant(to_tensor<T>({1, c.T, c.d1}, c.x));
  auto e = tape.constant(to_tensor<T>({1, c.T, c.T, c.d2}, c.e));
  return gptrans::gpa_forward(x, e, p, masks, toggles, 0.0, ctx);
}

template <class A, class B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0.0;
  const std::size_t n = std::min<std::size_t>(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  return m;
}

}  // namespace oracle
