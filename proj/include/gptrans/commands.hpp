#pragma once

// Building blocks shared by the command-line tool and the acceptance suite:
// whole-model gradient checks and block timing.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/batch.hpp"
#include "gptrans/config.hpp"
#include "gptrans/flops.hpp"
#include "gptrans/gradcheck.hpp"
#include "gptrans/model.hpp"
#include "gptrans/ops.hpp"

namespace gptrans {

/// Path graph 0-1-...-(n-1) plus a chord (0, n-1) when n > 2, with varied attributes.
inline Graph gradcheck_graph(std::size_t n) {
  if (n == 0) throw ConfigError("gradcheck graph needs at least one node");
  Graph g;
  g.num_nodes = n;
  for (std::size_t i = 0; i < n; ++i) g.node_attrs.push_back({static_cast<std::int32_t>(i % 4)});
  auto link = [&](std::size_t a, std::size_t b, std::int32_t bond) {
    g.edges.emplace_back(static_cast<std::int32_t>(a), static_cast<std::int32_t>(b));
    g.edge_attrs.push_back({bond});
  };
  for (std::size_t i = 0; i + 1 < n; ++i) link(i, i + 1, static_cast<std::int32_t>(i % 3));
  if (n > 2) link(n - 1, 0, 2);
  g.graph_target = 1.0;
  return g;
}

struct ModelGradcheckOptions {
  std::size_t n_nodes = 3;
  std::uint64_t seed = 0;
  /// Parameters are redrawn from N(0, weight_scale²) so that every path carries signal.
  double weight_scale = 0.3;
  GradcheckOptions check;
};

/// Finite-difference check of every parameter tensor of a double-precision model.
/// Regularization is switched off; the scalar is a fixed random readout of the
/// task output and both final streams, so every block parameter is reachable.
inline GradcheckReport model_gradcheck(ModelConfig cfg, const ModelGradcheckOptions& o) {
  cfg = without_regularization(cfg);
  cfg.task = parse_task("graph-regression");
  cfg.validate();
  const Vocab vocab{{4}, {3}};
  const std::vector<Graph> graphs{gradcheck_graph(o.n_nodes)};
  BatchOptions bo;
  bo.spd_clip = cfg.spd_clip;
  bo.deg_clip = cfg.deg_clip;
  const BatchedGraph batch = batch_graphs(graphs, bo);

  ParamStore<double> store = init_params<double>(cfg, vocab, o.seed);
  std::mt19937_64 rng(mix_seed(o.seed, 0x9c));
  std::normal_distribution<double> nd(0.0, o.weight_scale);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (double& v : store[i].value.data()) v = nd(rng);

  const std::size_t T = batch.max_nodes + 1;
  auto readout = [&](Shape shape) {
    Tensor<double> w(std::move(shape));
    for (double& v : w.data()) v = nd(rng);
    return w;
  };
  const Tensor<double> w_node = readout({1, T, cfg.d1}), w_edge = readout({1, T, T, cfg.d2});

  auto f = [&](Tape<double>& tape, ParamStore<double>& params) {
    ModelOutput<double> out = model_forward(tape, params, batch, cfg, false);
    Var<double> s = ops::add(ops::sum_all(ops::mul_const(out.node, w_node)), ops::sum_all(ops::mul_const(out.edge, w_edge)));
    return ops::add(s, ops::sum_all(out.output));
  };
  return gradcheck(f, store, o.check);
}

inline nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"name", e.name},
                       {"checked", e.checked},
                       {"max_abs_error", e.max_abs_error},
                       {"max_rel_error", e.max_rel_error},
                       {"pass", e.pass}});
  return {{"step", r.step}, {"tol", r.tol}, {"max_rel_error", r.max_rel_error()}, {"pass", r.pass()}, {"entries", entries}};
}

struct TimingStats {
  double median_ms = 0.0;
  double q1_ms = 0.0;
  double q3_ms = 0.0;
  std::size_t samples = 0;
  double iqr_ms() const { return q3_ms - q1_ms; }
};

/// Linear-interpolated quantile of an unsorted sample.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline TimingStats timing_stats(const std::vector<double>& ms) {
  return {quantile(ms, 0.5), quantile(ms, 0.25), quantile(ms, 0.75), ms.size()};
}

template <class F>
TimingStats time_it(F&& fn, std::size_t warmup, std::size_t iters) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(iters);
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return timing_stats(ms);
}

struct BlockBench {
  std::string block;  // "gpa" or "dual-ffn"
  std::size_t n_nodes = 0;
  double flops = 0.0;
  TimingStats forward;
  TimingStats forward_backward;
  bool with_backward = false;
};

inline nlohmann::json to_json(const TimingStats& t) {
  return {{"median_ms", t.median_ms}, {"q1_ms", t.q1_ms}, {"q3_ms", t.q3_ms}, {"iqr_ms", t.iqr_ms()}, {"samples", t.samples}};
}

inline nlohmann::json to_json(const BlockBench& b) {
  nlohmann::json j{{"block", b.block}, {"n_nodes", b.n_nodes}, {"flops", b.flops}, {"forward", to_json(b.forward)}};
  j["forward_backward"] = b.with_backward ? to_json(b.forward_backward) : nlohmann::json(nullptr);
  return j;
}

struct BenchOptions {
  std::size_t n_nodes = 128;
  std::size_t warmup = 10;
  std::size_t iters = 30;
  bool backward = false;
  std::uint64_t seed = 0;
};

/// Times one block (layer 0 of `cfg`) on a single fully-real graph of n_nodes
/// nodes in eval mode. `dual` selects the dual-FFN baseline block.
inline BlockBench bench_block(ModelConfig cfg, bool dual, const BenchOptions& o) {
  cfg = without_regularization(cfg);
  cfg.n_layers = 1;
  cfg.baseline_dual_ffn = dual;
  cfg.validate();
  ParamStore<float> store = init_params<float>(cfg, Vocab{{1}, {1}}, o.seed);
  const std::size_t T = o.n_nodes + 1;
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  Tensor<float> x({1, T, cfg.d1}), e({1, T, T, cfg.d2});
  for (float& v : x.data()) v = nd(rng);
  for (float& v : e.data()) v = nd(rng);
  const AttentionMasks masks = AttentionMasks::from_node_mask(MaskTensor({1, T}, 1));

  auto run = [&](bool grad) {
    Tape<float> tape(grad);
    StochasticContext ctx(false, 0);
    Streams<float> in{tape.constant(x), tape.constant(e)};
    Streams<float> out = dual ? dual_ffn_block_forward(tape, store, 0, in, masks, cfg, ctx)
                              : block_forward(tape, store, 0, in, masks, cfg, ctx);
    if (grad) tape.backward(ops::add(ops::sum_all(out.node), ops::sum_all(out.edge)));
  };

  BlockBench b;
  b.block = dual ? "dual-ffn" : "gpa";
  b.n_nodes = o.n_nodes;
  b.flops = estimate_block_flops(cfg, o.n_nodes).flops();
  b.forward = time_it([&] { run(false); }, o.warmup, o.iters);
  if (o.backward) {
    b.with_backward = true;
    b.forward_backward = time_it([&] { run(true); }, o.warmup, o.iters);
  }
  return b;
}

}  // namespace gptrans
