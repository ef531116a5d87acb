#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gptrans/autodiff.hpp"
#include "gptrans/batch.hpp"
#include "gptrans/config.hpp"
#include "gptrans/embedding.hpp"
#include "gptrans/gpa.hpp"
#include "gptrans/ops.hpp"
#include "gptrans/regularize.hpp"

namespace gptrans {

enum class Init { TruncNormal, Zero, One, LayerScale };

struct ParamSpec {
  std::string name;
  Shape shape;
  bool decay;
  Init init;
};

inline std::string block_prefix(std::size_t layer) { return "block" + std::to_string(layer) + "."; }

/// Width of the stream the head reads (node width for graph/node tasks, edge width for edge tasks).
inline std::size_t head_input_dim(const ModelConfig& cfg) {
  return cfg.task.kind == TaskKind::EdgeClassification ? cfg.d2 : cfg.d1;
}

/// Every parameter of the model in checkpoint order.
inline std::vector<ParamSpec> param_specs(const ModelConfig& cfg, const Vocab& vocab) {
  cfg.validate();
  const std::size_t d1 = cfg.d1, d2 = cfg.d2, H = cfg.n_head;
  std::vector<ParamSpec> s;
  auto add = [&](std::string name, Shape shape, bool decay, Init init) {
    s.push_back({std::move(name), std::move(shape), decay, init});
  };
  for (std::size_t i = 0; i < vocab.node_attr.size(); ++i)
    add("embed.node_attr" + std::to_string(i), {vocab.node_attr[i], d1}, false, Init::TruncNormal);
  const DegreeVocab deg{cfg.deg_clip};
  const SpdVocab spd{cfg.spd_clip};
  add("embed.indeg", {deg.table_size(), d1}, false, Init::TruncNormal);
  add("embed.outdeg", {deg.table_size(), d1}, false, Init::TruncNormal);
  add("embed.virtual", {d1}, false, Init::TruncNormal);
  for (std::size_t i = 0; i < vocab.edge_attr.size(); ++i)
    add("embed.edge_attr" + std::to_string(i), {vocab.edge_attr[i] + 2, d2}, false, Init::TruncNormal);
  add("embed.rel_pos", {spd.table_size(), d2}, false, Init::TruncNormal);

  const std::size_t hidden = cfg.ffn_hidden();
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = block_prefix(l);
    add(p + "ln1.gain", {d1}, false, Init::One);
    add(p + "ln1.bias", {d1}, false, Init::Zero);
    add(p + "gpa.w_q", {d1, d1}, true, Init::TruncNormal);
    add(p + "gpa.w_k", {d1, d1}, true, Init::TruncNormal);
    add(p + "gpa.w_v", {d1, d1}, true, Init::TruncNormal);
    add(p + "gpa.w_o", {d1, d1}, true, Init::TruncNormal);
    add(p + "gpa.w_reduce", {d2, H}, true, Init::TruncNormal);
    if (!cfg.baseline_dual_ffn && cfg.toggles.node_to_edge) {
      add(p + "gpa.w_expand", {H, d2}, true, Init::TruncNormal);
      if (cfg.toggles.edge_to_node) {
        add(p + "gpa.fuse_fc.weight", {d2, d1}, true, Init::TruncNormal);
        add(p + "gpa.fuse_fc.bias", {d1}, false, Init::Zero);
      }
    }
    add(p + "ln2.gain", {d1}, false, Init::One);
    add(p + "ln2.bias", {d1}, false, Init::Zero);
    add(p + "ffn.fc1.weight", {d1, hidden}, true, Init::TruncNormal);
    add(p + "ffn.fc1.bias", {hidden}, false, Init::Zero);
    add(p + "ffn.fc2.weight", {hidden, d1}, true, Init::TruncNormal);
    add(p + "ffn.fc2.bias", {d1}, false, Init::Zero);
    if (cfg.baseline_dual_ffn) {
      const std::size_t eh = cfg.edge_ffn_hidden();
      add(p + "ln_edge.gain", {d2}, false, Init::One);
      add(p + "ln_edge.bias", {d2}, false, Init::Zero);
      add(p + "ffn_edge.fc1.weight", {d2, eh}, true, Init::TruncNormal);
      add(p + "ffn_edge.fc1.bias", {eh}, false, Init::Zero);
      add(p + "ffn_edge.fc2.weight", {eh, d2}, true, Init::TruncNormal);
      add(p + "ffn_edge.fc2.bias", {d2}, false, Init::Zero);
    }
    if (cfg.layer_scale) {
      add(p + "gamma_node", {d1}, false, Init::LayerScale);
      add(p + "gamma_edge", {d2}, false, Init::LayerScale);
      add(p + "ffn.gamma", {d1}, false, Init::LayerScale);
    }
  }
  const std::size_t din = head_input_dim(cfg);
  const std::size_t dout = cfg.task.output_dim();
  add("head.ln.gain", {din}, false, Init::One);
  add("head.ln.bias", {din}, false, Init::Zero);
  add("head.fc1.weight", {din, din}, true, Init::TruncNormal);
  add("head.fc1.bias", {din}, false, Init::Zero);
  add("head.fc2.weight", {din, dout}, true, Init::TruncNormal);
  add("head.fc2.bias", {dout}, false, Init::Zero);
  return s;
}

/// Exact number of scalar parameters, embedding tables and head included.
inline std::size_t count_params(const ModelConfig& cfg, const Vocab& vocab) {
  std::size_t n = 0;
  for (const auto& s : param_specs(cfg, vocab)) n += numel(s.shape);
  return n;
}

/// Zero-mean normal, std 0.02, truncated at two standard deviations.
template <class T>
ParamStore<T> init_params(const ModelConfig& cfg, const Vocab& vocab, std::uint64_t seed) {
  ParamStore<T> store;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& s : param_specs(cfg, vocab)) {
    Param<T>& p = store.add(s.name, s.shape, s.decay);
    for (auto& v : p.value.data()) {
      switch (s.init) {
        case Init::TruncNormal: {
          double z;
          do z = normal(rng);
          while (std::abs(z) > 2.0);
          v = static_cast<T>(0.02 * z);
          break;
        }
        case Init::Zero: v = T{0}; break;
        case Init::One: v = T{1}; break;
        case Init::LayerScale: v = static_cast<T>(cfg.layer_scale_init); break;
      }
    }
  }
  return store;
}

template <class T>
struct Streams {
  Var<T> node;
  Var<T> edge;
};

template <class T>
Var<T> layer_norm_param(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix, const Var<T>& x) {
  return ops::layer_norm(x, tape.param(store.get(prefix + "gain")), tape.param(store.get(prefix + "bias")), T{1e-5});
}

template <class T>
Var<T> ffn_param(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix, const Var<T>& x) {
  Var<T> h = ops::gelu(ops::linear(x, tape.param(store.get(prefix + "fc1.weight")), tape.param(store.get(prefix + "fc1.bias"))));
  return ops::linear(h, tape.param(store.get(prefix + "fc2.weight")), tape.param(store.get(prefix + "fc2.bias")));
}

namespace detail {

template <class T>
Var<T> scaled(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg, const std::string& name, const Var<T>& x) {
  if (!cfg.layer_scale) return x;
  return ops::mul(x, tape.param(store.get(name)));
}

// FFN sub-block: x + droppath(γ · dropout(FFN(LN(x)))).
template <class T>
Var<T> ffn_residual(Tape<T>& tape, ParamStore<T>& store, const std::string& p, const Var<T>& x,
                    const AttentionMasks& masks, const ModelConfig& cfg, StochasticContext& ctx) {
  Var<T> f = ffn_param(tape, store, p + "ffn.", layer_norm_param(tape, store, p + "ln2.", x));
  f = ops::masked_fill(dropout(f, cfg.dropout_ffn, ctx), masks.row, T{0});
  f = scaled(tape, store, cfg, p + "ffn.gamma", f);
  return ops::add(x, drop_path(f, cfg.drop_path_rate, ctx));
}

}  // namespace detail

/// One GPTrans block:
///   x̂_node, x_edge += GPA(LN(x_node), x_edge);  x_node = FFN(LN(x̂_node)) + x̂_node
template <class T>
Streams<T> block_forward(Tape<T>& tape, ParamStore<T>& store, std::size_t layer, const Streams<T>& in,
                         const AttentionMasks& masks, const ModelConfig& cfg, StochasticContext& ctx,
                         GPAOutput<T>* gpa_out = nullptr) {
  const std::string p = block_prefix(layer);
  GPAParams<T> gp = GPAParams<T>::bind(tape, store, p + "gpa.", cfg.n_head, cfg.toggles);
  Var<T> normed = layer_norm_param(tape, store, p + "ln1.", in.node);
  GPAOutput<T> g = gpa_forward(normed, in.edge, gp, masks, cfg.toggles, cfg.dropout_attn, ctx);
  Streams<T> out;
  Var<T> node_branch = detail::scaled(tape, store, cfg, p + "gamma_node", g.node_update);
  out.node = ops::add(in.node, drop_path(node_branch, cfg.drop_path_rate, ctx));
  if (cfg.toggles.node_to_edge) {
    Var<T> edge_branch = detail::scaled(tape, store, cfg, p + "gamma_edge", g.edge_update);
    out.edge = ops::add(in.edge, drop_path(edge_branch, cfg.drop_path_rate, ctx));
  } else {
    out.edge = in.edge;
  }
  out.node = detail::ffn_residual(tape, store, p, out.node, masks, cfg, ctx);
  if (gpa_out) *gpa_out = g;
  return out;
}

/// Baseline block: node stream as in block_forward with both propagation paths
/// off; the edge stream gets its own LN + FFN residual instead.
template <class T>
Streams<T> dual_ffn_block_forward(Tape<T>& tape, ParamStore<T>& store, std::size_t layer, const Streams<T>& in,
                                  const AttentionMasks& masks, const ModelConfig& cfg, StochasticContext& ctx) {
  const std::string p = block_prefix(layer);
  const PathToggles off{false, false};
  GPAParams<T> gp = GPAParams<T>::bind(tape, store, p + "gpa.", cfg.n_head, off);
  Var<T> normed = layer_norm_param(tape, store, p + "ln1.", in.node);
  GPAOutput<T> g = gpa_forward(normed, in.edge, gp, masks, off, cfg.dropout_attn, ctx);
  Streams<T> out;
  Var<T> node_branch = detail::scaled(tape, store, cfg, p + "gamma_node", g.node_update);
  out.node = ops::add(in.node, drop_path(node_branch, cfg.drop_path_rate, ctx));

  Var<T> e = ffn_param(tape, store, p + "ffn_edge.", layer_norm_param(tape, store, p + "ln_edge.", in.edge));
  e = ops::masked_fill(dropout(e, cfg.dropout_ffn, ctx), masks.pair, T{0});
  e = detail::scaled(tape, store, cfg, p + "gamma_edge", e);
  out.edge = ops::add(in.edge, drop_path(e, cfg.drop_path_rate, ctx));

  out.node = detail::ffn_residual(tape, store, p, out.node, masks, cfg, ctx);
  return out;
}

template <class T>
struct ModelOutput {
  Var<T> output;        // graph: [B, out]; node: [B, N, out]; edge: [B, T, T, out]
  Var<T> node;          // final node stream [B, T, d1]
  Var<T> edge;          // final edge stream [B, T, T, d2]
  Var<T> edge_initial;  // edge embeddings before the first block
};

/// Two affine layers with GELU between, after a final LN.
template <class T>
Var<T> head_forward(Tape<T>& tape, ParamStore<T>& store, const Var<T>& x) {
  Var<T> h = layer_norm_param(tape, store, "head.ln.", x);
  h = ops::gelu(ops::linear(h, tape.param(store.get("head.fc1.weight")), tape.param(store.get("head.fc1.bias"))));
  return ops::linear(h, tape.param(store.get("head.fc2.weight")), tape.param(store.get("head.fc2.bias")));
}

/// embed -> L blocks -> head. `seed` drives dropout / drop path when `train_mode`.
template <class T>
ModelOutput<T> model_forward(Tape<T>& tape, ParamStore<T>& store, const BatchedGraph& batch, const ModelConfig& cfg,
                             bool train_mode, std::uint64_t seed = 0) {
  if (batch.spd_vocab.clip != cfg.spd_clip || batch.deg_vocab.clip != cfg.deg_clip)
    throw ConfigError("batch clip settings do not match the model config");
  StochasticContext ctx(train_mode, seed);
  const AttentionMasks masks = AttentionMasks::from_node_mask(batch.node_mask);
  auto tables = EmbeddingTables<T>::bind(tape, store, batch.node_slots, batch.edge_slots);

  Streams<T> s;
  s.node = dropout(embed_nodes(batch, tables), cfg.dropout_embed, ctx);
  s.edge = embed_edges(batch, tables);
  ModelOutput<T> out;
  out.edge_initial = s.edge;
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    s = cfg.baseline_dual_ffn ? dual_ffn_block_forward(tape, store, l, s, masks, cfg, ctx)
                              : block_forward(tape, store, l, s, masks, cfg, ctx);
  out.node = s.node;
  out.edge = s.edge;

  switch (cfg.task.kind) {
    case TaskKind::GraphRegression:
    case TaskKind::GraphClassification:
      out.output = head_forward(tape, store, ops::select(s.node, 1, 0));
      break;
    case TaskKind::NodeClassification:
      out.output = head_forward(tape, store, ops::narrow(s.node, 1, 1, batch.max_nodes));
      break;
    case TaskKind::EdgeClassification:
      out.output = head_forward(tape, store, s.edge);
      break;
  }
  return out;
}

}  // namespace gptrans
