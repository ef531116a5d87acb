#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "gptrans/autodiff.hpp"
#include "gptrans/config.hpp"
#include "gptrans/ops.hpp"
#include "gptrans/regularize.hpp"

namespace gptrans {

/// Logit written into masked keys of the reported attention map.
inline constexpr double kMaskedLogit = -1e9;

/// Masks derived once per batch from node_mask [B, 1+N].
struct AttentionMasks {
  MaskTensor key;       // [B, 1, 1, T]  keys of the node attention
  MaskTensor edge_key;  // [B, 1, T, 1]  key axis of x_edge [B, T, T, C]
  MaskTensor pair;      // [B, T, T, 1]  both endpoints real
  MaskTensor row;       // [B, T, 1]

  static AttentionMasks from_node_mask(const MaskTensor& node_mask) {
    const std::size_t B = node_mask.dim(0), T = node_mask.dim(1);
    AttentionMasks m;
    m.key = MaskTensor({B, 1, 1, T}, node_mask.vec());
    m.edge_key = MaskTensor({B, 1, T, 1}, node_mask.vec());
    m.row = MaskTensor({B, T, 1}, node_mask.vec());
    m.pair = MaskTensor({B, T, T, 1}, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < T; ++j)
          m.pair.at({b, i, j, 0}) = node_mask.at({b, i}) && node_mask.at({b, j});
    return m;
  }
};

/// Bound GPA parameters. `w_expand` / `fc_*` are undefined when their path is disabled.
template <class T>
struct GPAParams {
  Var<T> w_q, w_k, w_v, w_o;  // [d1, d1]
  Var<T> w_reduce;            // [d2, H]
  Var<T> w_expand;            // [H, d2]
  Var<T> fc_weight;           // [d2, d1]
  Var<T> fc_bias;             // [d1]
  std::size_t n_head = 1;

  static GPAParams bind(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix, std::size_t n_head,
                        const PathToggles& toggles) {
    GPAParams p;
    p.n_head = n_head;
    p.w_q = tape.param(store.get(prefix + "w_q"));
    p.w_k = tape.param(store.get(prefix + "w_k"));
    p.w_v = tape.param(store.get(prefix + "w_v"));
    p.w_o = tape.param(store.get(prefix + "w_o"));
    p.w_reduce = tape.param(store.get(prefix + "w_reduce"));
    if (toggles.node_to_edge) p.w_expand = tape.param(store.get(prefix + "w_expand"));
    if (toggles.node_to_edge && toggles.edge_to_node) {
      p.fc_weight = tape.param(store.get(prefix + "fuse_fc.weight"));
      p.fc_bias = tape.param(store.get(prefix + "fuse_fc.bias"));
    }
    return p;
  }
};

template <class T>
struct GPAOutput {
  Var<T> node_update;  // [B, T, d1], pre-residual
  Var<T> edge_update;  // [B, T, T, d2], pre-residual
  Var<T> attention;    // [B, H, T, T], post-bias pre-softmax, masked keys at kMaskedLogit
};

/// φ[b,h,i,j] = Σ_c x_edge[b,i,j,c] W_reduce[c,h].
template <class T>
Var<T> attention_bias(const Var<T>& x_edge, const Var<T>& w_reduce) {
  if (x_edge.rank() != 4) throw ShapeError("x_edge must be [B, T, T, d2]");
  return ops::permute(ops::matmul(x_edge, w_reduce), {0, 3, 1, 2});
}

template <class T>
struct NodeToNodeResult {
  Var<T> x_node;     // [B, T, d1], heads concatenated, before W_O
  Var<T> logits;     // A, [B, H, T, T]
  Var<T> probs;      // softmax(A) over unmasked keys (undropped)
  Var<T> attention;  // A with masked keys replaced by kMaskedLogit
};

template <class T>
struct AttentionCore {
  Var<T> logits;  // [B, H, T, T]
  Var<T> probs;   // softmax over unmasked keys
  Var<T> output;  // [B, H, T, d_head]
};

/// Per-head biased attention on already projected q, k, v of shape [B, H, T, d_head].
template <class T>
AttentionCore<T> biased_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const Var<T>& phi,
                                  const AttentionMasks& masks, double attn_dropout, StochasticContext& ctx) {
  const std::size_t dh = q.dim(3);
  AttentionCore<T> r;
  Var<T> scores = ops::scale(ops::matmul(q, k, /*transpose_b=*/true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  r.logits = ops::add(scores, phi);
  r.probs = ops::softmax(r.logits, 3, &masks.key);
  r.output = ops::matmul(dropout(r.probs, attn_dropout, ctx), v);
  return r;
}

/// A = Q K^T / sqrt(d_head) + φ; x' = softmax(A) V with heads re-concatenated.
template <class T>
NodeToNodeResult<T> node_to_node(const Var<T>& x_node, const Var<T>& phi, const GPAParams<T>& p,
                                 const AttentionMasks& masks, double attn_dropout, StochasticContext& ctx) {
  const std::size_t B = x_node.dim(0), Tn = x_node.dim(1), d1 = x_node.dim(2);
  const std::size_t H = p.n_head;
  if (d1 % H != 0) throw ShapeError("d1 must be divisible by n_head");
  const std::size_t dh = d1 / H;
  auto heads = [&](const Var<T>& w) {
    return ops::permute(ops::reshape(ops::matmul(x_node, w), {B, Tn, H, dh}), {0, 2, 1, 3});
  };
  AttentionCore<T> core = biased_attention(heads(p.w_q), heads(p.w_k), heads(p.w_v), phi, masks, attn_dropout, ctx);
  NodeToNodeResult<T> r;
  r.logits = core.logits;
  r.probs = core.probs;
  r.attention = ops::masked_fill(r.logits, masks.key, static_cast<T>(kMaskedLogit));
  r.x_node = ops::reshape(ops::permute(core.output, {0, 2, 1, 3}), {B, Tn, d1});
  return r;
}

/// x'_edge = (A + softmax(A)) W_expand, given the already computed softmax.
template <class T>
Var<T> node_to_edge(const Var<T>& logits, const Var<T>& probs, const Var<T>& w_expand, const AttentionMasks& masks) {
  Var<T> s = ops::permute(ops::add(logits, probs), {0, 2, 3, 1});  // [B, T, T, H]
  return ops::masked_fill(ops::matmul(s, w_expand), masks.pair, T{0});
}

/// x'_edge = (A + softmax(A)) W_expand, with softmax over the unmasked key axis.
template <class T>
Var<T> node_to_edge(const Var<T>& logits, const Var<T>& w_expand, const AttentionMasks& masks) {
  return node_to_edge(logits, ops::softmax(logits, 3, &masks.key), w_expand, masks);
}

/// x''_node = FC(Σ_j x'_edge ∘ softmax_j(x'_edge)), softmax per (i, channel) over unmasked j.
template <class T>
Var<T> edge_to_node(const Var<T>& edge_prime, const Var<T>& fc_weight, const Var<T>& fc_bias,
                    const AttentionMasks& masks) {
  Var<T> w = ops::softmax(edge_prime, 2, &masks.edge_key);
  Var<T> pooled = ops::sum(ops::mul(edge_prime, w), 2);  // [B, T, d2]
  return ops::linear(pooled, fc_weight, fc_bias);
}

/// Full graph propagation attention. Node-to-node is always on; edge-to-node
/// requires node-to-edge.
template <class T>
GPAOutput<T> gpa_forward(const Var<T>& x_node, const Var<T>& x_edge, const GPAParams<T>& p,
                         const AttentionMasks& masks, const PathToggles& toggles, double attn_dropout,
                         StochasticContext& ctx) {
  Var<T> phi = attention_bias(x_edge, p.w_reduce);
  NodeToNodeResult<T> n2n = node_to_node(x_node, phi, p, masks, attn_dropout, ctx);
  GPAOutput<T> out;
  out.attention = n2n.attention;
  Var<T> fused = n2n.x_node;
  if (toggles.node_to_edge) {
    out.edge_update = node_to_edge(n2n.logits, n2n.probs, p.w_expand, masks);
    if (toggles.edge_to_node) fused = ops::add(fused, edge_to_node(out.edge_update, p.fc_weight, p.fc_bias, masks));
  } else {
    out.edge_update = x_edge.tape().constant(Tensor<T>(x_edge.shape(), T{0}));
  }
  out.node_update = ops::masked_fill(ops::matmul(fused, p.w_o), masks.row, T{0});
  return out;
}

}  // namespace gptrans
