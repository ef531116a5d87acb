#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gptrans/autodiff.hpp"
#include "gptrans/batch.hpp"
#include "gptrans/ops.hpp"

namespace gptrans {

/// Bound embedding tables for one forward pass. Parameter names live under `embed.`.
template <class T>
struct EmbeddingTables {
  std::vector<Var<T>> node_attr;  // [V_s, d1] per node slot
  Var<T> indeg;                   // [deg_clip+2, d1]
  Var<T> outdeg;                  // [deg_clip+2, d1]
  Var<T> virtual_node;            // [d1]
  std::vector<Var<T>> edge_attr;  // [V_s+2, d2] per edge slot; rows V_s and V_s+1 are NO-EDGE and PAD
  Var<T> rel_pos;                 // [spd_clip+4, d2]

  static EmbeddingTables bind(Tape<T>& tape, ParamStore<T>& store, std::size_t node_slots, std::size_t edge_slots) {
    EmbeddingTables t;
    for (std::size_t s = 0; s < node_slots; ++s) {
      const std::string name = "embed.node_attr" + std::to_string(s);
      if (!store.contains(name)) throw VocabularyError("batch has node attribute slot " + std::to_string(s) + " but the model has no table for it");
      t.node_attr.push_back(tape.param(store.get(name)));
    }
    t.indeg = tape.param(store.get("embed.indeg"));
    t.outdeg = tape.param(store.get("embed.outdeg"));
    t.virtual_node = tape.param(store.get("embed.virtual"));
    for (std::size_t s = 0; s < edge_slots; ++s) {
      const std::string name = "embed.edge_attr" + std::to_string(s);
      if (!store.contains(name)) throw VocabularyError("batch has edge attribute slot " + std::to_string(s) + " but the model has no table for it");
      t.edge_attr.push_back(tape.param(store.get(name)));
    }
    t.rel_pos = tape.param(store.get("embed.rel_pos"));
    return t;
  }
};

/// x_node = Σ_slots attr + indegree + outdegree for real nodes; the learned
/// virtual vector at position 0; zero rows at padding. Output [B, 1+N, d1].
template <class T>
Var<T> embed_nodes(const BatchedGraph& batch, const EmbeddingTables<T>& tables) {
  const std::size_t B = batch.batch_size, N = batch.max_nodes, Tn = N + 1;
  if (tables.indeg.dim(0) != batch.deg_vocab.table_size() || tables.outdeg.dim(0) != batch.deg_vocab.table_size())
    throw VocabularyError("degree table size does not match the batch's degree clip");
  auto shifted = [&](auto&& id_at) {
    IdTensor ids({B, Tn}, -1);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t v = 0; v < batch.num_nodes[b]; ++v) ids.at({b, v + 1}) = id_at(b, v);
    return ids;
  };

  Tape<T>& tape = tables.indeg.tape();
  Var<T> x;
  for (std::size_t s = 0; s < tables.node_attr.size(); ++s) {
    auto ids = shifted([&](std::size_t b, std::size_t v) { return batch.node_attr_ids.at({b, v, s}); });
    Var<T> e = ops::embed(tables.node_attr[s], ids);
    x = x.defined() ? ops::add(x, e) : e;
  }
  x = ops::add(x, ops::embed(tables.indeg, shifted([&](std::size_t b, std::size_t v) { return batch.indeg_ids.at({b, v}); })));
  x = ops::add(x, ops::embed(tables.outdeg, shifted([&](std::size_t b, std::size_t v) { return batch.outdeg_ids.at({b, v}); })));

  Tensor<T> indicator({1, Tn, 1}, T{0});
  indicator[0] = T{1};
  Var<T> virt = ops::mul(tape.constant(std::move(indicator)), tables.virtual_node);
  return ops::add(x, virt);
}

/// x_edge = rel_pos[spd bucket] + Σ_slots edge_attr[direct-edge id or NO-EDGE];
/// zero at pairs touching padding. Output [B, 1+N, 1+N, d2].
template <class T>
Var<T> embed_edges(const BatchedGraph& batch, const EmbeddingTables<T>& tables) {
  const std::size_t B = batch.batch_size, Tn = batch.tokens();
  if (tables.rel_pos.dim(0) != batch.spd_vocab.table_size())
    throw VocabularyError("relative-position table size does not match the batch's spd clip");
  const auto& nm = batch.node_mask;
  auto live = [&](std::size_t b, std::size_t i, std::size_t j) { return nm.at({b, i}) && nm.at({b, j}); };

  IdTensor rel({B, Tn, Tn}, -1);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < Tn; ++i)
      for (std::size_t j = 0; j < Tn; ++j)
        if (live(b, i, j)) rel.at({b, i, j}) = batch.spd.at({b, i, j});
  Var<T> x = ops::embed(tables.rel_pos, rel);

  for (std::size_t s = 0; s < tables.edge_attr.size(); ++s) {
    const auto vocab = static_cast<std::int32_t>(tables.edge_attr[s].dim(0)) - 2;
    IdTensor ids({B, Tn, Tn}, -1);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < Tn; ++i)
        for (std::size_t j = 0; j < Tn; ++j) {
          if (!live(b, i, j)) continue;
          const std::int32_t raw = batch.direct_edge_attr_ids.at({b, i, j, s});
          if (raw >= vocab)
            throw VocabularyError("edge attribute id " + std::to_string(raw) + " outside vocabulary of size " + std::to_string(vocab));
          ids.at({b, i, j}) = raw == kNoEdgeId ? vocab : (raw == kPadId ? vocab + 1 : raw);
        }
    x = ops::add(x, ops::embed(tables.edge_attr[s], ids));
  }
  return x;
}

}  // namespace gptrans
