#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace gptrans;

namespace {

Graph path_graph(std::size_t n) {
  Graph g;
  g.num_nodes = n;
  g.node_attrs.assign(n, {1});
  for (std::size_t i = 0; i + 1 < n; ++i) {
    g.edges.emplace_back(static_cast<int>(i), static_cast<int>(i + 1));
    g.edge_attrs.push_back({2});
  }
  return g;
}

}  // namespace

TEST(Batch, PaddingAndMask) {
  std::vector<Graph> gs{path_graph(3), path_graph(5)};
  auto b = batch_graphs(gs);
  EXPECT_EQ(b.max_nodes, 5u);
  EXPECT_EQ(b.node_mask.shape(), (Shape{2, 6}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(b.node_mask.at({1, i}), 1);
  const std::vector<int> row0{1, 1, 1, 1, 0, 0};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(b.node_mask.at({0, i}), row0[i]);
}

TEST(Batch, SingleNodeGraph) {
  std::vector<Graph> gs{path_graph(1)};
  auto b = batch_graphs(gs);
  ASSERT_EQ(b.spd.shape(), (Shape{1, 2, 2}));
  const auto vt = b.spd_vocab.virtual_token();
  EXPECT_EQ(b.spd.at({0, 0, 0}), vt);
  EXPECT_EQ(b.spd.at({0, 0, 1}), vt);
  EXPECT_EQ(b.spd.at({0, 1, 0}), vt);
  EXPECT_EQ(b.spd.at({0, 1, 1}), 0);
}

TEST(Batch, DegreeClamp) {
  Graph g;
  g.num_nodes = 101;
  g.node_attrs.assign(101, {0});
  for (int i = 1; i <= 100; ++i) {
    g.edges.emplace_back(i, 0);
    g.edge_attrs.push_back({0});
  }
  std::vector<Graph> gs{g};
  BatchOptions o;
  o.deg_clip = 64;
  auto b = batch_graphs(gs, o);
  EXPECT_EQ(b.indeg_ids.at({0, 0}), 64);
  EXPECT_EQ(b.outdeg_ids.at({0, 0}), 0);
}

TEST(Batch, EmptyListThrows) {
  std::vector<Graph> none;
  EXPECT_THROW(batch_graphs(none), EmptyBatchError);
}

TEST(Batch, SpecialTokensAreDistinct) {
  BatchOptions o;
  o.spd_clip = 3;
  Graph g = path_graph(6);
  Graph lone;
  lone.num_nodes = 2;
  lone.node_attrs.assign(2, {0});
  std::vector<Graph> gs{g, lone};
  auto b = batch_graphs(gs, o);
  const auto& v = b.spd_vocab;
  std::set<std::int32_t> special{v.unreachable(), v.virtual_token(), v.pad()};
  EXPECT_EQ(special.size(), 3u);
  for (auto s : special) EXPECT_GT(s, o.spd_clip);
  EXPECT_EQ(b.spd.at({0, 1, 6}), 3);  // distance 5 clamped
  EXPECT_EQ(b.spd.at({1, 1, 2}), v.unreachable());
  EXPECT_EQ(b.spd.at({1, 3, 3}), v.pad());
  EXPECT_EQ(v.table_size(), static_cast<std::size_t>(o.spd_clip) + 4);
}

TEST(Batch, PaddedPositionsCarryPadSentinels) {
  std::vector<Graph> gs{path_graph(2), path_graph(4)};
  auto b = batch_graphs(gs);
  for (std::size_t v = 2; v < 4; ++v) {
    EXPECT_EQ(b.node_attr_ids.at({0, v, 0}), kPadId);
    EXPECT_EQ(b.indeg_ids.at({0, v}), b.deg_vocab.pad());
    EXPECT_EQ(b.outdeg_ids.at({0, v}), b.deg_vocab.pad());
  }
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const bool pad = i >= 3 || j >= 3;
      if (!pad) continue;
      EXPECT_EQ(b.spd.at({0, i, j}), b.spd_vocab.pad());
      EXPECT_EQ(b.direct_edge_attr_ids.at({0, i, j, 0}), kPadId);
    }
}

TEST(Batch, DirectEdgeAttributesOnly) {
  std::vector<Graph> gs{path_graph(3)};
  auto b = batch_graphs(gs);
  EXPECT_EQ(b.direct_edge_attr_ids.at({0, 1, 2, 0}), 2);
  EXPECT_EQ(b.direct_edge_attr_ids.at({0, 2, 1, 0}), kNoEdgeId);  // reverse direction has no edge record
  EXPECT_EQ(b.direct_edge_attr_ids.at({0, 1, 3, 0}), kNoEdgeId);
  EXPECT_EQ(b.direct_edge_attr_ids.at({0, 0, 1, 0}), kNoEdgeId);
}

TEST(Batch, SpdMatchesFloydWarshall) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 9;
    std::vector<Graph> gs{oracle::random_graph(rng, n, rng() % (2 * n))};
    BatchOptions o;
    o.spd_clip = 4;
    auto b = batch_graphs(gs, o);
    auto fw = oracle::floyd_warshall(gs[0]);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(b.spd.at({0, i + 1, i + 1}), 0);
      for (std::size_t j = 0; j < n; ++j) {
        const int d = fw[i * n + j];
        const int expect = d == oracle::kInf ? b.spd_vocab.unreachable() : std::min(d, 4);
        ASSERT_EQ(b.spd.at({0, i + 1, j + 1}), expect);
      }
    }
  }
}

TEST(Batch, VirtualNodeNeverMasked) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Graph> gs;
    for (std::size_t k = 0; k < 1 + rng() % 4; ++k) gs.push_back(oracle::random_graph(rng, 1 + rng() % 6, rng() % 5));
    auto b = batch_graphs(gs);
    for (std::size_t bi = 0; bi < b.batch_size; ++bi) ASSERT_EQ(b.node_mask.at({bi, 0}), 1);
  }
}

TEST(Batch, OrderStable) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g1 = oracle::random_graph(rng, 1 + rng() % 6, rng() % 8);
    Graph g2 = oracle::random_graph(rng, 1 + rng() % 6, rng() % 8);
    std::vector<Graph> both{g1, g2}, alone{g1};
    auto bb = batch_graphs(both);
    BatchOptions o;
    o.pad_to = bb.max_nodes;
    auto ba = batch_graphs(alone, o);
    const std::size_t T = bb.tokens(), N = bb.max_nodes;
    for (std::size_t v = 0; v < N; ++v) {
      ASSERT_EQ(bb.node_attr_ids.at({0, v, 0}), ba.node_attr_ids.at({0, v, 0}));
      ASSERT_EQ(bb.indeg_ids.at({0, v}), ba.indeg_ids.at({0, v}));
      ASSERT_EQ(bb.outdeg_ids.at({0, v}), ba.outdeg_ids.at({0, v}));
    }
    for (std::size_t i = 0; i < T; ++i) {
      ASSERT_EQ(bb.node_mask.at({0, i}), ba.node_mask.at({0, i}));
      for (std::size_t j = 0; j < T; ++j) {
        ASSERT_EQ(bb.spd.at({0, i, j}), ba.spd.at({0, i, j}));
        ASSERT_EQ(bb.direct_edge_attr_ids.at({0, i, j, 0}), ba.direct_edge_attr_ids.at({0, i, j, 0}));
      }
    }
  }
}

TEST(Batch, TargetsAlignWithPositions) {
  Graph g = path_graph(3);
  g.node_targets = std::vector<std::int32_t>{1, 0, 1};
  g.edge_targets = std::vector<std::int32_t>{1, 0};
  g.graph_target = 2.5;
  std::vector<Graph> gs{g, path_graph(4)};
  auto b = batch_graphs(gs);
  auto t = batch_targets(gs, b);
  EXPECT_EQ(t.graph_mask[0], 1);
  EXPECT_EQ(t.graph_mask[1], 0);
  EXPECT_EQ(t.node_labels.at({0, 2}), 1);
  EXPECT_EQ(t.node_mask.at({0, 3}), 0);
  EXPECT_EQ(t.edge_labels.at({0, 1, 2}), 1);
  EXPECT_EQ(t.edge_mask.at({0, 2, 3}), 1);
  EXPECT_EQ(t.edge_mask.at({0, 3, 2}), 0);
}
