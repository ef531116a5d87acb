#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace gptrans;

namespace {

constexpr std::size_t kD1 = 6, kD2 = 4;

struct Fixture {
  ParamStore<double> store;
  BatchOptions opt;
  std::vector<std::size_t> node_vocab{5, 3};
  std::vector<std::size_t> edge_vocab{4};

  explicit Fixture(std::uint64_t seed, double scale = 1.0) {
    opt.spd_clip = 3;
    opt.deg_clip = 4;
    std::mt19937_64 rng(seed);
    auto put = [&](const std::string& n, Shape s) { store.add(n, s, false).value = oracle::random_tensor<double>(rng, s, scale); };
    for (std::size_t s = 0; s < node_vocab.size(); ++s) put("embed.node_attr" + std::to_string(s), {node_vocab[s], kD1});
    put("embed.indeg", {static_cast<std::size_t>(opt.deg_clip) + 2, kD1});
    put("embed.outdeg", {static_cast<std::size_t>(opt.deg_clip) + 2, kD1});
    put("embed.virtual", {kD1});
    for (std::size_t s = 0; s < edge_vocab.size(); ++s) put("embed.edge_attr" + std::to_string(s), {edge_vocab[s] + 2, kD2});
    put("embed.rel_pos", {static_cast<std::size_t>(opt.spd_clip) + 4, kD2});
  }
  const Tensor<double>& t(const std::string& n) { return store.get("embed." + n).value; }
};

std::vector<Graph> random_batch(std::mt19937_64& rng, std::size_t count) {
  std::vector<Graph> gs;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t n = 1 + rng() % 6;
    Graph g = oracle::random_graph(rng, n, rng() % (2 * n + 1), 3, 4, 2, 1);
    for (auto& a : g.node_attrs) a[0] = static_cast<std::int32_t>(rng() % 5);
    gs.push_back(g);
  }
  return gs;
}

}  // namespace

TEST(EmbedNodes, AllZeroTablesGiveZero) {
  Fixture f(1, 0.0);
  std::mt19937_64 rng(1);
  auto gs = random_batch(rng, 3);
  auto b = batch_graphs(gs, f.opt);
  Tape<double> tape;
  auto tables = EmbeddingTables<double>::bind(tape, f.store, b.node_slots, b.edge_slots);
  for (double v : embed_nodes(b, tables).value()) EXPECT_EQ(v, 0.0);
  for (double v : embed_edges(b, tables).value()) EXPECT_EQ(v, 0.0);
}

TEST(EmbedNodes, SingleNodeIsSumOfThreeLookups) {
  Fixture f(2);
  f.node_vocab = {5, 3};
  // node 1 has attr (3, 2), indegree 1, outdegree 2
  Graph g = parse_graph(R"({"num_nodes":3,"edges":[[0,1],[1,0],[1,2]],"node_attrs":[[0,0],[3,2],[1,1]]})");
  std::vector<Graph> gs{g};
  auto b = batch_graphs(gs, f.opt);
  Tape<double> tape;
  auto x = embed_nodes(b, EmbeddingTables<double>::bind(tape, f.store, 2, 1)).tensor();
  for (std::size_t c = 0; c < kD1; ++c) {
    const double expect = f.t("node_attr0").at({3, c}) + f.t("node_attr1").at({2, c}) + f.t("indeg").at({1, c}) +
                          f.t("outdeg").at({2, c});
    EXPECT_NEAR(x.at({0, 2, c}), expect, 1e-12);
  }
}

TEST(EmbedNodes, MatchesLoopOracle) {
  Fixture f(3);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto gs = random_batch(rng, 1 + rng() % 3);
    auto b = batch_graphs(gs, f.opt);
    Tape<double> tape;
    auto x = embed_nodes(b, EmbeddingTables<double>::bind(tape, f.store, 2, 1)).tensor();
    for (std::size_t bi = 0; bi < gs.size(); ++bi) {
      const auto deg = degree_stats(gs[bi]);
      for (std::size_t i = 0; i <= b.max_nodes; ++i)
        for (std::size_t c = 0; c < kD1; ++c) {
          double expect = 0.0;
          if (i == 0) {
            expect = f.t("virtual")[c];
          } else if (i <= gs[bi].num_nodes) {
            const auto& a = gs[bi].node_attrs[i - 1];
            expect = f.t("node_attr0").at({static_cast<std::size_t>(a[0]), c}) +
                     f.t("node_attr1").at({static_cast<std::size_t>(a[1]), c}) +
                     f.t("indeg").at({static_cast<std::size_t>(std::min(deg.indegree[i - 1], 4)), c}) +
                     f.t("outdeg").at({static_cast<std::size_t>(std::min(deg.outdegree[i - 1], 4)), c});
          }
          ASSERT_NEAR(x.at({bi, i, c}), expect, 1e-12);
        }
    }
  }
}

TEST(EmbedNodes, OutOfRangeIdThrows) {
  Fixture f(4);
  Graph g = parse_graph(R"({"num_nodes":1,"edges":[],"node_attrs":[[9,0]]})");
  std::vector<Graph> gs{g};
  auto b = batch_graphs(gs, f.opt);
  Tape<double> tape;
  EXPECT_THROW(embed_nodes(b, EmbeddingTables<double>::bind(tape, f.store, 2, 1)), VocabularyError);
}

TEST(EmbedEdges, TwoNodeDirectedReading) {
  Fixture f(5);
  Graph g = parse_graph(R"({"num_nodes":2,"edges":[[0,1]],"node_attrs":[[0,0],[0,0]],"edge_attrs":[[2]]})");
  std::vector<Graph> gs{g};
  auto b = batch_graphs(gs, f.opt);
  Tape<double> tape;
  auto x = embed_edges(b, EmbeddingTables<double>::bind(tape, f.store, 2, 1)).tensor();
  const std::size_t no_edge = f.edge_vocab[0];
  for (std::size_t c = 0; c < kD2; ++c) {
    EXPECT_NEAR(x.at({0, 1, 2, c}), f.t("rel_pos").at({1, c}) + f.t("edge_attr0").at({2, c}), 1e-12);
    EXPECT_NEAR(x.at({0, 2, 1, c}), f.t("rel_pos").at({1, c}) + f.t("edge_attr0").at({no_edge, c}), 1e-12);
  }
}

TEST(EmbedEdges, MatchesLoopOracleAndZeroesPadding) {
  Fixture f(6);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto gs = random_batch(rng, 1 + rng() % 3);
    auto b = batch_graphs(gs, f.opt);
    Tape<double> tape;
    auto x = embed_edges(b, EmbeddingTables<double>::bind(tape, f.store, 2, 1)).tensor();
    const std::size_t Tn = b.tokens();
    for (std::size_t bi = 0; bi < gs.size(); ++bi) {
      const std::size_t n = gs[bi].num_nodes;
      const auto fw = oracle::floyd_warshall(gs[bi]);
      for (std::size_t i = 0; i < Tn; ++i)
        for (std::size_t j = 0; j < Tn; ++j) {
          std::vector<double> expect(kD2, 0.0);
          if (i <= n && j <= n) {
            std::size_t bucket;
            if (i == 0 || j == 0) bucket = 5;  // virtual token, clip 3
            else {
              const int d = fw[(i - 1) * n + (j - 1)];
              bucket = d == oracle::kInf ? 4 : static_cast<std::size_t>(std::min(d, 3));
            }
            std::size_t edge_row = f.edge_vocab[0];
            if (i > 0 && j > 0)
              for (std::size_t e = 0; e < gs[bi].edges.size(); ++e)
                if (gs[bi].edges[e] == std::pair<std::int32_t, std::int32_t>(static_cast<int>(i - 1), static_cast<int>(j - 1)))
                  edge_row = static_cast<std::size_t>(gs[bi].edge_attrs[e][0]);
            for (std::size_t c = 0; c < kD2; ++c) expect[c] = f.t("rel_pos").at({bucket, c}) + f.t("edge_attr0").at({edge_row, c});
          }
          for (std::size_t c = 0; c < kD2; ++c) ASSERT_NEAR(x.at({bi, i, j, c}), expect[c], 1e-12);
        }
    }
  }
}

TEST(EmbedEdges, OutOfRangeEdgeIdThrows) {
  Fixture f(7);
  Graph g = parse_graph(R"({"num_nodes":2,"edges":[[0,1]],"node_attrs":[[0,0],[0,0]],"edge_attrs":[[4]]})");
  std::vector<Graph> gs{g};
  auto b = batch_graphs(gs, f.opt);
  Tape<double> tape;
  EXPECT_THROW(embed_edges(b, EmbeddingTables<double>::bind(tape, f.store, 2, 1)), VocabularyError);
}

TEST(Embedding, PermutationEquivariance) {
  Fixture f(8);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto gs = random_batch(rng, 1);
    const std::size_t n = gs[0].num_nodes;
    auto perm = oracle::random_perm(rng, n);
    std::vector<Graph> ps{oracle::permute_graph(gs[0], perm)};
    auto b = batch_graphs(gs, f.opt), bp = batch_graphs(ps, f.opt);
    Tape<double> tape;
    auto tb = EmbeddingTables<double>::bind(tape, f.store, 2, 1);
    auto xn = embed_nodes(b, tb).tensor(), xnp = embed_nodes(bp, tb).tensor();
    auto xe = embed_edges(b, tb).tensor(), xep = embed_edges(bp, tb).tensor();
    auto tok = [&](std::size_t i) { return i == 0 ? 0 : perm[i - 1] + 1; };
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t c = 0; c < kD1; ++c) ASSERT_EQ(xn.at({0, i, c}), xnp.at({0, tok(i), c}));
      for (std::size_t j = 0; j <= n; ++j)
        for (std::size_t c = 0; c < kD2; ++c) ASSERT_EQ(xe.at({0, i, j, c}), xep.at({0, tok(i), tok(j), c}));
    }
  }
}

TEST(Embedding, GradientScattersOnlyIntoIndexedRows) {
  Fixture f(9);
  Graph g = parse_graph(R"({"num_nodes":2,"edges":[[0,1]],"node_attrs":[[1,0],[3,0]],"edge_attrs":[[1]]})");
  std::vector<Graph> gs{g};
  auto b = batch_graphs(gs, f.opt);
  Tape<double> tape;
  auto tb = EmbeddingTables<double>::bind(tape, f.store, 2, 1);
  auto loss = ops::add(ops::sum_all(embed_nodes(b, tb)), ops::sum_all(embed_edges(b, tb)));
  tape.backward(loss);
  tape.accumulate_param_grads();
  auto row_touched = [&](const std::string& name, std::size_t row) {
    const auto& gr = f.store.get("embed." + name).grad;
    const std::size_t d = gr.dim(1);
    for (std::size_t c = 0; c < d; ++c)
      if (gr.at({row, c}) != 0.0) return true;
    return false;
  };
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(row_touched("node_attr0", r), r == 1 || r == 3) << r;
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(row_touched("node_attr1", r), r == 0) << r;
  // indeg: node0 has 0, node1 has 1. outdeg: node0 has 1, node1 has 0.
  for (std::size_t r = 0; r < 6; ++r) EXPECT_EQ(row_touched("indeg", r), r <= 1) << r;
  for (std::size_t r = 0; r < 6; ++r) EXPECT_EQ(row_touched("outdeg", r), r <= 1) << r;
  // edge_attr rows: id 1 (direct edge) and NO-EDGE (row 4); PAD row 5 never indexed
  for (std::size_t r = 0; r < 6; ++r) EXPECT_EQ(row_touched("edge_attr0", r), r == 1 || r == 4) << r;
  // rel_pos buckets present: 0, 1, virtual (5)
  for (std::size_t r = 0; r < 7; ++r) EXPECT_EQ(row_touched("rel_pos", r), r == 0 || r == 1 || r == 5) << r;
}

TEST(Embedding, PaddedRowsExactlyZero) {
  Fixture f(10);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto gs = random_batch(rng, 2 + rng() % 2);
    auto b = batch_graphs(gs, f.opt);
    Tape<double> tape;
    auto tb = EmbeddingTables<double>::bind(tape, f.store, 2, 1);
    auto xn = embed_nodes(b, tb).tensor();
    auto xe = embed_edges(b, tb).tensor();
    for (std::size_t bi = 0; bi < b.batch_size; ++bi)
      for (std::size_t p = gs[bi].num_nodes + 1; p < b.tokens(); ++p) {
        for (std::size_t c = 0; c < kD1; ++c) ASSERT_EQ(xn.at({bi, p, c}), 0.0);
        for (std::size_t j = 0; j < b.tokens(); ++j)
          for (std::size_t c = 0; c < kD2; ++c) {
            ASSERT_EQ(xe.at({bi, p, j, c}), 0.0);
            ASSERT_EQ(xe.at({bi, j, p, c}), 0.0);
          }
      }
  }
}
