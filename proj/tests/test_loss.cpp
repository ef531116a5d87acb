#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace gptrans;

namespace {

BatchTargets regression_targets(std::vector<double> values, std::vector<std::uint8_t> mask) {
  BatchTargets t;
  t.graph_mask = MaskTensor({mask.size()}, mask);
  t.graph_values = std::move(values);
  return t;
}

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

double brute_ap(const std::vector<double>& s, const std::vector<int>& y) {
  // Distinct scores: AP is the mean precision at the rank of each positive.
  double ap = 0, pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    pos += 1;
    double above = 0, tp = 0;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s[j] >= s[i]) above += 1, tp += y[j];
    ap += tp / above;
  }
  return ap / pos;
}

}  // namespace

TEST(TaskLoss, RegressionZeroWhenExact) {
  Tape<double> tape;
  auto out = tape.constant(Tensor<double>({3, 1}, {1.5, -2.0, 0.25}));
  auto t = regression_targets({1.5, -2.0, 0.25}, {1, 1, 1});
  EXPECT_EQ(task_loss(parse_task("graph-regression"), out, t).value()[0], 0.0);
}

TEST(TaskLoss, RegressionIsMaskedMean) {
  Tape<double> tape;
  auto out = tape.constant(Tensor<double>({3, 1}, {1.0, 5.0, 0.0}));
  auto t = regression_targets({2.0, 0.0, 4.0}, {1, 0, 1});
  EXPECT_DOUBLE_EQ(task_loss(parse_task("graph-regression"), out, t).value()[0], (1.0 + 4.0) / 2);
}

TEST(TaskLoss, UniformLogitsGiveLogK) {
  for (std::size_t k : {2u, 3u, 7u}) {
    Tape<double> tape;
    auto out = tape.constant(Tensor<double>({1, 4, k}, 0.3));
    BatchTargets t;
    t.node_labels = IdTensor({1, 4}, 1);
    t.node_mask = MaskTensor({1, 4}, std::vector<std::uint8_t>{1, 1, 0, 1});
    EXPECT_NEAR(task_loss(parse_task("node-classification", k), out, t).value()[0], std::log(double(k)), 1e-12);
  }
}

TEST(TaskLoss, BinaryEdgesUseLogistic) {
  Tape<double> tape;
  auto out = tape.constant(Tensor<double>({1, 2, 2, 1}, {0.0, 2.0, -1.0, 0.0}));
  BatchTargets t;
  t.edge_labels = IdTensor({1, 2, 2}, std::vector<std::int32_t>{0, 1, 1, 0});
  t.edge_mask = MaskTensor({1, 2, 2}, std::vector<std::uint8_t>{0, 1, 1, 0});
  const double expect = (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(1.0))) / 2;
  EXPECT_NEAR(task_loss(parse_task("edge-classification", 2), out, t).value()[0], expect, 1e-12);
}

TEST(TaskLoss, AllMaskedIsEmptyLossError) {
  Tape<double> tape;
  auto out = tape.constant(Tensor<double>({2, 1}, 1.0));
  EXPECT_THROW(task_loss(parse_task("graph-regression"), out, regression_targets({0, 0}, {0, 0})), EmptyLossError);
}

TEST(TaskLoss, MaskedPositionsAreInert) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + rng() % 3, N = 1 + rng() % 5, k = 2 + rng() % 3;
    BatchTargets t;
    t.node_labels = IdTensor({B, N}, 0);
    t.node_mask = MaskTensor({B, N}, 0);
    for (std::size_t i = 0; i < B * N; ++i) {
      t.node_labels[i] = static_cast<std::int32_t>(rng() % k);
      t.node_mask[i] = rng() % 3 != 0;
    }
    t.node_mask[0] = 1;
    auto logits = oracle::random_tensor<double>(rng, {B, N, k}, 2.0);
    auto perturbed = logits;
    auto labels2 = t;
    for (std::size_t i = 0; i < B * N; ++i)
      if (!t.node_mask[i]) {
        for (std::size_t c = 0; c < k; ++c) perturbed[i * k + c] = 100 * nd(rng);
        labels2.node_labels[i] = static_cast<std::int32_t>(rng() % k);
      }
    Tape<double> tape;
    const Task task = parse_task("node-classification", k);
    const double a = task_loss(task, tape.constant(logits), t).value()[0];
    const double b = task_loss(task, tape.constant(perturbed), labels2).value()[0];
    ASSERT_EQ(a, b);
  }
}

TEST(Metrics, RocAucHandExample) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_NEAR(*roc_auc(s, y), 0.75, 1e-12);
  EXPECT_NEAR(*average_precision(s, y), 5.0 / 6.0, 1e-12);
}

TEST(Metrics, SingleClassHasNoAuc) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> y{1, 1};
  EXPECT_FALSE(roc_auc(s, y).has_value());
}

TEST(Metrics, MatchBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = u(rng), y[i] = static_cast<int>(rng() % 2);
    y[0] = 0, y[1] = 1;
    ASSERT_NEAR(*roc_auc(s, y), brute_auc(s, y), 1e-12);
    ASSERT_NEAR(*average_precision(s, y), brute_ap(s, y), 1e-12);
    // Coarse scores produce ties; the rank statistic must still agree.
    for (double& v : s) v = std::floor(v * 4);
    ASSERT_NEAR(*roc_auc(s, y), brute_auc(s, y), 1e-12);
  }
}

TEST(Metrics, AccumulatorRegressionMae) {
  MetricAccumulator acc(parse_task("graph-regression"));
  Tape<double> tape;
  acc.add(tape.constant(Tensor<double>({2, 1}, {1.0, 2.0})), regression_targets({0.5, 0.0}, {1, 1}));
  acc.add(tape.constant(Tensor<double>({1, 1}, {3.0})), regression_targets({9.0}, {0}));
  const MetricReport r = acc.report();
  EXPECT_EQ(r.count, 2u);
  EXPECT_DOUBLE_EQ(*r.mae, 1.25);
  EXPECT_TRUE(r.lower_is_better());
  EXPECT_DOUBLE_EQ(r.primary(), 1.25);
}

TEST(Metrics, AccumulatorBinaryEdges) {
  MetricAccumulator acc(parse_task("edge-classification", 2));
  Tape<double> tape;
  BatchTargets t;
  t.edge_labels = IdTensor({1, 2, 2}, std::vector<std::int32_t>{1, 1, 0, 0});
  t.edge_mask = MaskTensor({1, 2, 2}, 1);
  acc.add(tape.constant(Tensor<double>({1, 2, 2, 1}, {2.0, -1.0, 1.0, -3.0})), t);
  const MetricReport r = acc.report();
  // predictions 1,0,1,0 vs labels 1,1,0,0: tp 1, fp 1, fn 1
  EXPECT_DOUBLE_EQ(*r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(*r.f1, 0.5);
  EXPECT_DOUBLE_EQ(*r.roc_auc, 0.75);
  EXPECT_DOUBLE_EQ(r.primary(), 0.5);
  EXPECT_FALSE(r.lower_is_better());
}

TEST(Metrics, AccumulatorMultiClassAccuracy) {
  MetricAccumulator acc(parse_task("node-classification", 3));
  Tape<double> tape;
  BatchTargets t;
  t.node_labels = IdTensor({1, 3}, std::vector<std::int32_t>{2, 0, 1});
  t.node_mask = MaskTensor({1, 3}, std::vector<std::uint8_t>{1, 1, 0});
  acc.add(tape.constant(Tensor<double>({1, 3, 3}, {0, 0, 1, 0, 1, 0, 0, 1, 0})), t);
  EXPECT_DOUBLE_EQ(*acc.report().accuracy, 0.5);
  EXPECT_FALSE(acc.report().f1.has_value());
}
