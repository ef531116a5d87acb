#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/autodiff.hpp"
#include "gptrans/batch.hpp"
#include "gptrans/config.hpp"
#include "gptrans/ops.hpp"

namespace gptrans {

template <class T>
struct LossSum {
  Var<T> sum;
  std::size_t count = 0;
};

inline std::size_t count_set(const MaskTensor& m) {
  return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(), [](auto v) { return v != 0; }));
}

/// Per-task loss summed over supervised positions. Regression: absolute error;
/// classification: softmax cross-entropy, or logistic loss for binary edges.
template <class T>
LossSum<T> task_loss_sum(const Task& task, const Var<T>& output, const BatchTargets& targets) {
  LossSum<T> r;
  switch (task.kind) {
    case TaskKind::GraphRegression: {
      Tensor<T> tv({targets.graph_values.size()});
      for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = static_cast<T>(targets.graph_values[i]);
      r.sum = ops::abs_error_sum(output, tv, targets.graph_mask);
      r.count = count_set(targets.graph_mask);
      break;
    }
    case TaskKind::GraphClassification: {
      IdTensor labels({targets.graph_values.size()});
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(std::lround(targets.graph_values[i]));
      r.sum = ops::cross_entropy_sum(output, labels, targets.graph_mask);
      r.count = count_set(targets.graph_mask);
      break;
    }
    case TaskKind::NodeClassification:
      r.sum = ops::cross_entropy_sum(output, targets.node_labels, targets.node_mask);
      r.count = count_set(targets.node_mask);
      break;
    case TaskKind::EdgeClassification:
      r.sum = task.binary_edges() ? ops::bce_logits_sum(output, targets.edge_labels, targets.edge_mask)
                                  : ops::cross_entropy_sum(output, targets.edge_labels, targets.edge_mask);
      r.count = count_set(targets.edge_mask);
      break;
  }
  return r;
}

/// Number of supervised positions `targets` holds for `task`.
inline std::size_t task_loss_positions(const Task& task, const BatchTargets& targets) {
  switch (task.kind) {
    case TaskKind::GraphRegression:
    case TaskKind::GraphClassification:
      return count_set(targets.graph_mask);
    case TaskKind::NodeClassification:
      return count_set(targets.node_mask);
    case TaskKind::EdgeClassification:
      return count_set(targets.edge_mask);
  }
  return 0;
}

/// Mean task loss over unmasked positions.
template <class T>
Var<T> task_loss(const Task& task, const Var<T>& output, const BatchTargets& targets) {
  LossSum<T> s = task_loss_sum(task, output, targets);
  if (s.count == 0) throw EmptyLossError("every position of the batch is masked");
  return ops::scale(s.sum, T{1} / static_cast<T>(s.count));
}

/// Area under the ROC curve via the rank-sum statistic (ties get average ranks).
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i]) {
      pos += 1;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

/// Average precision: Σ (R_k − R_{k−1}) P_k over distinct score thresholds, descending.
inline std::optional<double> average_precision(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total_pos = 0;
  for (int l : labels) total_pos += l ? 1 : 0;
  if (total_pos == 0) return std::nullopt;
  double tp = 0, seen = 0, ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] ? 1 : 0;
      seen += 1;
      ++j;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// Evaluation metrics. Only the fields meaningful for the task are set.
struct MetricReport {
  std::string task;
  std::size_t count = 0;
  double loss = 0.0;
  std::optional<double> mae;
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> roc_auc;
  std::optional<double> average_precision;

  /// Headline metric used for model selection.
  double primary() const {
    if (mae) return *mae;
    if (f1 && task == "edge-classification") return *f1;
    return accuracy.value_or(0.0);
  }
  bool lower_is_better() const { return mae.has_value(); }
};

inline nlohmann::json to_json(const MetricReport& m) {
  nlohmann::json j{{"task", m.task}, {"count", m.count}, {"loss", m.loss}, {"primary", m.primary()}};
  if (m.mae) j["mae"] = *m.mae;
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.f1) j["f1"] = *m.f1;
  if (m.roc_auc) j["roc_auc"] = *m.roc_auc;
  if (m.average_precision) j["average_precision"] = *m.average_precision;
  return j;
}

/// Accumulates predictions across batches and reduces them to a MetricReport.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(Task task) : task_(task) {}

  template <class T>
  void add(const Var<T>& output, const BatchTargets& targets) {
    auto v = output.value();
    switch (task_.kind) {
      case TaskKind::GraphRegression:
        for (std::size_t i = 0; i < targets.graph_values.size(); ++i) {
          if (!targets.graph_mask[i]) continue;
          abs_err_ += std::abs(static_cast<double>(v[i]) - targets.graph_values[i]);
          ++count_;
        }
        break;
      case TaskKind::GraphClassification: {
        const std::size_t k = task_.num_classes;
        for (std::size_t i = 0; i < targets.graph_values.size(); ++i) {
          if (!targets.graph_mask[i]) continue;
          add_class_row(v.subspan(i * k, k), static_cast<int>(std::lround(targets.graph_values[i])));
        }
        break;
      }
      case TaskKind::NodeClassification: {
        const std::size_t k = task_.num_classes;
        for (std::size_t i = 0; i < targets.node_labels.size(); ++i)
          if (targets.node_mask[i]) add_class_row(v.subspan(i * k, k), targets.node_labels[i]);
        break;
      }
      case TaskKind::EdgeClassification: {
        if (task_.binary_edges()) {
          for (std::size_t i = 0; i < targets.edge_labels.size(); ++i) {
            if (!targets.edge_mask[i]) continue;
            const double z = static_cast<double>(v[i]);
            add_binary(1.0 / (1.0 + std::exp(-z)), z > 0 ? 1 : 0, targets.edge_labels[i]);
          }
        } else {
          const std::size_t k = task_.num_classes;
          for (std::size_t i = 0; i < targets.edge_labels.size(); ++i)
            if (targets.edge_mask[i]) add_class_row(v.subspan(i * k, k), targets.edge_labels[i]);
        }
        break;
      }
    }
  }

  void add_loss(double loss_sum) { loss_sum_ += loss_sum; }

  MetricReport report() const {
    MetricReport r;
    r.task = task_name(task_);
    r.count = count_;
    r.loss = count_ ? loss_sum_ / static_cast<double>(count_) : 0.0;
    if (count_ == 0) return r;
    if (task_.is_regression()) {
      r.mae = abs_err_ / static_cast<double>(count_);
      return r;
    }
    r.accuracy = static_cast<double>(correct_) / static_cast<double>(count_);
    if (!scores_.empty()) {
      const double precision = tp_ + fp_ > 0 ? tp_ / (tp_ + fp_) : 0.0;
      const double recall = tp_ + fn_ > 0 ? tp_ / (tp_ + fn_) : 0.0;
      r.f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
      r.roc_auc = gptrans::roc_auc(scores_, labels_);
      r.average_precision = gptrans::average_precision(scores_, labels_);
    }
    return r;
  }

 private:
  template <class T>
  void add_class_row(std::span<const T> logits, int label) {
    const auto best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (task_.num_classes == 2) {
      const double z = static_cast<double>(logits[1]) - static_cast<double>(logits[0]);
      add_binary(1.0 / (1.0 + std::exp(-z)), best, label);
      return;
    }
    correct_ += best == label ? 1 : 0;
    ++count_;
  }

  void add_binary(double score, int predicted, int label) {
    correct_ += predicted == label ? 1 : 0;
    ++count_;
    tp_ += predicted && label ? 1 : 0;
    fp_ += predicted && !label ? 1 : 0;
    fn_ += !predicted && label ? 1 : 0;
    scores_.push_back(score);
    labels_.push_back(label ? 1 : 0);
  }

  Task task_;
  std::size_t count_ = 0;
  std::size_t correct_ = 0;
  double abs_err_ = 0.0;
  double loss_sum_ = 0.0;
  double tp_ = 0, fp_ = 0, fn_ = 0;
  std::vector<double> scores_;
  std::vector<int> labels_;
};

}  // namespace gptrans
