#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/batch.hpp"
#include "gptrans/checkpoint.hpp"
#include "gptrans/config.hpp"
#include "gptrans/loss.hpp"
#include "gptrans/model.hpp"
#include "gptrans/optim.hpp"
#include "gptrans/parallel.hpp"

namespace gptrans {

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t max_steps = 0;  // caps optimizer steps when > 0
  double lr_peak = 1e-3;
  double lr_min = 0.0;
  double warmup_epochs = 0.0;
  AdamWConfig adam;
  double ema_decay = 0.9999;
  std::optional<double> clip_norm;  // off by default; 5.0 when enabled from the CLI
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::size_t eval_every = 1;  // epochs between evaluations
  std::size_t patience = 0;    // stop after this many evaluations without improvement (0 = never)
  std::size_t threads = 1;
  /// For graph regression, start the head's output bias at the training-target mean.
  bool regression_bias_init = true;
  /// When set: metrics.jsonl, last.ckpt, best.ckpt and config.json are written here.
  std::string out_dir;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> eval_metric;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}, {"train_loss", r.train_loss}};
  j["eval_metric"] = r.eval_metric ? nlohmann::json(*r.eval_metric) : nlohmann::json(nullptr);
  return j;
}

template <class T>
struct TrainResult {
  ParamStore<T> params;
  EmaState<T> ema;
  OptimState<T> optim;
  std::vector<EpochRecord> log;
  std::optional<double> best_metric;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

/// Throws ConfigError unless every graph carries the supervision `task` needs.
inline void check_dataset(std::span<const Graph> graphs, const Task& task) {
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const Graph& g = graphs[i];
    const bool ok = task.kind == TaskKind::GraphRegression || task.kind == TaskKind::GraphClassification
                        ? g.graph_target.has_value()
                        : (task.kind == TaskKind::NodeClassification ? g.node_targets.has_value()
                                                                      : g.edge_targets.has_value());
    if (!ok) throw ConfigError("graph " + std::to_string(i) + " has no target for task " + task_name(task));
    if (task.kind == TaskKind::GraphClassification && (*g.graph_target < 0 || *g.graph_target >= static_cast<double>(task.num_classes)))
      throw ConfigError("graph " + std::to_string(i) + " class label outside [0, k)");
  }
}

inline BatchOptions batch_options(const ModelConfig& cfg) {
  BatchOptions o;
  o.spd_clip = cfg.spd_clip;
  o.deg_clip = cfg.deg_clip;
  return o;
}

/// One preprocessed graph (a batch of one).
struct PreparedGraph {
  BatchedGraph batch;
  BatchTargets targets;
};

inline std::vector<PreparedGraph> prepare(std::span<const Graph> graphs, const ModelConfig& cfg) {
  std::vector<PreparedGraph> out;
  out.reserve(graphs.size());
  const BatchOptions opt = batch_options(cfg);
  for (const auto& g : graphs) {
    std::span<const Graph> one(&g, 1);
    PreparedGraph p{batch_graphs(one, opt), {}};
    p.targets = batch_targets(one, p.batch);
    out.push_back(std::move(p));
  }
  return out;
}

template <class T>
MetricReport evaluate_prepared(const std::vector<PreparedGraph>& data, const ModelConfig& cfg, ParamStore<T>& params,
                               std::size_t threads = 1) {
  struct Item {
    std::vector<T> output;
    Shape shape;
    double loss = 0.0;
  };
  std::vector<Item> items(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Tape<T> tape(false);
    auto out = model_forward(tape, params, data[i].batch, cfg, false);
    auto ls = task_loss_sum(cfg.task, out.output, data[i].targets);
    items[i].output.assign(out.output.value().begin(), out.output.value().end());
    items[i].shape = out.output.shape();
    items[i].loss = static_cast<double>(ls.sum.item());
  });
  MetricAccumulator acc(cfg.task);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape<T> tape(false);
    Var<T> v = tape.constant(Tensor<T>(items[i].shape, items[i].output));
    acc.add(v, data[i].targets);
    acc.add_loss(items[i].loss);
  }
  return acc.report();
}

/// Metric report of `params` on `graphs`.
template <class T>
MetricReport evaluate(std::span<const Graph> graphs, const ModelConfig& cfg, ParamStore<T>& params, std::size_t threads = 1) {
  check_dataset(graphs, cfg.task);
  return evaluate_prepared(prepare(graphs, cfg), cfg, params, threads);
}

/// Mean absolute error of always predicting the mean training target.
inline double constant_mean_mae(std::span<const Graph> train, std::span<const Graph> eval) {
  double mean = 0.0;
  for (const auto& g : train) mean += g.graph_target.value_or(0.0);
  mean /= static_cast<double>(std::max<std::size_t>(1, train.size()));
  double mae = 0.0;
  for (const auto& g : eval) mae += std::abs(g.graph_target.value_or(0.0) - mean);
  return mae / static_cast<double>(std::max<std::size_t>(1, eval.size()));
}

template <class T>
void save_training_checkpoint(const std::string& path, const ParamStore<T>& params, const EmaState<T>& ema) {
  CheckpointSection<T> ema_sec{"ema/", {}};
  for (std::size_t i = 0; i < params.size(); ++i) ema_sec.tensors.emplace_back(params[i].name, &ema.shadow[i]);
  save_checkpoint<T>(path, {section_of(params), ema_sec});
}

inline void write_config(const std::string& path, const ModelConfig& cfg, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write config");
  out << nlohmann::json{{"model", to_json(cfg)}, {"vocab", to_json(vocab)}}.dump(2) << '\n';
}

/// Minibatch AdamW training with cosine warmup, EMA and optional gradient clipping.
/// Each graph is run on its own tape and gradients are reduced in sample order,
/// so results do not depend on the thread count.
template <class T = float>
TrainResult<T> train_loop(std::span<const Graph> train, std::span<const Graph> eval, const ModelConfig& cfg,
                          const Vocab& vocab, const TrainOptions& opt) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  if (opt.batch_size == 0) throw ConfigError("batch size must be positive");
  check_dataset(train, cfg.task);
  if (!eval.empty()) check_dataset(eval, cfg.task);

  TrainResult<T> r;
  r.params = init_params<T>(cfg, vocab, opt.seed);
  if (cfg.task.is_regression() && opt.regression_bias_init) {
    double mean = 0.0;
    for (const auto& g : train) mean += *g.graph_target;
    r.params.get("head.fc2.bias").value[0] = static_cast<T>(mean / static_cast<double>(train.size()));
  }
  r.optim = OptimState<T>::init(r.params, opt.adam);
  r.ema = EmaState<T>::init(r.params, opt.ema_decay);

  const auto train_data = prepare(train, cfg);
  const auto eval_data = prepare(eval, cfg);
  const std::size_t steps_per_epoch = (train.size() + opt.batch_size - 1) / opt.batch_size;
  std::size_t total_steps = opt.epochs * steps_per_epoch;
  if (opt.max_steps) total_steps = std::min(total_steps, opt.max_steps);
  const auto warmup_steps = std::min<std::size_t>(
      total_steps, static_cast<std::size_t>(std::llround(opt.warmup_epochs * static_cast<double>(steps_per_epoch))));

  std::ofstream metrics;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    const std::string mpath = opt.out_dir + "/metrics.jsonl";
    metrics.open(mpath, std::ios::trunc);
    if (!metrics) throw IoError(mpath, "cannot open metrics log");
    write_config(opt.out_dir + "/config.json", cfg, vocab);
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(mix_seed(opt.seed, 0x5eed));
  std::size_t step = 0;
  std::size_t since_best = 0;
  std::map<const Param<T>*, std::size_t> param_index;
  for (std::size_t i = 0; i < r.params.size(); ++i) param_index[&r.params[i]] = i;

  for (std::size_t epoch = 0; epoch < opt.epochs && step < total_steps; ++epoch) {
    if (opt.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size() && step < total_steps; start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      const std::size_t n = end - start;
      std::size_t count = 0;
      for (std::size_t i = start; i < end; ++i)
        count += task_loss_positions(cfg.task, train_data[order[i]].targets);
      if (count == 0) throw EmptyLossError("every position of the batch is masked");
      const T norm = T{1} / static_cast<T>(count);

      r.params.zero_grad();
      std::vector<double> sample_loss(n, 0.0);
      std::vector<std::vector<std::vector<T>>> buffers(opt.threads > 1 ? n : 0);
      parallel_for(n, opt.threads, [&](std::size_t k) {
        const PreparedGraph& d = train_data[order[start + k]];
        Tape<T> tape;
        auto out = model_forward(tape, r.params, d.batch, cfg, true, mix_seed(opt.seed, step, k));
        auto ls = task_loss_sum(cfg.task, out.output, d.targets);
        sample_loss[k] = static_cast<double>(ls.sum.item());
        tape.backward(ops::scale(ls.sum, norm));
        if (opt.threads <= 1) {
          tape.accumulate_param_grads();
          return;
        }
        auto& buf = buffers[k];
        buf.resize(r.params.size());
        for (const auto& [p, node] : tape.bindings()) buf[param_index.at(p)] = node->grad;
      });
      if (opt.threads > 1) {
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t pi = 0; pi < r.params.size(); ++pi) {
            const auto& g = buffers[k][pi];
            auto dst = r.params[pi].grad.data();
            for (std::size_t e = 0; e < g.size(); ++e) dst[e] += g[e];
          }
      }
      if (opt.clip_norm) clip_grad_norm(r.params, *opt.clip_norm);
      lr = cosine_warmup_lr(step, total_steps, warmup_steps, opt.lr_peak, opt.lr_min);
      adamw_step(r.params, r.optim, lr);
      ema_update(r.ema, r.params);
      ++step;
      double batch_loss = 0.0;
      for (double l : sample_loss) batch_loss += l;
      epoch_loss += batch_loss / static_cast<double>(count);
      ++epoch_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.step = step;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_batches));
    const bool last = epoch + 1 == opt.epochs || step >= total_steps;
    const bool do_eval = !eval_data.empty() && opt.eval_every > 0 && ((epoch + 1) % opt.eval_every == 0 || last);
    bool improved = false;
    if (do_eval) {
      MetricReport m = evaluate_prepared(eval_data, cfg, r.params, opt.threads);
      rec.eval_metric = m.primary();
      improved = !r.best_metric || (m.lower_is_better() ? m.primary() < *r.best_metric : m.primary() > *r.best_metric);
      if (improved) {
        r.best_metric = m.primary();
        r.best_epoch = epoch + 1;
        since_best = 0;
        if (!opt.out_dir.empty()) save_training_checkpoint(opt.out_dir + "/best.ckpt", r.params, r.ema);
      } else {
        ++since_best;
      }
    }
    r.log.push_back(rec);
    if (metrics.is_open()) metrics << to_json(rec).dump() << '\n' << std::flush;
    if (opt.patience && since_best >= opt.patience) break;
  }
  r.steps = step;
  if (!opt.out_dir.empty()) save_training_checkpoint(opt.out_dir + "/last.ckpt", r.params, r.ema);
  return r;
}

}  // namespace gptrans
