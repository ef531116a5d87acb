#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/errors.hpp"
#include "gptrans/graph.hpp"

namespace gptrans {

enum class TaskKind { GraphRegression, GraphClassification, NodeClassification, EdgeClassification };

struct Task {
  TaskKind kind = TaskKind::GraphRegression;
  std::size_t num_classes = 1;

  bool is_regression() const { return kind == TaskKind::GraphRegression; }
  bool binary_edges() const { return kind == TaskKind::EdgeClassification && num_classes == 2; }
  /// Width of the head's final layer.
  std::size_t output_dim() const {
    if (is_regression() || binary_edges()) return 1;
    return num_classes;
  }

  friend bool operator==(const Task&, const Task&) = default;
};

inline std::string task_name(const Task& t) {
  switch (t.kind) {
    case TaskKind::GraphRegression: return "graph-regression";
    case TaskKind::GraphClassification: return "graph-classification";
    case TaskKind::NodeClassification: return "node-classification";
    case TaskKind::EdgeClassification: return "edge-classification";
  }
  return "unknown";
}

inline Task parse_task(std::string_view name, std::size_t num_classes = 2) {
  if (name == "graph-regression") return {TaskKind::GraphRegression, 1};
  if (num_classes < 2) throw ConfigError("classification tasks need at least 2 classes");
  if (name == "graph-classification") return {TaskKind::GraphClassification, num_classes};
  if (name == "node-classification") return {TaskKind::NodeClassification, num_classes};
  if (name == "edge-classification") return {TaskKind::EdgeClassification, num_classes};
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

struct PathToggles {
  bool node_to_edge = true;
  bool edge_to_node = true;
  friend bool operator==(const PathToggles&, const PathToggles&) = default;
};

/// Every architecture hyper-parameter of a GPTrans model.
struct ModelConfig {
  std::string name = "custom";
  std::size_t d1 = 80;  // node width
  std::size_t d2 = 40;  // edge width
  std::size_t n_layers = 12;
  std::size_t n_head = 8;
  std::size_t d_head = 10;
  double ffn_ratio = 1.0;
  double dropout_ffn = 0.0;
  double dropout_embed = 0.0;
  double dropout_attn = 0.0;
  double drop_path_rate = 0.0;
  bool layer_scale = false;
  double layer_scale_init = 1e-5;
  PathToggles toggles;
  std::int32_t spd_clip = 20;
  std::int32_t deg_clip = 64;
  Task task;
  bool baseline_dual_ffn = false;

  std::size_t ffn_hidden() const { return static_cast<std::size_t>(ffn_ratio * static_cast<double>(d1) + 0.5); }
  std::size_t edge_ffn_hidden() const { return static_cast<std::size_t>(ffn_ratio * static_cast<double>(d2) + 0.5); }

  void validate() const {
    if (d1 == 0 || d2 == 0 || n_head == 0) throw ConfigError("d1, d2 and n_head must be positive");
    if (d1 != n_head * d_head)
      throw ConfigError("d1 (" + std::to_string(d1) + ") must equal n_head * d_head (" + std::to_string(n_head) +
                        " * " + std::to_string(d_head) + ")");
    if (ffn_ratio <= 0.0) throw ConfigError("ffn_ratio must be positive");
    for (double r : {dropout_ffn, dropout_embed, dropout_attn, drop_path_rate})
      if (r < 0.0 || r >= 1.0) throw ConfigError("regularization rates must lie in [0, 1)");
    if (spd_clip < 1 || deg_clip < 1) throw ConfigError("spd_clip and deg_clip must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Architecture presets. Regularization rates follow the published training
/// tables (nano uses the small-benchmark rates).
inline ModelConfig preset(std::string_view name) {
  ModelConfig c;
  c.name = std::string(name);
  if (name == "nano") {
    c.d1 = 80, c.d2 = 40, c.n_layers = 12, c.n_head = 8, c.d_head = 10, c.layer_scale = false;
    c.dropout_ffn = 0.3, c.dropout_embed = 0.3, c.dropout_attn = 0.5, c.drop_path_rate = 0.3;
  } else if (name == "tiny") {
    c.d1 = 256, c.d2 = 32, c.n_layers = 12, c.n_head = 8, c.d_head = 32, c.layer_scale = true;
    c.dropout_ffn = 0.1, c.dropout_embed = 0.1, c.dropout_attn = 0.1, c.drop_path_rate = 0.1;
  } else if (name == "small") {
    c.d1 = 384, c.d2 = 48, c.n_layers = 12, c.n_head = 12, c.d_head = 32, c.layer_scale = true;
    c.dropout_ffn = 0.1, c.dropout_embed = 0.1, c.dropout_attn = 0.1, c.drop_path_rate = 0.1;
  } else if (name == "base") {
    c.d1 = 608, c.d2 = 76, c.n_layers = 18, c.n_head = 19, c.d_head = 32, c.layer_scale = true;
    c.dropout_ffn = 0.1, c.dropout_embed = 0.1, c.dropout_attn = 0.1, c.drop_path_rate = 0.2;
  } else if (name == "large") {
    c.d1 = 736, c.d2 = 92, c.n_layers = 24, c.n_head = 23, c.d_head = 32, c.layer_scale = true;
    c.dropout_ffn = 0.2, c.dropout_embed = 0.2, c.dropout_attn = 0.2, c.drop_path_rate = 0.4;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  c.ffn_ratio = 1.0;
  return c;
}

inline ModelConfig without_regularization(ModelConfig c) {
  c.dropout_ffn = c.dropout_embed = c.dropout_attn = c.drop_path_rate = 0.0;
  return c;
}

/// Per-slot categorical vocabulary sizes of a dataset.
struct Vocab {
  std::vector<std::size_t> node_attr{1};
  std::vector<std::size_t> edge_attr{1};
  friend bool operator==(const Vocab&, const Vocab&) = default;
};

inline Vocab vocab_preset(std::string_view name) {
  if (name == "zinc-like") return Vocab{{28}, {4}};
  // Offset-encoded molecular features: 9 atom slots and 3 bond slots of 512 ids each.
  if (name == "pcqm4m-like") return Vocab{std::vector<std::size_t>(9, 512), std::vector<std::size_t>(3, 512)};
  throw ConfigError("unknown vocab preset '" + std::string(name) + "'");
}

/// Smallest vocabulary covering every id in `graphs`.
inline Vocab scan_vocab(std::span<const Graph> graphs) {
  Vocab v{{}, {}};
  for (const auto& g : graphs) {
    for (const auto& row : g.node_attrs) {
      if (v.node_attr.size() < row.size()) v.node_attr.resize(row.size(), 1);
      for (std::size_t s = 0; s < row.size(); ++s)
        v.node_attr[s] = std::max(v.node_attr[s], static_cast<std::size_t>(row[s]) + 1);
    }
    for (const auto& row : g.edge_attrs) {
      if (v.edge_attr.size() < row.size()) v.edge_attr.resize(row.size(), 1);
      for (std::size_t s = 0; s < row.size(); ++s)
        v.edge_attr[s] = std::max(v.edge_attr[s], static_cast<std::size_t>(row[s]) + 1);
    }
  }
  if (v.node_attr.empty()) v.node_attr = {1};
  if (v.edge_attr.empty()) v.edge_attr = {1};
  return v;
}

inline nlohmann::json to_json(const Vocab& v) {
  return {{"node_attr_vocab", v.node_attr}, {"edge_attr_vocab", v.edge_attr}};
}

inline Vocab vocab_from_json(const nlohmann::json& j) {
  try {
    return Vocab{j.at("node_attr_vocab").get<std::vector<std::size_t>>(),
                 j.at("edge_attr_vocab").get<std::vector<std::size_t>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad vocab JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"name", c.name},
          {"d1", c.d1},
          {"d2", c.d2},
          {"n_layers", c.n_layers},
          {"n_head", c.n_head},
          {"d_head", c.d_head},
          {"ffn_ratio", c.ffn_ratio},
          {"dropout_ffn", c.dropout_ffn},
          {"dropout_embed", c.dropout_embed},
          {"dropout_attn", c.dropout_attn},
          {"drop_path_rate", c.drop_path_rate},
          {"layer_scale", c.layer_scale},
          {"layer_scale_init", c.layer_scale_init},
          {"node_to_edge", c.toggles.node_to_edge},
          {"edge_to_node", c.toggles.edge_to_node},
          {"spd_clip", c.spd_clip},
          {"deg_clip", c.deg_clip},
          {"task", task_name(c.task)},
          {"num_classes", c.task.num_classes},
          {"baseline_dual_ffn", c.baseline_dual_ffn}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.name = j.at("name").get<std::string>();
    c.d1 = j.at("d1").get<std::size_t>();
    c.d2 = j.at("d2").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_head = j.at("n_head").get<std::size_t>();
    c.d_head = j.at("d_head").get<std::size_t>();
    c.ffn_ratio = j.at("ffn_ratio").get<double>();
    c.dropout_ffn = j.at("dropout_ffn").get<double>();
    c.dropout_embed = j.at("dropout_embed").get<double>();
    c.dropout_attn = j.at("dropout_attn").get<double>();
    c.drop_path_rate = j.at("drop_path_rate").get<double>();
    c.layer_scale = j.at("layer_scale").get<bool>();
    c.layer_scale_init = j.at("layer_scale_init").get<double>();
    c.toggles.node_to_edge = j.at("node_to_edge").get<bool>();
    c.toggles.edge_to_node = j.at("edge_to_node").get<bool>();
    c.spd_clip = j.at("spd_clip").get<std::int32_t>();
    c.deg_clip = j.at("deg_clip").get<std::int32_t>();
    const auto k = j.at("num_classes").get<std::size_t>();
    c.task = parse_task(j.at("task").get<std::string>(), k);
    c.baseline_dual_ffn = j.at("baseline_dual_ffn").get<bool>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config JSON: ") + e.what());
  }
}

}  // namespace gptrans
