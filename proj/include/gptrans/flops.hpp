#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptrans/config.hpp"
#include "gptrans/errors.hpp"

namespace gptrans {

/// One line of the FLOP breakdown: matmul multiply-adds and elementwise ops
/// (softmax, LN, GELU, adds) counted once per element.
struct FlopTerm {
  std::string name;
  double macs = 0.0;
  double elementwise = 0.0;
};

struct FlopReport {
  std::size_t n_nodes = 0;
  std::vector<FlopTerm> terms;

  double matmul_macs() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.macs;
    return s;
  }
  double elementwise() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.elementwise;
    return s;
  }
  /// Convention A: one multiply-add counts as one operation.
  double mac_count() const { return matmul_macs() + elementwise(); }
  /// Convention B: one multiply-add counts as two FLOPs.
  double flops() const { return 2.0 * matmul_macs() + elementwise(); }

  void add(const std::string& name, double macs, double elementwise) {
    for (auto& t : terms)
      if (t.name == name) {
        t.macs += macs;
        t.elementwise += elementwise;
        return;
      }
    terms.push_back({name, macs, elementwise});
  }
};

/// Cost of a single block at `n_nodes` real nodes (plus the virtual node).
inline FlopReport estimate_block_flops(const ModelConfig& cfg, std::size_t n_nodes) {
  if (n_nodes < 1) throw ConfigError("estimate_flops needs n_nodes >= 1");
  const double T = static_cast<double>(n_nodes + 1);
  const double d1 = static_cast<double>(cfg.d1), d2 = static_cast<double>(cfg.d2);
  const double H = static_cast<double>(cfg.n_head);
  const double hid = static_cast<double>(cfg.ffn_hidden());
  const double T2 = T * T;
  FlopReport r;
  r.n_nodes = n_nodes;
  r.add("layer_norm", 0.0, 2.0 * T * d1);
  r.add("qkv_proj", 3.0 * T * d1 * d1, 0.0);
  r.add("attn_bias", T2 * d2 * H, 0.0);
  r.add("attn_scores", T2 * d1, 2.0 * H * T2);  // scale + bias add
  r.add("attn_softmax", 0.0, H * T2);
  r.add("attn_values", T2 * d1, 0.0);
  if (!cfg.baseline_dual_ffn && cfg.toggles.node_to_edge) {
    r.add("node_to_edge", T2 * H * d2, H * T2 + T2 * d2);
    r.add("edge_residual", 0.0, T2 * d2);
    if (cfg.toggles.edge_to_node) r.add("edge_to_node", T * d2 * d1, 3.0 * T2 * d2 + T * d1);
  }
  r.add("out_proj", T * d1 * d1, 2.0 * T * d1);
  r.add("ffn", 2.0 * T * d1 * hid, T * hid + T * d1);
  if (cfg.baseline_dual_ffn) {
    const double eh = static_cast<double>(cfg.edge_ffn_hidden());
    r.add("edge_ffn", 2.0 * T2 * d2 * eh, T2 * d2 + T2 * eh + T2 * d2);
  }
  return r;
}

/// Analytic cost of one forward pass over a single graph with `n_nodes` nodes.
inline FlopReport estimate_flops(const ModelConfig& cfg, std::size_t n_nodes) {
  cfg.validate();
  FlopReport block = estimate_block_flops(cfg, n_nodes);
  FlopReport r;
  r.n_nodes = n_nodes;
  const double T = static_cast<double>(n_nodes + 1);
  r.add("embedding", 0.0, 3.0 * T * cfg.d1 + 2.0 * T * T * cfg.d2);
  for (const auto& t : block.terms)
    r.add(t.name, t.macs * static_cast<double>(cfg.n_layers), t.elementwise * static_cast<double>(cfg.n_layers));
  const double din = cfg.task.kind == TaskKind::EdgeClassification ? cfg.d2 : cfg.d1;
  const double rows = cfg.task.kind == TaskKind::GraphRegression || cfg.task.kind == TaskKind::GraphClassification
                          ? 1.0
                          : (cfg.task.kind == TaskKind::NodeClassification ? static_cast<double>(n_nodes) : T * T);
  const double dout = static_cast<double>(cfg.task.output_dim());
  r.add("head", rows * (din * din + din * dout), rows * (2.0 * din));
  return r;
}

inline nlohmann::json to_json(const FlopReport& r) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : r.terms) terms.push_back({{"name", t.name}, {"macs", t.macs}, {"elementwise", t.elementwise}});
  return {{"n_nodes", r.n_nodes},
          {"matmul_macs", r.matmul_macs()},
          {"elementwise", r.elementwise()},
          {"mac_count", r.mac_count()},
          {"flops", r.flops()},
          {"terms", terms}};
}

}  // namespace gptrans
