#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "gptrans/autodiff.hpp"
#include "gptrans/errors.hpp"

namespace gptrans {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

template <class T>
struct OptimState {
  AdamWConfig hp;
  std::size_t step = 0;
  std::vector<Tensor<T>> m;  // first moments, store order
  std::vector<Tensor<T>> v;  // second moments

  static OptimState init(const ParamStore<T>& params, AdamWConfig hp = {}) {
    OptimState s;
    s.hp = hp;
    for (std::size_t i = 0; i < params.size(); ++i) {
      s.m.emplace_back(params[i].value.shape());
      s.v.emplace_back(params[i].value.shape());
    }
    return s;
  }
};

/// Bias-corrected Adam step plus decoupled decay lr·wd·θ for parameters flagged
/// for decay (embedding tables, LN and bias parameters are not).
template <class T>
void adamw_step(ParamStore<T>& params, OptimState<T>& state, double lr) {
  if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameter count");
  ++state.step;
  const auto& hp = state.hp;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = params[i];
    if (state.m[i].shape() != p.value.shape() || p.grad.shape() != p.value.shape())
      throw ShapeError("optimizer moment shape mismatch for " + p.name);
    auto theta = p.value.data();
    auto g = p.grad.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const double wd = p.decay ? hp.weight_decay : 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = hp.beta1 * static_cast<double>(m[k]) + (1.0 - hp.beta1) * gk;
      const double vk = hp.beta2 * static_cast<double>(v[k]) + (1.0 - hp.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      const double th = static_cast<double>(theta[k]);
      theta[k] = static_cast<T>(th - lr * (mhat / (std::sqrt(vhat) + hp.eps) + wd * th));
    }
  }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`. Returns the pre-clip norm.
template <class T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (T g : params[i].grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T s = static_cast<T>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i)
      for (T& g : params[i].grad.data()) g *= s;
  }
  return norm;
}

/// Linear warmup 0 -> lr_peak, then cosine decay to lr_min at total_steps.
inline double cosine_warmup_lr(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double lr_peak,
                               double lr_min = 0.0) {
  if (warmup_steps > total_steps) throw ConfigError("warmup_steps exceeds total_steps");
  if (step > total_steps) step = total_steps;
  if (step < warmup_steps) return lr_peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const std::size_t decay = total_steps - warmup_steps;
  const double progress = decay == 0 ? 1.0 : static_cast<double>(step - warmup_steps) / static_cast<double>(decay);
  return lr_min + 0.5 * (lr_peak - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Exponential moving average of parameters.
template <class T>
struct EmaState {
  double decay = 0.9999;
  std::vector<Tensor<T>> shadow;

  static EmaState init(const ParamStore<T>& params, double decay) {
    EmaState e;
    e.decay = decay;
    for (std::size_t i = 0; i < params.size(); ++i) e.shadow.push_back(params[i].value);
    return e;
  }

  /// Store with the shadow values in place of the live ones.
  ParamStore<T> materialize(const ParamStore<T>& params) const {
    ParamStore<T> out = params;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].value = shadow[i];
    return out;
  }
};

/// shadow <- decay·shadow + (1 − decay)·params
template <class T>
void ema_update(EmaState<T>& ema, const ParamStore<T>& params, double decay) {
  if (ema.shadow.size() != params.size()) throw ShapeError("EMA shadow does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto s = ema.shadow[i].data();
    auto p = params[i].value.data();
    if (s.size() != p.size()) throw ShapeError("EMA shadow shape mismatch for " + params[i].name);
    for (std::size_t k = 0; k < s.size(); ++k)
      s[k] = static_cast<T>(decay * static_cast<double>(s[k]) + (1.0 - decay) * static_cast<double>(p[k]));
  }
}

template <class T>
void ema_update(EmaState<T>& ema, const ParamStore<T>& params) {
  ema_update(ema, params, ema.decay);
}

}  // namespace gptrans
