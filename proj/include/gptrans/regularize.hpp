#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "gptrans/autodiff.hpp"
#include "gptrans/ops.hpp"

namespace gptrans {

/// Source of stochastic regularization for one forward pass. Inert unless `train`.
struct StochasticContext {
  bool train = false;
  std::mt19937_64 rng{0};

  StochasticContext() = default;
  StochasticContext(bool train_mode, std::uint64_t seed) : train(train_mode), rng(seed) {}

  bool active(double rate) const { return train && rate > 0.0; }
};

/// Inverted dropout: zeroes entries with probability `rate` and rescales survivors.
template <class T>
Var<T> dropout(const Var<T>& x, double rate, StochasticContext& ctx) {
  if (!ctx.active(rate)) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = keep(ctx.rng) ? scale : T{0};
  return ops::mul_const(x, mask);
}

/// Stochastic depth: drops a whole residual branch per sample (axis 0).
template <class T>
Var<T> drop_path(const Var<T>& branch, double rate, StochasticContext& ctx) {
  if (!ctx.active(rate)) return branch;
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  Shape s(branch.rank(), 1);
  s[0] = branch.dim(0);
  Tensor<T> mask(s);
  for (auto& m : mask.data()) m = keep(ctx.rng) ? scale : T{0};
  return ops::mul_const(branch, mask);
}

}  // namespace gptrans
