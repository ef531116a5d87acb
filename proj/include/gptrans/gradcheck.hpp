#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gptrans/autodiff.hpp"

namespace gptrans {

struct GradcheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  double step = 0.0;
  double tol = 0.0;
  std::vector<GradcheckEntry> entries;

  bool pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

struct GradcheckOptions {
  double step = 1e-4;
  double tol = 1e-3;
  /// Gradients smaller than this are compared absolutely rather than relatively.
  double abs_floor = 1e-6;
  /// 0 checks every entry; otherwise a seeded sample of this many entries per tensor.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of `f` against central differences for every
/// tensor in `params`. `f(tape, params)` must build a scalar on `tape` and be
/// deterministic (no dropout).
template <class F>
GradcheckReport gradcheck(F&& f, ParamStore<double>& params, const GradcheckOptions& opt = {}) {
  GradcheckReport report;
  report.step = opt.step;
  report.tol = opt.tol;

  params.zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = f(tape, params);
    tape.backward(loss);
    tape.accumulate_param_grads();
  }

  auto eval = [&]() {
    Tape<double> tape(false);
    return f(tape, params).item();
  };

  std::mt19937_64 rng(opt.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<double>& p = params[pi];
    GradcheckEntry entry;
    entry.name = p.name;
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opt.max_entries_per_param && idx.size() > opt.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_entries_per_param);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double orig = p.value[i];
      p.value[i] = orig + opt.step;
      const double up = eval();
      p.value[i] = orig - opt.step;
      const double down = eval();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double analytic = p.grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error < opt.tol;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace gptrans
