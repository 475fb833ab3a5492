// Copyright 2026 The sparse-sense Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPARSE_SENSE_ALLOCATOR_HPP_
#define SPARSE_SENSE_ALLOCATOR_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "sparse_sense/common.hpp"
#include "sparse_sense/effort.hpp"
#include "sparse_sense/loss.hpp"

namespace sparse_sense {

// Reduced open-loop problem: minimise
//   sum_i p_i g(sigma_i^2, m h(lambda_i / m))
// over {lambda >= 0, sum lambda = budget}, m = stages_remaining.
struct AllocationProblem {
  std::vector<double> p;
  std::vector<double> var;
  double sigma_sq = 1.0;
  double budget = 1.0;
  int stages_remaining = 1;
  LossSpec loss;
  EffortFunction h;
  // Replaces 2/(q+2) in the power-law closed form.
  std::optional<double> gamma_override;

  void validate() const {
    if (p.size() != var.size() || p.empty()) {
      throw ParameterError("allocation problem vectors must be non-empty and "
                           "of equal length");
    }
    if (!(budget > 0.0) || !std::isfinite(budget)) {
      throw ParameterError("allocation budget must be > 0");
    }
    if (!(sigma_sq > 0.0)) throw ParameterError("noise variance must be > 0");
    if (stages_remaining < 1) throw ParameterError("stages_remaining >= 1");
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
        throw ParameterError("probabilities must lie in [0,1]");
      }
      if (!(var[i] > 0.0) || !std::isfinite(var[i])) {
        throw ParameterError("component variances must be > 0");
      }
    }
  }
};

struct AllocationResult {
  std::vector<double> lambda_bar;
  std::size_t support_size = 0;
  double multiplier = 0.0;  // water level C of the closed form
  double objective = 0.0;
  int iterations = 0;
};

// Objective of the reduced problem at `lambda_bar`.
inline double allocation_objective(const AllocationProblem& problem,
                                   std::span<const double> lambda_bar) {
  const double m = problem.stages_remaining;
  double total = 0.0;
  for (std::size_t i = 0; i < problem.p.size(); ++i) {
    if (problem.p[i] == 0.0) continue;
    const double hbar = m * problem.h(lambda_bar[i] / m);
    total += problem.p[i] *
             g_kernel(problem.loss, problem.var[i], hbar, problem.sigma_sq);
  }
  return total;
}

// Closed-form water-filling for L(a) = a^q with identity effort, written on
// raw spans so the simulators can call it without building a problem.
// `gamma` is the exponent applied to the probabilities.
struct WaterfillSolution {
  std::size_t support_size = 0;
  double multiplier = 0.0;
};

namespace detail {

struct WaterfillWorkspace {
  std::vector<std::size_t> order;
  std::vector<double> weight;  // p_i^gamma
  std::vector<double> ratio;   // r_i = sigma^2 / sigma_i^2
  std::vector<std::pair<double, std::size_t>> keyed;
};

inline double power_weight(double p, double gamma) {
  if (p <= 0.0) return 0.0;
  if (gamma == 0.5) return std::sqrt(p);
  if (gamma == 1.0) return p;
  return std::pow(p, gamma);
}

inline WaterfillSolution waterfill_into(std::span<const double> p,
                                        std::span<const double> var,
                                        double sigma_sq, double budget,
                                        double gamma, std::span<double> out,
                                        WaterfillWorkspace& ws) {
  const std::size_t n = p.size();
  ws.order.resize(n);
  ws.weight.resize(n);
  ws.ratio.resize(n);
  ws.keyed.resize(n);
  bool any_positive = false;
  for (std::size_t i = 0; i < n; ++i) {
    ws.weight[i] = power_weight(p[i], gamma);
    ws.ratio[i] = sigma_sq / var[i];
    any_positive = any_positive || ws.weight[i] > 0.0;
    // Sort key p^gamma sigma_i^2 (up to the common factor sigma^2).
    ws.keyed[i] = {ws.weight[i] / ws.ratio[i], i};
  }
  if (!any_positive) {
    warn("water-filling on an all-zero probability vector; using uniform "
         "allocation");
    std::fill(out.begin(), out.end(), budget / static_cast<double>(n));
    return {n, 0.0};
  }
  // Non-increasing key, ties by ascending index.
  const auto before = [](const std::pair<double, std::size_t>& a,
                         const std::pair<double, std::size_t>& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  // Only the leading part of the order is ever needed, so sort a prefix
  // and widen it while the support could extend past it.
  std::size_t prefix = std::min<std::size_t>(n, 64);
  std::size_t k = 0;
  double weight_sum = 0.0;
  double ratio_sum = 0.0;
  for (;;) {
    if (prefix < n) {
      std::nth_element(ws.keyed.begin(), ws.keyed.begin() + prefix,
                       ws.keyed.end(), before);
    }
    std::sort(ws.keyed.begin(), ws.keyed.begin() + prefix, before);
    for (std::size_t j = 0; j < prefix; ++j) ws.order[j] = ws.keyed[j].second;
    weight_sum = 0.0;
    ratio_sum = 0.0;
    k = 0;
    bool resolved = false;
    for (; k < prefix; ++k) {
      const std::size_t idx = ws.order[k];
      if (ws.weight[idx] == 0.0) {  // b(k) = +inf beyond the last p > 0
        resolved = true;
        break;
      }
      weight_sum += ws.weight[idx];
      ratio_sum += ws.ratio[idx];
      if (k + 1 == n) {
        ++k;
        resolved = true;
        break;
      }
      if (k + 1 == prefix) break;  // the next candidate is not sorted yet
      const std::size_t next = ws.order[k + 1];
      if (ws.weight[next] == 0.0) {
        ++k;
        resolved = true;
        break;
      }
      // Budget at which the next component enters the support.
      const double breakpoint =
          ws.ratio[next] / ws.weight[next] * weight_sum - ratio_sum;
      if (budget <= breakpoint) {
        ++k;
        resolved = true;
        break;
      }
    }
    if (resolved) break;
    prefix = std::min(n, prefix * 4);
  }
  const double level = (budget + ratio_sum) / weight_sum;
  std::fill(out.begin(), out.end(), 0.0);
  double assigned = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t idx = ws.order[j];
    const double v = std::max(0.0, level * ws.weight[idx] - ws.ratio[idx]);
    out[idx] = v;
    assigned += v;
  }
  // Absorb rounding so the budget is met exactly.
  if (assigned > 0.0 && assigned != budget) {
    const double scale = budget / assigned;
    for (std::size_t j = 0; j < k; ++j) out[ws.order[j]] *= scale;
  }
  return {k, level};
}

}  // namespace detail

inline WaterfillSolution waterfill(std::span<const double> p,
                                   std::span<const double> var,
                                   double sigma_sq, double budget,
                                   double gamma, std::span<double> out) {
  detail::WaterfillWorkspace ws;
  return detail::waterfill_into(p, var, sigma_sq, budget, gamma, out, ws);
}

// Breakpoints b(0..n-1) of the closed form in sorted order, with
// b(n) = +inf omitted. Exposed for verification.
inline std::vector<double> waterfill_breakpoints(std::span<const double> p,
                                                 std::span<const double> var,
                                                 double sigma_sq,
                                                 double gamma) {
  const std::size_t n = p.size();
  std::vector<std::size_t> order(n);
  std::vector<double> w(n), r(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = p[i] > 0.0 ? std::pow(p[i], gamma) : 0.0;
    r[i] = sigma_sq / var[i];
  }
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                   std::size_t b) {
    return w[a] * r[b] > w[b] * r[a];
  });
  std::vector<double> b(n);
  double wsum = 0.0, rsum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t next = order[k];
    b[k] = w[next] > 0.0 ? r[next] / w[next] * wsum - rsum
                         : std::numeric_limits<double>::infinity();
    wsum += w[next];
    rsum += r[next];
  }
  return b;
}

inline AllocationResult waterfill_power_law(const AllocationProblem& problem) {
  problem.validate();
  if (problem.loss.kind() != LossSpec::Kind::kPower) {
    throw ParameterError("closed-form allocation requires a power-law loss");
  }
  if (!problem.h.is_identity()) {
    throw ParameterError("closed-form allocation requires identity effort");
  }
  const double gamma = problem.gamma_override.value_or(
      problem.loss.final_gamma());
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ParameterError("water-filling exponent must lie in (0, 1]");
  }
  AllocationResult result;
  result.lambda_bar.assign(problem.p.size(), 0.0);
  const WaterfillSolution sol =
      waterfill(problem.p, problem.var, problem.sigma_sq, problem.budget,
                gamma, result.lambda_bar);
  result.support_size = sol.support_size;
  result.multiplier = sol.multiplier;
  result.objective = allocation_objective(problem, result.lambda_bar);
  return result;
}

// Euclidean projection onto {x >= 0, sum x = budget}.
inline std::vector<double> project_simplex(std::span<const double> v,
                                           double budget) {
  if (!(budget > 0.0)) throw ParameterError("simplex budget must be > 0");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double threshold = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - budget) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) threshold = t;
  }
  std::vector<double> x(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    x[i] = std::max(v[i] - threshold, 0.0);
  }
  return x;
}

// Per-stage share of a total allocation over the remaining stages. The equal
// split maximises the accumulated precision for every concave h.
inline double stage_split(double lambda_bar, int stages_remaining,
                          const EffortFunction& /*h*/) {
  if (stages_remaining < 1) throw ParameterError("stages_remaining >= 1");
  return lambda_bar / stages_remaining;
}

// Maximum accumulated precision m h(lambda_bar / m) of an equal split.
inline double split_precision(double lambda_bar, int stages_remaining,
                              const EffortFunction& h) {
  return stages_remaining * h(stage_split(lambda_bar, stages_remaining, h));
}

// Gradient of the reduced objective.
inline void allocation_gradient(const AllocationProblem& problem,
                                std::span<const double> lambda_bar,
                                std::span<double> grad) {
  const double m = problem.stages_remaining;
  for (std::size_t i = 0; i < problem.p.size(); ++i) {
    if (problem.p[i] == 0.0) {
      grad[i] = 0.0;
      continue;
    }
    const double per_stage = std::max(lambda_bar[i] / m, 1e-12);
    const double hbar = m * problem.h(lambda_bar[i] / m);
    const double dh = std::min(problem.h.derivative(per_stage), 1e12);
    grad[i] = problem.p[i] *
              g_kernel_derivative(problem.loss, problem.var[i], hbar,
                                  problem.sigma_sq) *
              dh;
  }
}

// Spectral projected gradient with a nonmonotone Armijo test against the
// largest of the last kMemory objective values. Stationarity is
// measured scale-free: x - P(x - budget g / |g|_inf) must fall below
// 1e-8 max(1, budget) in the max norm, which bounds the spread of the
// partial derivatives on the support relative to their size.
inline AllocationResult solve_general(const AllocationProblem& problem,
                                      int max_iterations = 100000) {
  problem.validate();
  const std::size_t n = problem.p.size();
  const double tol = 1e-8 * std::max(1.0, problem.budget);
  constexpr double kArmijo = 1e-4;
  // Keeps step * |g| within a few orders of the budget so the projection
  // does not lose the allocation to cancellation.
  constexpr double kMaxStepRatio = 1e3;
  constexpr std::size_t kMemory = 10;

  const auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  const auto finish = [&](const std::vector<double>& x, double fx, int iter) {
    AllocationResult result;
    result.lambda_bar = x;
    result.objective = fx;
    result.iterations = iter;
    for (double v : x) result.support_size += v > 0.0 ? 1 : 0;
    return result;
  };

  std::vector<double> x(n, problem.budget / static_cast<double>(n));
  std::vector<double> grad(n), trial(n), grad_trial(n), direction(n);
  double fx = allocation_objective(problem, x);
  allocation_gradient(problem, x, grad);
  double gmax = max_abs(grad);
  if (gmax == 0.0) return finish(x, fx, 0);
  double step = problem.budget / gmax;

  std::vector<double> best = x;
  double best_f = fx;
  std::vector<double> recent = {fx};
  for (int iter = 0; iter < max_iterations; ++iter) {
    // Stationarity test.
    const double scale = problem.budget / gmax;
    for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - scale * grad[i];
    const std::vector<double> reference = project_simplex(trial, problem.budget);
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      residual = std::max(residual, std::abs(reference[i] - x[i]));
    }
    if (residual < tol) return finish(x, fx, iter);

    step = std::min(step, kMaxStepRatio * scale);
    for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - step * grad[i];
    const std::vector<double> projected = project_simplex(trial, problem.budget);
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      direction[i] = projected[i] - x[i];
      slope += grad[i] * direction[i];
    }
    if (slope >= 0.0) return finish(x, fx, iter);
    const double reference_f = *std::max_element(recent.begin(), recent.end());
    double t = 1.0;
    double ft = 0.0;
    for (int back = 0; back < 60; ++back) {
      for (std::size_t i = 0; i < n; ++i) {
        trial[i] = std::max(0.0, x[i] + t * direction[i]);
      }
      ft = allocation_objective(problem, trial);
      if (ft <= reference_f + kArmijo * t * slope) break;
      t *= 0.5;
    }
    allocation_gradient(problem, trial, grad_trial);
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = trial[i] - x[i];
      const double y = grad_trial[i] - grad[i];
      ss += s * s;
      sy += s * y;
    }
    x.swap(trial);
    grad.swap(grad_trial);
    fx = ft;
    if (recent.size() == kMemory) recent.erase(recent.begin());
    recent.push_back(fx);
    gmax = max_abs(grad);
    if (gmax == 0.0) return finish(x, fx, iter + 1);
    step = sy > 0.0 ? ss / sy : kMaxStepRatio * problem.budget / gmax;
    if (fx < best_f) {
      best_f = fx;
      best = x;
    }
  }
  throw NonConvergenceError("projected gradient hit its iteration cap", best,
                            best_f);
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_ALLOCATOR_HPP_
