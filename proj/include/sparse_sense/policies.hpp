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

#ifndef SPARSE_SENSE_POLICIES_HPP_
#define SPARSE_SENSE_POLICIES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sparse_sense/allocator.hpp"
#include "sparse_sense/belief.hpp"
#include "sparse_sense/common.hpp"
#include "sparse_sense/loss.hpp"
#include "sparse_sense/rng.hpp"

namespace sparse_sense {

enum class PolicyKind { kNonadaptive, kOracle, kDs, kOlfc, kRollout };

inline std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kNonadaptive: return "nonadaptive";
    case PolicyKind::kOracle: return "oracle";
    case PolicyKind::kDs: return "ds";
    case PolicyKind::kOlfc: return "olfc";
    case PolicyKind::kRollout: return "rollout";
  }
  return "unknown";
}

inline PolicyKind parse_policy(const std::string& name) {
  if (name == "nonadaptive") return PolicyKind::kNonadaptive;
  if (name == "oracle") return PolicyKind::kOracle;
  if (name == "ds") return PolicyKind::kDs;
  if (name == "olfc") return PolicyKind::kOlfc;
  if (name == "rollout") return PolicyKind::kRollout;
  throw ParameterError("unknown policy: " + name);
}

// One stage of effort, tagged with where it came from.
struct AllocationPlan {
  std::vector<double> lambda;
  int stage = 0;
  PolicyKind policy = PolicyKind::kNonadaptive;
};

// ---------------------------------------------------------------------------
// Baselines.

inline std::vector<double> nonadaptive_allocate(std::size_t n, double budget) {
  if (n == 0) throw ParameterError("component count must be >= 1");
  if (!(budget > 0.0)) throw ParameterError("budget must be > 0");
  return std::vector<double>(n, budget / static_cast<double>(n));
}

inline std::vector<double> oracle_allocate(std::span<const std::uint8_t> support,
                                           double budget) {
  const std::size_t count =
      static_cast<std::size_t>(std::count_if(support.begin(), support.end(),
                                             [](std::uint8_t s) { return s; }));
  if (count == 0) {
    warn("oracle: empty support, falling back to a uniform allocation");
    return nonadaptive_allocate(support.size(), budget);
  }
  std::vector<double> lambda(support.size(), 0.0);
  const double share = budget / static_cast<double>(count);
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i]) lambda[i] = share;
  }
  return lambda;
}

// Stage fractions of distilled sensing: geometric decay by `ratio` from the
// first stage, with the last stage matching the first.
inline std::vector<double> ds_fractions(int stages, double ratio = 0.75) {
  if (stages < 2) throw ParameterError("distilled sensing needs >= 2 stages");
  if (!(ratio > 0.0)) throw ParameterError("ds ratio must be > 0");
  std::vector<double> alpha(stages);
  alpha[0] = 1.0;
  for (int t = 1; t + 1 < stages; ++t) alpha[t] = alpha[t - 1] * ratio;
  alpha[stages - 1] = 1.0;
  const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  for (double& a : alpha) a /= total;
  return alpha;
}

struct DsState {
  std::vector<std::uint8_t> active;
};

inline DsState ds_init(std::size_t n) {
  return DsState{std::vector<std::uint8_t>(n, 1)};
}

// Spreads alpha[t] * budget0 uniformly over the working set.
inline std::vector<double> ds_allocate(const DsState& ds, int t,
                                       std::span<const double> alpha,
                                       double budget0) {
  if (t < 0 || t >= static_cast<int>(alpha.size())) {
    throw ParameterError("ds stage index out of range");
  }
  const std::size_t count = static_cast<std::size_t>(
      std::count(ds.active.begin(), ds.active.end(), std::uint8_t{1}));
  std::vector<double> lambda(ds.active.size(), 0.0);
  if (count == 0) return lambda;
  const double share = alpha[t] * budget0 / static_cast<double>(count);
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (ds.active[i]) lambda[i] = share;
  }
  return lambda;
}

// Keeps components whose latest observation is positive. An empty result
// keeps the single largest observation instead.
inline void ds_refine(DsState& ds, const ObservationVector& y) {
  std::size_t kept = 0;
  std::size_t best = ds.active.size();
  double best_y = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ds.active.size(); ++i) {
    if (!ds.active[i] || !y[i]) continue;
    if (*y[i] > best_y) {
      best_y = *y[i];
      best = i;
    }
    if (*y[i] > 0.0) {
      ++kept;
    } else {
      ds.active[i] = 0;
    }
  }
  if (kept == 0 && best < ds.active.size()) {
    warn("distilled sensing: working set emptied, keeping one component");
    ds.active[best] = 1;
  }
}

// ---------------------------------------------------------------------------
// Generalised open-loop feedback control.

// Per-stage fractions of the remaining budget and water-filling exponents for
// a T-stage run. The last entry of `beta` is always 1.
struct OlfcSchedule {
  std::vector<double> beta;
  std::vector<double> gamma;

  int stages() const { return static_cast<int>(beta.size()); }

  void validate() const {
    if (beta.empty() || beta.size() != gamma.size()) {
      throw ParameterError("schedule needs equal, non-empty beta and gamma");
    }
    for (double b : beta) {
      if (!(b >= 0.0 && b <= 1.0)) throw ParameterError("beta must be in [0,1]");
    }
    if (beta.back() != 1.0) throw ParameterError("final beta must equal 1");
    for (double g : gamma) {
      if (!(g > 0.0 && g <= 1.0)) throw ParameterError("gamma must be in (0,1]");
    }
  }
};

// Linear ramp of the exponent from gamma0 to the final value 2/(q+2).
inline std::vector<double> gamma_schedule(double gamma0, double q, int stages) {
  if (stages < 1) throw ParameterError("stage count must be >= 1");
  if (!(q > 0.0)) throw ParameterError("power exponent must be > 0");
  const double final_gamma = 2.0 / (q + 2.0);
  if (!(gamma0 > 0.0 && gamma0 <= final_gamma + 1e-12)) {
    throw ParameterError("gamma0 must lie in (0, 2/(q+2)]");
  }
  std::vector<double> gamma(stages, final_gamma);
  for (int t = 0; t + 1 < stages; ++t) {
    gamma[t] = gamma0 + (final_gamma - gamma0) * t / (stages - 1);
  }
  return gamma;
}

// Full schedule for a T-stage policy whose first-stage fraction is `beta0`
// and whose later fractions reuse the first-stage fractions of the shorter
// policies: beta^(T)(t) = beta^(T-t)(0). `lower_beta0[k]` holds
// beta^(k)(0) for k = 1..T-1 (index 0 unused).
inline OlfcSchedule make_schedule(double beta0, double gamma0, double q,
                                  std::span<const double> lower_beta0,
                                  int stages) {
  OlfcSchedule s;
  s.beta.assign(stages, 1.0);
  if (stages > 1) s.beta[0] = beta0;
  for (int t = 1; t + 1 < stages; ++t) {
    const std::size_t k = static_cast<std::size_t>(stages - t);
    if (k >= lower_beta0.size()) {
      throw DependencyError("missing first-stage fraction for " +
                            std::to_string(k) + " stages");
    }
    s.beta[t] = lower_beta0[k];
  }
  s.gamma = gamma_schedule(stages > 1 ? gamma0 : 2.0 / (q + 2.0), q, stages);
  return s;
}

struct OlfcWorkspace {
  detail::WaterfillWorkspace waterfill;
};

// Writes lambda(t) = beta(t) * lambda_bar*(t) into `out`, where lambda_bar*
// solves the reduced problem over the remaining budget and stages.
inline void olfc_allocate_into(const BeliefState& state, int t,
                               const OlfcSchedule& schedule,
                               const SensingModel& model, const LossSpec& loss,
                               std::span<double> out, OlfcWorkspace& ws) {
  const int stages = schedule.stages();
  if (t < 0 || t >= stages) throw ParameterError("stage index out of range");
  const double beta = t == stages - 1 ? 1.0 : schedule.beta[t];
  std::fill(out.begin(), out.end(), 0.0);
  if (beta <= 0.0 || state.budget <= 0.0) return;
  const bool closed_form =
      loss.kind() == LossSpec::Kind::kPower && model.h.is_identity();
  if (closed_form) {
    for (double v : state.var) {
      if (!(v > 0.0)) {
        throw ParameterError("olfc needs positive amplitude variances");
      }
    }
    detail::waterfill_into(state.p, state.var, model.sigma_sq, state.budget,
                           schedule.gamma[t], out, ws.waterfill);
  } else {
    AllocationProblem problem;
    problem.p = state.p;
    problem.var = state.var;
    problem.sigma_sq = model.sigma_sq;
    problem.budget = state.budget;
    problem.stages_remaining = stages - t;
    problem.loss = loss;
    problem.h = model.h;
    const AllocationResult result = solve_general(problem);
    std::copy(result.lambda_bar.begin(), result.lambda_bar.end(), out.begin());
  }
  if (beta != 1.0) {
    for (double& v : out) v *= beta;
  }
}

inline AllocationPlan olfc_allocate(const BeliefState& state, int t,
                                    const OlfcSchedule& schedule,
                                    const SensingModel& model,
                                    const LossSpec& loss) {
  schedule.validate();
  AllocationPlan plan;
  plan.lambda.assign(state.size(), 0.0);
  plan.stage = t;
  plan.policy = PolicyKind::kOlfc;
  OlfcWorkspace ws;
  olfc_allocate_into(state, t, schedule, model, loss, plan.lambda, ws);
  return plan;
}

// Expected terminal loss, up to the factor 2 the kernel omits, when `lambda`
// is the last effort ever spent: sum_i p_i g(sigma_i^2, h(lambda_i)). By the
// martingale property of p this is the expectation over the final
// observations.
inline double terminal_cost(const BeliefState& state,
                            std::span<const double> lambda,
                            const SensingModel& model, const LossSpec& loss) {
  double total = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state.p[i] == 0.0 || state.var[i] == 0.0) continue;
    total += state.p[i] * g_kernel(loss, state.var[i], model.h(lambda[i]),
                                   model.sigma_sq);
  }
  return total;
}

// A hypothetical truth drawn from the current posterior. Observations of it
// are distributed exactly as predictive samples.
struct SampledTruth {
  std::vector<double> theta;
};

inline void sample_truth(const BeliefState& state, Rng& rng,
                         SampledTruth& out) {
  out.theta.resize(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double u = rng.uniform();
    const double z = rng.normal();
    out.theta[i] = u < state.p[i] ? state.mu[i] + std::sqrt(state.var[i]) * z
                                   : 0.0;
  }
}

// Scratch space for forward simulations.
struct SimulationWorkspace {
  OlfcWorkspace olfc;
  BeliefState state;
  SampledTruth truth;
  std::vector<double> lambda;
};

// Runs the schedule forward from `start` (at stage t) against `truth` and
// returns the expected final loss. The noise of a stage comes from
// noise.fork(stages remaining), one normal per component, so schedules that
// differ only in how early they start stay on common random numbers. The
// first stage that leaves no budget is scored exactly.
inline double simulate_schedule(const BeliefState& start, int t,
                                const OlfcSchedule& schedule,
                                const SampledTruth& truth,
                                const SensingModel& model,
                                const LossSpec& loss, const Rng& noise,
                                SimulationWorkspace& ws,
                                std::span<const double> first_lambda = {}) {
  ws.state = start;
  ws.lambda.resize(start.size());
  const int stages = schedule.stages();
  for (int s = t; s < stages; ++s) {
    if (s == t && !first_lambda.empty()) {
      std::copy(first_lambda.begin(), first_lambda.end(), ws.lambda.begin());
    } else {
      olfc_allocate_into(ws.state, s, schedule, model, loss, ws.lambda,
                         ws.olfc);
    }
    double spent = 0.0;
    for (double v : ws.lambda) spent += v;
    if (s == stages - 1 || spent >= ws.state.budget * (1.0 - 1e-12)) {
      return terminal_cost(ws.state, ws.lambda, model, loss);
    }
    if (spent > 0.0) {
      Rng stage_noise = noise.fork(static_cast<std::uint64_t>(stages - s));
      for (std::size_t i = 0; i < ws.state.size(); ++i) {
        const double z = stage_noise.normal();
        const double hv = model.h(ws.lambda[i]);
        if (ws.lambda[i] > kObsEpsilon && hv > 0.0) {
          const double y = truth.theta[i] + std::sqrt(model.sigma_sq / hv) * z;
          detail::update_component(ws.state.p[i], ws.state.mu[i],
                                   ws.state.var[i], y, hv, model.sigma_sq);
        }
      }
    }
    ws.state.budget = std::max(0.0, ws.state.budget - spent);
    ++ws.state.stage;
  }
  return 0.0;  // unreachable: the final stage always returns
}

// ---------------------------------------------------------------------------
// Rollout.

struct RolloutOptions {
  int grid_points = 21;
  int futures = 200;
  // Minimiser of the Monte Carlo costs. The default refines the grid minimum
  // with a parabola through its neighbours. The anchored polynomial pins the
  // exact beta = 1 cost and is biased when the cost rises steeply there.
  bool anchored_fit = false;
  int fit_degree = 4;
};

struct RolloutDecision {
  double beta = 1.0;
  std::vector<double> grid;   // beta values
  std::vector<double> costs;  // Monte Carlo cost estimates on the grid
  std::vector<double> coefficients;  // a_1..a_d of the anchored fit
  double exact_cost_at_one = 0.0;
};

// Least-squares fit of f(b) = f(1) + sum_k a_k (b - 1)^k with f(1) held at
// `anchor`; returns the fine-grid minimiser over [0, 1].
inline double anchored_poly_argmin(std::span<const double> grid,
                                   std::span<const double> costs,
                                   double anchor, int degree,
                                   std::vector<double>* coefficients) {
  const Eigen::Index rows = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd a(rows, degree);
  Eigen::VectorXd rhs(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double d = grid[r] - 1.0;
    double power = 1.0;
    for (int k = 0; k < degree; ++k) {
      power *= d;
      a(r, k) = power;
    }
    rhs(r) = costs[r] - anchor;
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(rhs);
  if (coefficients) coefficients->assign(coef.data(), coef.data() + degree);
  double best_beta = 1.0;
  double best = anchor;
  constexpr int kFine = 1000;
  for (int j = 0; j <= kFine; ++j) {
    const double b = static_cast<double>(j) / kFine;
    const double d = b - 1.0;
    double value = anchor;
    double power = 1.0;
    for (int k = 0; k < degree; ++k) {
      power *= d;
      value += coef(k) * power;
    }
    if (value < best) {
      best = value;
      best_beta = b;
    }
  }
  return best_beta;
}

// Vertex of the parabola through the grid minimum and its neighbours,
// clamped to that bracket; the grid minimum itself at the ends.
inline double local_quadratic_argmin(std::span<const double> grid,
                                     std::span<const double> costs) {
  const std::size_t j = static_cast<std::size_t>(
      std::min_element(costs.begin(), costs.end()) - costs.begin());
  if (j == 0 || j + 1 == costs.size()) return grid[j];
  const double c0 = costs[j - 1], c1 = costs[j], c2 = costs[j + 1];
  const double curvature = c0 - 2.0 * c1 + c2;
  if (!(curvature > 0.0)) return grid[j];
  const double h = grid[j + 1] - grid[j];
  const double shift = 0.5 * h * (c0 - c2) / curvature;
  return std::clamp(grid[j] + shift, grid[j - 1], grid[j + 1]);
}

// One-step lookahead: picks the fraction of the remaining budget to spend at
// stage t by simulating `base` (a generalised schedule with fixed exponent)
// from predictive futures. Returns the plan beta * lambda_bar*(t).
inline AllocationPlan rollout_allocate(const BeliefState& state, int t,
                                       const OlfcSchedule& base,
                                       const SensingModel& model,
                                       const LossSpec& loss, Rng& rng,
                                       const RolloutOptions& options = {},
                                       RolloutDecision* decision = nullptr) {
  base.validate();
  if (options.futures <= 0) throw ParameterError("rollout needs futures > 0");
  if (options.grid_points < 3 ||
      (options.anchored_fit && options.grid_points < options.fit_degree + 1)) {
    throw ParameterError("rollout grid too small");
  }
  const int stages = base.stages();
  AllocationPlan plan;
  plan.stage = t;
  plan.policy = PolicyKind::kRollout;
  plan.lambda.assign(state.size(), 0.0);
  OlfcWorkspace ows;
  // Full-budget solution of the reduced problem (beta = 1).
  OlfcSchedule unit = base;
  unit.beta[t] = 1.0;
  std::vector<double> lambda_bar(state.size(), 0.0);
  olfc_allocate_into(state, t, unit, model, loss, lambda_bar, ows);
  if (t == stages - 1 || state.budget <= 0.0) {
    plan.lambda = lambda_bar;
    return plan;
  }

  RolloutDecision local;
  RolloutDecision& d = decision ? *decision : local;
  d.grid.resize(options.grid_points);
  d.costs.assign(options.grid_points, 0.0);
  for (int j = 0; j < options.grid_points; ++j) {
    d.grid[j] = static_cast<double>(j) / (options.grid_points - 1);
  }
  d.exact_cost_at_one = terminal_cost(state, lambda_bar, model, loss);

  SimulationWorkspace ws;
  std::vector<double> first(state.size());
  const std::uint64_t tag = rng.next_u64();
  for (int f = 0; f < options.futures; ++f) {
    const Rng future = Rng(tag).fork(static_cast<std::uint64_t>(f));
    Rng truth_rng = future.fork(0);
    sample_truth(state, truth_rng, ws.truth);
    for (int j = 0; j < options.grid_points; ++j) {
      if (d.grid[j] == 1.0) {
        d.costs[j] += d.exact_cost_at_one;
        continue;
      }
      for (std::size_t i = 0; i < first.size(); ++i) {
        first[i] = d.grid[j] * lambda_bar[i];
      }
      d.costs[j] += simulate_schedule(state, t, base, ws.truth, model, loss,
                                      future.fork(1), ws, first);
    }
  }
  for (double& c : d.costs) c /= options.futures;
  d.beta = options.anchored_fit
               ? anchored_poly_argmin(d.grid, d.costs, d.exact_cost_at_one,
                                      options.fit_degree, &d.coefficients)
               : local_quadratic_argmin(d.grid, d.costs);
  for (std::size_t i = 0; i < plan.lambda.size(); ++i) {
    plan.lambda[i] = d.beta * lambda_bar[i];
  }
  return plan;
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_POLICIES_HPP_
