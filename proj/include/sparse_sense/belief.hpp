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

#ifndef SPARSE_SENSE_BELIEF_HPP_
#define SPARSE_SENSE_BELIEF_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sparse_sense/common.hpp"
#include "sparse_sense/effort.hpp"
#include "sparse_sense/rng.hpp"

namespace sparse_sense {

// Uniform prior over N components plus the sensing model constants.
struct PriorParams {
  double p0 = 0.01;
  double mu0 = 1.0;
  double sigma0_sq = 1.0 / 16.0;
  double sigma_sq = 1.0;  // noise variance at unit effort
  double budget = 1.0;    // total effort Lambda_0
  std::size_t n = 1;

  void validate() const {
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw ParameterError("p0 must be in [0,1]");
    if (!std::isfinite(mu0)) throw ParameterError("mu0 must be finite");
    if (!(sigma0_sq >= 0.0) || !std::isfinite(sigma0_sq)) {
      throw ParameterError("sigma0_sq must be >= 0");
    }
    if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
      throw ParameterError("sigma_sq must be > 0");
    }
    if (!(budget > 0.0) || !std::isfinite(budget)) {
      throw ParameterError("budget must be > 0");
    }
    if (n < 1) throw ParameterError("component count must be >= 1");
  }
};

// Constants shared by every belief update.
struct SensingModel {
  double sigma_sq = 1.0;
  EffortFunction h;
};

// Per-component posterior (support probability, amplitude mean and variance
// given support) together with the remaining budget.
struct BeliefState {
  std::vector<double> p;
  std::vector<double> mu;
  std::vector<double> var;
  double budget = 0.0;
  int stage = 0;

  std::size_t size() const { return p.size(); }
};

using ObservationVector = std::vector<std::optional<double>>;

inline BeliefState init_state(const PriorParams& prior) {
  prior.validate();
  BeliefState s;
  s.p.assign(prior.n, prior.p0);
  s.mu.assign(prior.n, prior.mu0);
  s.var.assign(prior.n, prior.sigma0_sq);
  s.budget = prior.budget;
  s.stage = 0;
  return s;
}

namespace detail {

inline constexpr double kMinProbability = 1e-30;
inline constexpr double kMaxProbability = 1.0 - 1e-15;

// Single-component posterior update given an observation y taken with
// precision gain hv = h(lambda) > 0.
inline void update_component(double& p, double& mu, double& var, double y,
                             double hv, double sigma_sq) {
  const double noise_var = sigma_sq / hv;
  if (p > 0.0 && p < 1.0) {
    const double v1 = var + noise_var;
    const double d1 = y - mu;
    const double log_ratio = -0.5 * std::log(v1 / noise_var) -
                             0.5 * d1 * d1 / v1 + 0.5 * y * y / noise_var;
    const double logit = std::log(p) - std::log1p(-p) + log_ratio;
    double next;
    if (logit >= 0.0) {
      next = 1.0 / (1.0 + std::exp(-logit));
    } else {
      const double e = std::exp(logit);
      next = e / (1.0 + e);
    }
    p = std::clamp(next, kMinProbability, kMaxProbability);
  }
  const double denom = sigma_sq + hv * var;
  mu = (sigma_sq * mu + hv * var * y) / denom;
  var = sigma_sq * var / denom;
}

inline void check_allocation(const BeliefState& state,
                             std::span<const double> lambda) {
  if (lambda.size() != state.size()) {
    throw ParameterError("allocation length does not match state");
  }
  double total = 0.0;
  for (double l : lambda) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw ParameterError("allocation entries must be finite and >= 0");
    }
    total += l;
  }
  if (total > state.budget + 1e-9 * std::max(1.0, state.budget)) {
    throw BudgetError("allocation total " + std::to_string(total) +
                      " exceeds remaining budget " +
                      std::to_string(state.budget));
  }
}

inline void finish_stage(BeliefState& state, std::span<const double> lambda) {
  double total = 0.0;
  for (double l : lambda) total += l;
  state.budget = std::max(0.0, state.budget - total);
  ++state.stage;
}

}  // namespace detail

// Applies one stage of observations in place. Components with
// lambda_i <= kObsEpsilon must carry no observation and are left unchanged.
inline void update_in_place(BeliefState& state, std::span<const double> lambda,
                            std::span<const std::optional<double>> y,
                            const SensingModel& model) {
  detail::check_allocation(state, lambda);
  if (y.size() != state.size()) {
    throw ParameterError("observation length does not match state");
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    const bool taken = lambda[i] > kObsEpsilon;
    if (taken != y[i].has_value()) {
      throw ParameterError(
          "observation must be present exactly when effort is positive");
    }
    if (!taken) continue;
    const double hv = model.h(lambda[i]);
    if (!(hv > 0.0)) continue;
    detail::update_component(state.p[i], state.mu[i], state.var[i], *y[i], hv,
                             model.sigma_sq);
  }
  detail::finish_stage(state, lambda);
}

// Dense variant used by simulators: y[i] is read only where lambda_i > eps.
inline void update_in_place_dense(BeliefState& state,
                                  std::span<const double> lambda,
                                  std::span<const double> y,
                                  const SensingModel& model) {
  detail::check_allocation(state, lambda);
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (!(lambda[i] > kObsEpsilon)) continue;
    const double hv = model.h(lambda[i]);
    if (!(hv > 0.0)) continue;
    detail::update_component(state.p[i], state.mu[i], state.var[i], y[i], hv,
                             model.sigma_sq);
  }
  detail::finish_stage(state, lambda);
}

inline BeliefState update(const BeliefState& state,
                          std::span<const double> lambda,
                          std::span<const std::optional<double>> y,
                          const SensingModel& model) {
  BeliefState next = state;
  update_in_place(next, lambda, y, model);
  return next;
}

// sigma^2 / sigma_i^2(t) + h(pending): the precision the component would
// reach, in noise units, after spending `pending` more effort.
inline double effective_precision(const BeliefState& state, std::size_t i,
                                  double pending, const SensingModel& model) {
  if (!(pending >= 0.0)) throw ParameterError("pending effort must be >= 0");
  return model.sigma_sq / state.var.at(i) + model.h(pending);
}

// Draw from the predictive law of y_i given the current belief.
inline double predictive_sample(const BeliefState& state, std::size_t i,
                                double lambda, const SensingModel& model,
                                Rng& rng) {
  if (!(lambda > kObsEpsilon)) {
    throw NoObservationError("no observation is taken at zero effort");
  }
  const double noise_var = model.sigma_sq / model.h(lambda);
  const double u = rng.uniform();
  const double z = rng.normal();
  if (u < state.p.at(i)) {
    return state.mu[i] + std::sqrt(state.var[i] + noise_var) * z;
  }
  return std::sqrt(noise_var) * z;
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_BELIEF_HPP_
