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

#include "sparse_sense/policies.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "sparse_sense/belief.hpp"
#include "sparse_sense/rng.hpp"

namespace sparse_sense {
namespace {

double Sum(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

PriorParams SmallPrior(std::size_t n = 50) {
  PriorParams pp;
  pp.p0 = 0.1;
  pp.mu0 = 1.0;
  pp.sigma0_sq = 1.0 / 16.0;
  pp.sigma_sq = 0.1;
  pp.budget = static_cast<double>(n);
  pp.n = n;
  return pp;
}

TEST(PolicyNames, RoundTrip) {
  for (PolicyKind k : {PolicyKind::kNonadaptive, PolicyKind::kOracle,
                       PolicyKind::kDs, PolicyKind::kOlfc,
                       PolicyKind::kRollout}) {
    EXPECT_EQ(parse_policy(policy_name(k)), k);
  }
  EXPECT_THROW(parse_policy("greedy"), ParameterError);
}

TEST(Baselines, NonadaptiveIsUniform) {
  const auto lambda = nonadaptive_allocate(8, 4.0);
  for (double v : lambda) EXPECT_DOUBLE_EQ(v, 0.5);
  EXPECT_THROW(nonadaptive_allocate(0, 1.0), ParameterError);
  EXPECT_THROW(nonadaptive_allocate(3, 0.0), ParameterError);
}

TEST(Baselines, OracleSpreadsOverSupport) {
  const std::vector<std::uint8_t> support = {0, 1, 0, 1, 1};
  const auto lambda = oracle_allocate(support, 6.0);
  EXPECT_EQ(lambda, (std::vector<double>{0, 2, 0, 2, 2}));
}

TEST(Baselines, OracleEmptySupportWarnsAndFallsBack) {
  std::vector<std::string> seen;
  auto old = set_warning_handler(
      [&](const std::string& m) { seen.push_back(m); });
  const auto lambda = oracle_allocate(std::vector<std::uint8_t>(4, 0), 2.0);
  set_warning_handler(old);
  ASSERT_EQ(seen.size(), 1u);
  for (double v : lambda) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(DistilledSensing, FractionsFollowGeometricRule) {
  const auto alpha = ds_fractions(4, 0.75);
  ASSERT_EQ(alpha.size(), 4u);
  EXPECT_NEAR(Sum(alpha), 1.0, 1e-15);
  EXPECT_NEAR(alpha[1] / alpha[0], 0.75, 1e-15);
  EXPECT_NEAR(alpha[2] / alpha[1], 0.75, 1e-15);
  EXPECT_NEAR(alpha[3], alpha[0], 1e-15);
  // 1 + 0.75 + 0.5625 + 1 = 3.3125.
  EXPECT_NEAR(alpha[0], 1.0 / 3.3125, 1e-15);
  EXPECT_THROW(ds_fractions(1), ParameterError);
  const auto two = ds_fractions(2);
  EXPECT_DOUBLE_EQ(two[0], 0.5);
  const auto three = ds_fractions(3);
  EXPECT_NEAR(three[0], 4.0 / 11.0, 1e-15);
  EXPECT_NEAR(three[1], 3.0 / 11.0, 1e-15);
  EXPECT_NEAR(three[2], 4.0 / 11.0, 1e-15);
}

TEST(DistilledSensing, RefineKeepsPositiveObservations) {
  DsState ds = ds_init(4);
  const auto alpha = ds_fractions(3);
  const auto l0 = ds_allocate(ds, 0, alpha, 8.0);
  EXPECT_NEAR(Sum(l0), alpha[0] * 8.0, 1e-12);
  ds_refine(ds, ObservationVector{0.3, -0.1, 1.0, -2.0});
  EXPECT_EQ(ds.active, (std::vector<std::uint8_t>{1, 0, 1, 0}));
  const auto l1 = ds_allocate(ds, 1, alpha, 8.0);
  EXPECT_DOUBLE_EQ(l1[1], 0.0);
  EXPECT_NEAR(l1[0], alpha[1] * 4.0, 1e-12);
}

TEST(DistilledSensing, EmptyWorkingSetKeepsLargest) {
  auto old = set_warning_handler([](const std::string&) {});
  DsState ds = ds_init(3);
  ds_refine(ds, ObservationVector{-0.3, -0.1, -1.0});
  set_warning_handler(old);
  EXPECT_EQ(ds.active, (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(Schedule, GammaRampsToFinalValue) {
  const auto g = gamma_schedule(0.1, 2.0, 5);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g[0], 0.1);
  EXPECT_DOUBLE_EQ(g[4], 0.5);
  for (int t = 1; t < 5; ++t) EXPECT_NEAR(g[t] - g[t - 1], 0.1, 1e-15);
  EXPECT_THROW(gamma_schedule(0.9, 2.0, 3), ParameterError);
  EXPECT_DOUBLE_EQ(gamma_schedule(0.2, 1.0, 1)[0], 2.0 / 3.0);
}

TEST(Schedule, BetaNestsLowerStageFractions) {
  const std::vector<double> lower = {1.0, 1.0, 0.6, 0.45};
  const OlfcSchedule s = make_schedule(0.3, 0.2, 2.0, lower, 4);
  EXPECT_EQ(s.beta, (std::vector<double>{0.3, 0.45, 0.6, 1.0}));
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW(make_schedule(0.3, 0.2, 2.0, std::vector<double>{1, 1}, 4),
               DependencyError);
}

TEST(Olfc, FinalStageSpendsEverything) {
  const PriorParams pp = SmallPrior();
  BeliefState state = init_state(pp);
  const SensingModel model{pp.sigma_sq, EffortFunction::identity()};
  const OlfcSchedule s = make_schedule(0.4, 0.3, 2.0, std::vector<double>{1, 1},
                                       2);
  const auto first = olfc_allocate(state, 0, s, model, LossSpec::power(2.0));
  EXPECT_NEAR(Sum(first.lambda), 0.4 * pp.budget, 1e-9);
  // Uniform prior gives a uniform first stage.
  for (double v : first.lambda) EXPECT_NEAR(v, 0.4, 1e-12);
  Rng rng(7);
  ObservationVector y(state.size());
  for (auto& v : y) v = rng.normal();
  update_in_place(state, first.lambda, y, model);
  const auto last = olfc_allocate(state, 1, s, model, LossSpec::power(2.0));
  EXPECT_NEAR(Sum(last.lambda), state.budget, 1e-9);
}

TEST(Olfc, GeneralLossPathUsesWholeFraction) {
  const PriorParams pp = SmallPrior(20);
  BeliefState state = init_state(pp);
  state.p[3] = 0.9;
  const SensingModel model{pp.sigma_sq, EffortFunction::power(0.7)};
  const OlfcSchedule s = make_schedule(0.5, 0.5, 2.0,
                                       std::vector<double>{1, 1}, 2);
  const auto plan = olfc_allocate(state, 0, s, model, LossSpec::zero_one(0.2));
  EXPECT_NEAR(Sum(plan.lambda), 0.5 * pp.budget, 1e-6);
  EXPECT_GT(plan.lambda[3], plan.lambda[0]);
}

TEST(Simulation, SingleStageEqualsTerminalCost) {
  const PriorParams pp = SmallPrior(30);
  const BeliefState state = init_state(pp);
  const SensingModel model{pp.sigma_sq, EffortFunction::identity()};
  const OlfcSchedule s{{1.0}, {0.5}};
  SimulationWorkspace ws;
  Rng rng(1);
  sample_truth(state, rng, ws.truth);
  const double sim = simulate_schedule(state, 0, s, ws.truth, model,
                                       LossSpec::power(2.0), Rng(2), ws);
  const auto lambda = nonadaptive_allocate(state.size(), pp.budget);
  EXPECT_NEAR(sim, terminal_cost(state, lambda, model, LossSpec::power(2.0)),
              1e-12);
}

// Posterior-sampled truths: the mean of the simulated two-stage cost is an
// unbiased estimate of the expected final loss, checked against a direct
// estimate from explicit belief updates with independent randomness.
TEST(Simulation, TwoStageMatchesDirectMonteCarlo) {
  const PriorParams pp = SmallPrior(40);
  const BeliefState start = init_state(pp);
  const SensingModel model{pp.sigma_sq, EffortFunction::identity()};
  const LossSpec mse = LossSpec::power(2.0);
  const OlfcSchedule s = make_schedule(0.5, 0.5, 2.0,
                                       std::vector<double>{1, 1}, 2);
  constexpr int kSamples = 4000;
  double sim = 0.0, direct = 0.0, direct_sq = 0.0;
  SimulationWorkspace ws;
  Rng rng(11);
  Rng other(12);
  for (int k = 0; k < kSamples; ++k) {
    sample_truth(start, rng, ws.truth);
    sim += simulate_schedule(start, 0, s, ws.truth, model, mse, rng.fork(k),
                             ws);
    // Direct: draw a truth, observe twice, score the realised squared error.
    SampledTruth truth;
    sample_truth(start, other, truth);
    BeliefState b = start;
    for (int t = 0; t < 2; ++t) {
      const auto plan = olfc_allocate(b, t, s, model, mse);
      ObservationVector y(b.size());
      for (std::size_t i = 0; i < b.size(); ++i) {
        const double z = other.normal();
        if (plan.lambda[i] > kObsEpsilon) {
          y[i] = truth.theta[i] + std::sqrt(model.sigma_sq / plan.lambda[i]) * z;
        }
      }
      update_in_place(b, plan.lambda, y, model);
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (truth.theta[i] != 0.0) {
        loss += (b.mu[i] - truth.theta[i]) * (b.mu[i] - truth.theta[i]);
      }
    }
    direct += loss;
    direct_sq += loss * loss;
  }
  sim /= kSamples;
  direct /= kSamples;
  const double se =
      std::sqrt((direct_sq / kSamples - direct * direct) / kSamples);
  // The kernel drops the two-sided factor 2.
  EXPECT_NEAR(2.0 * sim, direct, 5.0 * se) << "se=" << se;
}

TEST(Rollout, AnchoredFitRecoversQuadraticMinimum) {
  std::vector<double> grid, costs;
  for (int j = 0; j <= 20; ++j) {
    const double b = j / 20.0;
    grid.push_back(b);
    costs.push_back(2.0 + 3.0 * (b - 0.37) * (b - 0.37));
  }
  const double anchor = 2.0 + 3.0 * 0.63 * 0.63;
  std::vector<double> coef;
  EXPECT_NEAR(anchored_poly_argmin(grid, costs, anchor, 4, &coef), 0.37, 1e-3);
}

TEST(Rollout, LocalQuadraticRecoversParabolaVertex) {
  std::vector<double> grid, costs;
  for (int j = 0; j <= 20; ++j) {
    grid.push_back(j / 20.0);
    costs.push_back(1.0 + 5.0 * (grid.back() - 0.43) * (grid.back() - 0.43));
  }
  EXPECT_NEAR(local_quadratic_argmin(grid, costs), 0.43, 1e-12);
  // A steep rise at beta = 1 does not move the interior minimum.
  costs.back() = 50.0;
  EXPECT_NEAR(local_quadratic_argmin(grid, costs), 0.43, 1e-12);
  // Minima on the boundary are returned as is.
  const std::vector<double> rising = {1.0, 2.0, 4.0};
  const std::vector<double> g3 = {0.0, 0.5, 1.0};
  EXPECT_EQ(local_quadratic_argmin(g3, rising), 0.0);
}

TEST(Rollout, FinalStageIsFullBudget) {
  const PriorParams pp = SmallPrior(20);
  const BeliefState state = init_state(pp);
  const SensingModel model{pp.sigma_sq, EffortFunction::identity()};
  const OlfcSchedule base{{1.0}, {0.5}};
  Rng rng(3);
  const auto plan = rollout_allocate(state, 0, base, model,
                                     LossSpec::power(2.0), rng);
  EXPECT_NEAR(Sum(plan.lambda), pp.budget, 1e-9);
}

TEST(Rollout, ChoosesFractionInUnitIntervalAndIsDeterministic) {
  const PriorParams pp = SmallPrior(60);
  const BeliefState state = init_state(pp);
  const SensingModel model{pp.sigma_sq, EffortFunction::identity()};
  const OlfcSchedule base = make_schedule(0.5, 0.5, 2.0,
                                          std::vector<double>{1, 1}, 2);
  RolloutOptions opts;
  opts.futures = 40;
  RolloutDecision d1, d2;
  Rng r1(5), r2(5);
  const auto a = rollout_allocate(state, 0, base, model, LossSpec::power(2.0),
                                  r1, opts, &d1);
  const auto b = rollout_allocate(state, 0, base, model, LossSpec::power(2.0),
                                  r2, opts, &d2);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_GE(d1.beta, 0.0);
  EXPECT_LE(d1.beta, 1.0);
  EXPECT_NEAR(Sum(a.lambda), d1.beta * pp.budget, 1e-9);
  // Spending nothing now and everything later costs the same as spending
  // everything now, so the grid end points agree up to Monte Carlo noise.
  EXPECT_NEAR(d1.costs.front(), d1.exact_cost_at_one,
              0.2 * d1.exact_cost_at_one);
}

}  // namespace
}  // namespace sparse_sense
