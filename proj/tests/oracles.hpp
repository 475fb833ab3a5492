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

// Independent reference computations used only by the test suites. Nothing
// here calls into the library's solution paths.

#ifndef SPARSE_SENSE_TESTS_ORACLES_HPP_
#define SPARSE_SENSE_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace sparse_sense::oracle {

inline double gauss(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

struct GridPosterior {
  double p = 0.0;
  double mu = 0.0;
  double var = 0.0;
};

// Numerical Bayes on a theta grid for one component: prior is a point mass
// at 0 with weight 1-p0 and N(mu0, var0) with weight p0; each observation
// (y, noise_var) is theta + N(0, noise_var).
inline GridPosterior grid_bayes(double p0, double mu0, double var0,
                                const std::vector<double>& ys,
                                const std::vector<double>& noise_vars,
                                double lo = -10.0, double hi = 10.0,
                                double step = 1e-3) {
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  // Work in logs, then exponentiate relative to the max.
  std::vector<double> log_density(n + 1);
  double max_log = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= n; ++k) {
    const double theta = lo + k * step;
    double l = std::log(p0) + std::log(gauss(theta, mu0, var0));
    for (std::size_t t = 0; t < ys.size(); ++t) {
      l += -0.5 * (ys[t] - theta) * (ys[t] - theta) / noise_vars[t] -
           0.5 * std::log(2.0 * std::numbers::pi * noise_vars[t]);
    }
    log_density[k] = l;
    max_log = std::max(max_log, l);
  }
  double log_zero = std::log1p(-p0);
  for (std::size_t t = 0; t < ys.size(); ++t) {
    log_zero += -0.5 * ys[t] * ys[t] / noise_vars[t] -
                0.5 * std::log(2.0 * std::numbers::pi * noise_vars[t]);
  }
  const double ref = std::max(max_log, log_zero);
  double z1 = 0.0, m1 = 0.0, m2 = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double theta = lo + k * step;
    const double w = (k == 0 || k == n ? 0.5 : 1.0) * step *
                     std::exp(log_density[k] - ref);
    z1 += w;
    m1 += w * theta;
    m2 += w * theta * theta;
  }
  const double z0 = std::exp(log_zero - ref);
  GridPosterior out;
  out.p = z1 / (z1 + z0);
  out.mu = m1 / z1;
  out.var = m2 / z1 - out.mu * out.mu;
  return out;
}

// Brute-force minimisation of a function on the simplex {x >= 0, sum = total}
// for two components on a grid of the given step.
inline std::pair<double, double> grid_min_two(
    const std::function<double(double, double)>& f, double total,
    double step) {
  double best = std::numeric_limits<double>::infinity();
  double best_x = 0.0;
  const long n = std::lround(total / step);
  for (long k = 0; k <= n; ++k) {
    const double x = std::min(total, k * step);
    const double v = f(x, total - x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  return {best_x, total - best_x};
}

// Active-set solver for min ||x - v||^2 s.t. x >= 0, sum x = total, for
// small n: enumerate every support set, solve the equality-constrained QP on
// it in closed form and keep the best feasible one.
inline std::vector<double> simplex_projection_qp(const std::vector<double>& v,
                                                 double total) {
  const std::size_t n = v.size();
  std::vector<double> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        sum += v[i];
        ++count;
      }
    }
    const double shift = (sum - total) / count;
    std::vector<double> x(n, 0.0);
    bool feasible = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        x[i] = v[i] - shift;
        if (x[i] < -1e-15) feasible = false;
      }
    }
    if (!feasible) continue;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) cost += (x[i] - v[i]) * (x[i] - v[i]);
    if (cost < best_cost) {
      best_cost = cost;
      best = x;
    }
  }
  return best;
}

// Trapezoid rule on a uniform grid.
inline double trapezoid(const std::function<double(double)>& f, double a,
                        double b, long points) {
  const double h = (b - a) / static_cast<double>(points - 1);
  double total = 0.5 * (f(a) + f(b));
  for (long k = 1; k < points - 1; ++k) total += f(a + k * h);
  return total * h;
}

}  // namespace sparse_sense::oracle

#endif  // SPARSE_SENSE_TESTS_ORACLES_HPP_
