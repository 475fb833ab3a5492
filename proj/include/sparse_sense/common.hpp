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

#ifndef SPARSE_SENSE_COMMON_HPP_
#define SPARSE_SENSE_COMMON_HPP_

#include <cmath>
#include <functional>
#include <iostream>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sparse_sense {

// Allocations at or below this level are treated as "observation not taken".
inline constexpr double kObsEpsilon = 1e-12;

// Invalid argument or configuration value.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Allocation exceeds the remaining effort budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Quadrature or iterative solver failure.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Projected gradient hit its iteration cap; carries the best iterate seen.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> best,
                      double best_objective)
      : NumericalError(what),
        best_(std::move(best)),
        best_objective_(best_objective) {}
  const std::vector<double>& best_iterate() const { return best_; }
  double best_objective() const { return best_objective_; }

 private:
  std::vector<double> best_;
  double best_objective_;
};

// A predictive sample was requested for a component that is not observed.
class NoObservationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A lower-stage calibration table entry is missing.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file (PGM, calibration table, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) {
    std::cerr << "sparse_sense warning: " << msg << '\n';
  };
  return handler;
}
}  // namespace detail

// Installs a process-wide sink for recoverable-condition warnings and returns
// the previous one. Passing an empty handler silences warnings.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  std::swap(detail::warning_handler(), handler);
  return handler;
}

inline void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  if (detail::warning_handler()) detail::warning_handler()(msg);
}

// Standard normal density and upper tail.
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double q_function(double x) {
  return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_COMMON_HPP_
