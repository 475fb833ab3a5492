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

#ifndef SPARSE_SENSE_EFFORT_HPP_
#define SPARSE_SENSE_EFFORT_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sparse_sense/common.hpp"

namespace sparse_sense {

// Maps sensing effort to observation precision (in units of 1/sigma^2).
// Every instance satisfies h(0) = 0, h(1) = 1, non-decreasing and concave.
class EffortFunction {
 public:
  enum class Kind { kIdentity, kPower, kTabulated };

  EffortFunction() = default;

  static EffortFunction identity() { return EffortFunction(); }

  // h(lambda) = lambda^c, 0 < c <= 1.
  static EffortFunction power(double c) {
    if (!(c > 0.0 && c <= 1.0)) {
      throw ParameterError("power effort exponent must lie in (0, 1]");
    }
    EffortFunction h;
    h.kind_ = c == 1.0 ? Kind::kIdentity : Kind::kPower;
    h.exponent_ = c;
    return h;
  }

  // Piecewise-linear through (knots[k], values[k]), extended linearly with
  // the final slope. The table is rescaled so that h(1) = 1.
  static EffortFunction tabulated(std::vector<double> knots,
                                  std::vector<double> values) {
    if (knots.size() != values.size() || knots.size() < 2) {
      throw ParameterError("tabulated effort needs >= 2 matching knots/values");
    }
    if (knots.front() != 0.0 || values.front() != 0.0) {
      throw ParameterError("tabulated effort must start at h(0) = 0");
    }
    for (std::size_t k = 1; k < knots.size(); ++k) {
      if (!(knots[k] > knots[k - 1])) {
        throw ParameterError("tabulated effort knots must be increasing");
      }
      if (values[k] < values[k - 1]) {
        throw ParameterError("tabulated effort must be non-decreasing");
      }
    }
    EffortFunction h;
    h.kind_ = Kind::kTabulated;
    h.knots_ = std::move(knots);
    h.values_ = std::move(values);
    const double at_one = h(1.0);
    if (!(at_one > 0.0)) {
      throw ParameterError("tabulated effort must be positive at 1");
    }
    for (double& v : h.values_) v /= at_one;
    // Concavity on the knot grid: slopes non-increasing.
    double prev_slope = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < h.knots_.size(); ++k) {
      const double slope = (h.values_[k] - h.values_[k - 1]) /
                           (h.knots_[k] - h.knots_[k - 1]);
      if (slope > prev_slope * (1.0 + 1e-12) + 1e-15) {
        throw ParameterError("tabulated effort must be concave");
      }
      prev_slope = slope;
    }
    return h;
  }

  Kind kind() const { return kind_; }
  bool is_identity() const { return kind_ == Kind::kIdentity; }
  double exponent() const { return exponent_; }

  double operator()(double lambda) const {
    if (lambda <= 0.0) return 0.0;
    switch (kind_) {
      case Kind::kIdentity:
        return lambda;
      case Kind::kPower:
        return std::pow(lambda, exponent_);
      case Kind::kTabulated:
        return interpolate(lambda);
    }
    return lambda;
  }

  // Right derivative h'(lambda); at 0 for sublinear power laws this is
  // +infinity, which callers clamp.
  double derivative(double lambda) const {
    switch (kind_) {
      case Kind::kIdentity:
        return 1.0;
      case Kind::kPower:
        if (lambda <= 0.0) return std::numeric_limits<double>::infinity();
        return exponent_ * std::pow(lambda, exponent_ - 1.0);
      case Kind::kTabulated: {
        const std::size_t k = segment(lambda);
        return (values_[k + 1] - values_[k]) / (knots_[k + 1] - knots_[k]);
      }
    }
    return 1.0;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::kIdentity:
        return "identity";
      case Kind::kPower:
        return "power:" + std::to_string(exponent_);
      case Kind::kTabulated:
        return "tabulated";
    }
    return "identity";
  }

 private:
  std::size_t segment(double lambda) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), lambda);
    std::size_t k = static_cast<std::size_t>(it - knots_.begin());
    k = k == 0 ? 0 : k - 1;
    return std::min(k, knots_.size() - 2);
  }

  double interpolate(double lambda) const {
    const std::size_t k = segment(lambda);
    const double w = (lambda - knots_[k]) / (knots_[k + 1] - knots_[k]);
    return values_[k] + w * (values_[k + 1] - values_[k]);
  }

  Kind kind_ = Kind::kIdentity;
  double exponent_ = 1.0;
  std::vector<double> knots_;
  std::vector<double> values_;
};

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_EFFORT_HPP_
