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

#ifndef SPARSE_SENSE_LOSS_HPP_
#define SPARSE_SENSE_LOSS_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sparse_sense/common.hpp"
#include "sparse_sense/quadrature.hpp"

namespace sparse_sense {

// Non-decreasing estimation loss L(a), a = |estimate - truth|, with L(0) = 0.
class LossSpec {
 public:
  enum class Kind { kPower, kZeroOne, kExponential, kLog, kHuber };

  LossSpec() = default;

  static LossSpec power(double q) { return make(Kind::kPower, q); }
  static LossSpec zero_one(double tolerance) {
    return make(Kind::kZeroOne, tolerance);
  }
  // 1 - exp(-b a)
  static LossSpec exponential(double b) { return make(Kind::kExponential, b); }
  // log(1 + b a)
  static LossSpec log(double b) { return make(Kind::kLog, b); }
  // a^2 / 2 below the knot, linear with matching slope above it.
  static LossSpec huber(double knot) { return make(Kind::kHuber, knot); }

  // Accepts "mse", "mae", or "<kind>:<param>" with kind one of power,
  // zero_one, exponential, log, huber.
  static LossSpec parse(const std::string& text) {
    if (text == "mse") return power(2.0);
    if (text == "mae") return power(1.0);
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
      throw ParameterError("loss spec must be mse, mae or kind:param: " + text);
    }
    const std::string kind = text.substr(0, colon);
    double param = 0.0;
    try {
      std::size_t used = 0;
      param = std::stod(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) throw std::invalid_argument(text);
    } catch (const std::logic_error&) {
      throw ParameterError("bad loss parameter in: " + text);
    }
    if (kind == "power") return power(param);
    if (kind == "zero_one") return zero_one(param);
    if (kind == "exponential") return exponential(param);
    if (kind == "log") return log(param);
    if (kind == "huber") return huber(param);
    throw ParameterError("unknown loss kind: " + kind);
  }

  Kind kind() const { return kind_; }
  double param() const { return param_; }

  std::string name() const {
    if (kind_ == Kind::kPower && param_ == 2.0) return "mse";
    if (kind_ == Kind::kPower && param_ == 1.0) return "mae";
    std::ostringstream out;
    switch (kind_) {
      case Kind::kPower: out << "power"; break;
      case Kind::kZeroOne: out << "zero_one"; break;
      case Kind::kExponential: out << "exponential"; break;
      case Kind::kLog: out << "log"; break;
      case Kind::kHuber: out << "huber"; break;
    }
    out << ':' << param_;
    return out.str();
  }

  // Water-filling exponent 2/(q+2) that is optimal for a^q.
  double final_gamma() const {
    if (kind_ != Kind::kPower) {
      throw ParameterError("closed-form exponent needs a power-law loss");
    }
    return 2.0 / (param_ + 2.0);
  }

  double operator()(double a) const {
    switch (kind_) {
      case Kind::kPower:
        return a == 0.0 ? 0.0 : std::pow(a, param_);
      case Kind::kZeroOne:
        return a > param_ ? 1.0 : 0.0;
      case Kind::kExponential:
        return -std::expm1(-param_ * a);
      case Kind::kLog:
        return std::log1p(param_ * a);
      case Kind::kHuber:
        return a <= param_ ? 0.5 * a * a : param_ * (a - 0.5 * param_);
    }
    return 0.0;
  }

  // L'(a) for a > 0 (zero almost everywhere for the 0-1 loss).
  double derivative(double a) const {
    switch (kind_) {
      case Kind::kPower:
        return param_ * std::pow(a, param_ - 1.0);
      case Kind::kZeroOne:
        return 0.0;
      case Kind::kExponential:
        return param_ * std::exp(-param_ * a);
      case Kind::kLog:
        return param_ / (1.0 + param_ * a);
      case Kind::kHuber:
        return std::min(a, param_);
    }
    return 0.0;
  }

 private:
  static LossSpec make(Kind kind, double param) {
    if (!(param > 0.0) || !std::isfinite(param)) {
      throw ParameterError("loss parameter must be positive and finite");
    }
    LossSpec s;
    s.kind_ = kind;
    s.param_ = param;
    return s;
  }

  Kind kind_ = Kind::kPower;
  double param_ = 2.0;
};

inline double loss(const LossSpec& spec, double a) {
  if (!(a >= 0.0)) throw ParameterError("loss argument must be >= 0");
  return spec(a);
}

namespace detail {

inline constexpr double kTailCutoff = 12.0;  // phi(12) < 1e-31
inline constexpr double kQuadratureTolerance = 1e-10;

inline double kernel_precision(double var_i, double hbar, double sigma_sq) {
  if (!(var_i > 0.0)) throw ParameterError("sigma_i^2 must be > 0");
  if (!(hbar >= 0.0)) throw ParameterError("accumulated precision must be >= 0");
  if (!(sigma_sq > 0.0)) throw ParameterError("noise variance must be > 0");
  return sigma_sq / var_i + hbar;
}

inline bool has_closed_form(const LossSpec& spec) {
  return spec.kind() == LossSpec::Kind::kZeroOne ||
         (spec.kind() == LossSpec::Kind::kPower &&
          (spec.param() == 1.0 || spec.param() == 2.0));
}

}  // namespace detail

// g = int_0^inf L(sd * theta) phi(theta) dtheta, sd^2 = sigma^2/(r + hbar),
// evaluated by quadrature regardless of closed forms.
inline double g_kernel_quadrature(const LossSpec& spec, double var_i,
                                  double hbar, double sigma_sq) {
  const double precision = detail::kernel_precision(var_i, hbar, sigma_sq);
  const double sd = std::sqrt(sigma_sq / precision);
  const auto integrand = [&](double theta) {
    return spec(sd * theta) * normal_pdf(theta);
  };
  if (spec.kind() == LossSpec::Kind::kZeroOne) {
    const double knot = std::min(spec.param() / sd, detail::kTailCutoff);
    return integrate(integrand, knot, detail::kTailCutoff,
                     detail::kQuadratureTolerance)
        .value;
  }
  if (spec.kind() == LossSpec::Kind::kHuber) {
    const double knot = std::min(spec.param() / sd, detail::kTailCutoff);
    return integrate(integrand, 0.0, knot, 0.5 * detail::kQuadratureTolerance)
               .value +
           integrate(integrand, knot, detail::kTailCutoff,
                     0.5 * detail::kQuadratureTolerance)
               .value;
  }
  return integrate(integrand, 0.0, detail::kTailCutoff,
                   detail::kQuadratureTolerance)
      .value;
}

// Per-component expected loss kernel. The leading factor 2 of the two-sided
// integral is omitted; it does not move any minimiser.
inline double g_kernel(const LossSpec& spec, double var_i, double hbar,
                       double sigma_sq) {
  const double precision = detail::kernel_precision(var_i, hbar, sigma_sq);
  switch (spec.kind()) {
    case LossSpec::Kind::kPower:
      if (spec.param() == 2.0) return 0.5 * sigma_sq / precision;
      if (spec.param() == 1.0) {
        return std::sqrt(sigma_sq / precision) /
               std::sqrt(2.0 * std::numbers::pi);
      }
      break;
    case LossSpec::Kind::kZeroOne:
      return q_function(spec.param() * std::sqrt(precision / sigma_sq));
    default:
      break;
  }
  return g_kernel_quadrature(spec, var_i, hbar, sigma_sq);
}

// d g / d hbar.
inline double g_kernel_derivative(const LossSpec& spec, double var_i,
                                  double hbar, double sigma_sq) {
  const double precision = detail::kernel_precision(var_i, hbar, sigma_sq);
  const double sd = std::sqrt(sigma_sq / precision);
  switch (spec.kind()) {
    case LossSpec::Kind::kPower:
      if (detail::has_closed_form(spec)) {
        return -0.5 * spec.param() * g_kernel(spec, var_i, hbar, sigma_sq) /
               precision;
      }
      break;
    case LossSpec::Kind::kZeroOne: {
      const double x = spec.param() / sd;
      return -normal_pdf(x) * x / (2.0 * precision);
    }
    default:
      break;
  }
  const auto integrand = [&](double theta) {
    return spec.derivative(sd * theta) * theta * normal_pdf(theta);
  };
  double integral;
  if (spec.kind() == LossSpec::Kind::kHuber) {
    const double knot = std::min(spec.param() / sd, detail::kTailCutoff);
    integral = integrate(integrand, 0.0, knot).value +
               integrate(integrand, knot, detail::kTailCutoff).value;
  } else {
    integral = integrate(integrand, 0.0, detail::kTailCutoff,
                         detail::kQuadratureTolerance)
                   .value;
  }
  return -sd / (2.0 * precision) * integral;
}

// E L(|d|) for d ~ N(offset, sd^2): the expected loss of an estimate that
// misses the posterior mean by `offset`.
inline double expected_loss_gaussian(const LossSpec& spec, double offset,
                                     double sd) {
  if (!(sd > 0.0)) throw ParameterError("standard deviation must be > 0");
  const double m = std::abs(offset);
  if (spec.kind() == LossSpec::Kind::kZeroOne) {
    const double e = spec.param();
    return q_function((e - m) / sd) + q_function((e + m) / sd);
  }
  const auto density = [&](double u) {
    return (normal_pdf((u - m) / sd) + normal_pdf((u + m) / sd)) / sd;
  };
  const auto integrand = [&](double u) { return spec(u) * density(u); };
  std::vector<double> cuts = {0.0, m, m + detail::kTailCutoff * sd};
  if (spec.kind() == LossSpec::Kind::kHuber) cuts.push_back(spec.param());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0;
  const double hi = m + detail::kTailCutoff * sd;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (cuts[k] >= hi) break;
    total += integrate(integrand, cuts[k], std::min(cuts[k + 1], hi),
                       detail::kQuadratureTolerance * 0.25)
                 .value;
  }
  return total;
}

struct ConvexityReport {
  bool passed = false;
  bool condition_checked = false;
  // Worst normalised value of (a L'' + 3 L') / (|a L''| + 3|L'|) on the grid.
  double condition_margin = 0.0;
  // Most negative second difference of g in hbar.
  double g_margin = 0.0;
};

// Verifies the sufficient condition a L''(a) + 3 L'(a) >= 0 by central
// differences on a log grid over [1e-4, 1e4], and convexity of g in hbar by
// second differences. The 0-1 loss has no usable derivatives and is checked
// through g alone.
inline ConvexityReport check_g_convexity(const LossSpec& spec) {
  ConvexityReport report;
  report.condition_margin = 1.0;
  if (spec.kind() != LossSpec::Kind::kZeroOne) {
    report.condition_checked = true;
    constexpr int kPoints = 161;
    for (int k = 0; k < kPoints; ++k) {
      const double a = std::pow(10.0, -4.0 + 8.0 * k / (kPoints - 1));
      const double d = 1e-3 * a;
      const double lp = spec(a + d);
      const double l0 = spec(a);
      const double lm = spec(a - d);
      const double first = (lp - lm) / (2.0 * d);
      const double second = (lp - 2.0 * l0 + lm) / (d * d);
      const double value = a * second + 3.0 * first;
      const double scale = std::abs(a * second) + 3.0 * std::abs(first);
      if (scale > 0.0) {
        report.condition_margin = std::min(report.condition_margin,
                                           value / scale);
      }
    }
  }
  report.g_margin = 0.0;
  constexpr double kSigmaSq = 1.0;
  for (double var_i : {0.05, 0.25, 1.0, 4.0}) {
    for (double step : {0.01, 0.1, 1.0}) {
      double g_prev2 = g_kernel(spec, var_i, 0.0, kSigmaSq);
      double g_prev = g_kernel(spec, var_i, step, kSigmaSq);
      for (int k = 2; k <= 60; ++k) {
        const double g = g_kernel(spec, var_i, step * k, kSigmaSq);
        report.g_margin = std::min(report.g_margin, g - 2.0 * g_prev + g_prev2);
        g_prev2 = g_prev;
        g_prev = g;
      }
    }
  }
  report.passed = report.condition_margin >= -1e-6 && report.g_margin >= -1e-8;
  return report;
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_LOSS_HPP_
