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

#ifndef SPARSE_SENSE_QUADRATURE_HPP_
#define SPARSE_SENSE_QUADRATURE_HPP_

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "sparse_sense/common.hpp"

namespace sparse_sense {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int intervals = 0;
};

namespace detail {

// 7-point Gauss / 15-point Kronrod pair (QUADPACK qk15 abscissae).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
std::pair<double, double> kronrod15(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[j] * sum;
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * sum;
  }
  return {kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over [a, b] to absolute tolerance
// `abs_tol`. Throws NumericalError when the interval budget is exhausted.
template <typename F>
QuadratureResult integrate(const F& f, double a, double b,
                           double abs_tol = 1e-10, int max_intervals = 2000) {
  struct Piece {
    double a, b, value, error;
  };
  QuadratureResult out;
  if (a == b) return out;
  std::vector<Piece> pieces;
  const auto [v0, e0] = detail::kronrod15(f, a, b);
  pieces.push_back({a, b, v0, e0});
  double total = v0;
  double error = e0;
  while (error > abs_tol) {
    if (static_cast<int>(pieces.size()) >= max_intervals) {
      std::ostringstream msg;
      msg << "quadrature on [" << a << ", " << b << "] did not reach tolerance "
          << abs_tol << " (estimate " << total << ", error " << error
          << ", intervals " << pieces.size() << ")";
      throw NumericalError(msg.str());
    }
    std::size_t worst = 0;
    for (std::size_t k = 1; k < pieces.size(); ++k) {
      if (pieces[k].error > pieces[worst].error) worst = k;
    }
    const Piece p = pieces[worst];
    const double mid = 0.5 * (p.a + p.b);
    const auto [vl, el] = detail::kronrod15(f, p.a, mid);
    const auto [vr, er] = detail::kronrod15(f, mid, p.b);
    pieces[worst] = {p.a, mid, vl, el};
    pieces.push_back({mid, p.b, vr, er});
    total += vl + vr - p.value;
    error += el + er - p.error;
    if (mid <= p.a || mid >= p.b) break;  // interval below resolution
  }
  // Re-sum to avoid drift from the incremental updates.
  out.value = 0.0;
  out.error = 0.0;
  for (const Piece& p : pieces) {
    out.value += p.value;
    out.error += p.error;
  }
  out.intervals = static_cast<int>(pieces.size());
  return out;
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_QUADRATURE_HPP_
