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

#ifndef SPARSE_SENSE_RNG_HPP_
#define SPARSE_SENSE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace sparse_sense {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: the i-th output is a pure function of (key, i), so
// streams can be split by deriving keys and replayed without shared state.
// The distribution samplers below are self-contained so that outputs are
// bit-identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t key = 0) : key_(mix64(key ^ kSalt)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    return mix64(key_ + kGolden * (++counter_));
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exponential with unit mean.
  double exponential() { return -std::log(uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream identified by `tag`; does not advance this one.
  Rng fork(std::uint64_t tag) const {
    Rng child;
    child.key_ = mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL));
    return child;
  }

  std::uint64_t key() const { return key_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kSalt = 0x2545f4914f6cdd1dULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Roles for streams derived from a master seed. A (seed, trial, role) triple
// always yields the same stream, which is what makes paired comparisons
// between policies use common random numbers.
enum class StreamRole : std::uint64_t {
  kSignal = 1,
  kNoise = 2,
  kPolicy = 3,
  kCalibration = 4,
  kRadar = 5,
};

inline Rng make_stream(std::uint64_t seed, std::uint64_t trial,
                       StreamRole role) {
  return Rng(seed).fork(trial).fork(static_cast<std::uint64_t>(role));
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_RNG_HPP_
