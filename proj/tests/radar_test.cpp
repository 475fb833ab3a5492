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

#include "sparse_sense/radar.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"

namespace sparse_sense {
namespace {

Template Delta() {
  Template t;
  t.width = t.height = 1;
  t.mask = {1};
  return t;
}

// Direct correlation with explicit offsets from the template centre.
Image NaiveCorrelation(const Image& img, const Template& t) {
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int dy = -t.cy(); dy < t.height - t.cy(); ++dy) {
        for (int dx = -t.cx(); dx < t.width - t.cx(); ++dx) {
          if (!t.at(dx + t.cx(), dy + t.cy())) continue;
          if (img.contains(x + dx, y + dy)) acc += img.at(x + dx, y + dy);
        }
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

RadarConfig SmallRadar() {
  RadarConfig c;
  c.width = 48;
  c.height = 32;
  c.targets = 2;
  c.p0 = 0.01;
  c.stages = 3;
  c.realizations = 20;
  c.calibration_samples = 4;
  return c;
}

TEST(Template, TankShape) {
  const Template t = make_tank_template(9, 5, 1);
  EXPECT_EQ(t.count(), 41);
  EXPECT_EQ(t.at(0, 0), 0);
  EXPECT_EQ(t.at(1, 0), 1);
  EXPECT_EQ(t.at(4, 2), 1);
  EXPECT_THROW(make_tank_template(3, 3, 2), ParameterError);
}

TEST(Swerling, ZeroAmplitudeGivesZero) {
  const Image scene(4, 1, 0.0);
  Rng rng(1);
  const std::vector<std::int64_t> kappa = {1, 5, 0, 2};
  const auto z = swerling_observe(scene, kappa, rng);
  EXPECT_EQ(*z[0], 0.0);
  EXPECT_EQ(*z[1], 0.0);
  EXPECT_FALSE(z[2].has_value());
}

TEST(Swerling, SinglePulseMeanMatchesAmplitude) {
  const int n = 10000;
  const Image scene(n, 1, 2.5);
  Rng rng(2);
  const auto z =
      swerling_observe(scene, std::vector<std::int64_t>(n, 1), rng);
  double mean = 0.0;
  for (const auto& v : z) mean += *v / n;
  // Exponential with mean 2.5 has standard deviation 2.5.
  EXPECT_NEAR(mean, 2.5, 4.0 * 2.5 / std::sqrt(n));
}

TEST(Swerling, ManyPulsesVarianceIsAmplitudeSquaredOverPulses) {
  const int n = 1000;
  const double x = 3.0;
  const std::int64_t kappa = 10000;
  const Image scene(n, 1, x);
  Rng rng(3);
  const auto z =
      swerling_observe(scene, std::vector<std::int64_t>(n, kappa), rng);
  double mean = 0.0;
  for (const auto& v : z) mean += *v / n;
  double var = 0.0;
  for (const auto& v : z) var += (*v - mean) * (*v - mean) / (n - 1);
  EXPECT_NEAR(var, x * x / kappa, 0.1 * x * x / kappa);
}

TEST(MatchedFilter, DeltaTemplateIsIdentity) {
  Image img(5, 4);
  Rng rng(4);
  for (double& v : img.data) v = rng.uniform();
  EXPECT_EQ(matched_filter(img, Delta()).data, img.data);
}

TEST(MatchedFilter, ConstantImageScalesByTemplateSum) {
  const Image img(30, 20, 2.0);
  const Template t = make_tank_template();
  const Image out = matched_filter(img, t);
  for (int y = t.cy(); y < img.height - t.cy(); ++y) {
    for (int x = t.cx(); x < img.width - t.cx(); ++x) {
      EXPECT_DOUBLE_EQ(out.at(x, y), 2.0 * t.count());
    }
  }
  EXPECT_LT(out.at(0, 0), 2.0 * t.count());
}

TEST(MatchedFilter, MatchesNaiveCorrelation) {
  Image img(23, 17);
  Rng rng(5);
  for (double& v : img.data) v = rng.normal();
  Template t = make_tank_template(7, 5, 1);
  t.mask[3] = 0;  // asymmetric
  const Image a = matched_filter(img, t);
  const Image b = NaiveCorrelation(img, t);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a.data[i], b.data[i], 1e-10);
  }
  EXPECT_THROW(matched_filter(Image(3, 3), t), ParameterError);
}

TEST(FilterStage, EvenPulsesReproduceMatchedFilter) {
  Image scene(20, 12);
  Rng rng(6);
  for (double& v : scene.data) v = 1.0 + rng.uniform();
  const std::vector<std::int64_t> kappa(scene.size(), 3);
  Rng obs(7);
  const auto z = swerling_observe(scene, kappa, obs);
  const Template t = make_tank_template(5, 3, 1);
  const FilteredStage f = filter_stage(z, kappa, 20, 12, t);
  Image raw(20, 12);
  for (std::size_t i = 0; i < raw.size(); ++i) raw.data[i] = *z[i];
  const Image direct = matched_filter(raw, t);
  // Interior pixels see the whole footprint.
  const int y = 5, x = 10;
  EXPECT_NEAR(*f.value[y * 20 + x], direct.at(x, y), 1e-9);
  EXPECT_NEAR(f.effort[y * 20 + x], 3.0, 1e-12);
}

TEST(Priors, TwoLevelImageRecoveredExactly) {
  std::vector<double> img(1000, 5.0);
  for (int k = 0; k < 10; ++k) img[97 * k + 3] = 12.0;
  const RadarPriors r = estimate_priors(img, 0.01);
  EXPECT_DOUBLE_EQ(r.background_mean, 5.0);
  EXPECT_DOUBLE_EQ(r.sigma_sq, 0.0);
  EXPECT_DOUBLE_EQ(r.mu0, 7.0);
  EXPECT_DOUBLE_EQ(r.sigma0_sq, 0.0);
}

TEST(Priors, ConstantImageWarns) {
  int warnings = 0;
  auto old = set_warning_handler([&](const std::string&) { ++warnings; });
  const RadarPriors r = estimate_priors(std::vector<double>(100, 1.0), 0.05);
  set_warning_handler(old);
  EXPECT_EQ(r.sigma0_sq, 0.0);
  EXPECT_GE(warnings, 1);
}

TEST(Priors, GenerativeModelRecovered) {
  const std::size_t n = 100000;
  const double p0 = 0.05, bg = 10.0, s2 = 1.0, mu0 = 20.0, v0 = 4.0;
  Rng rng(8);
  std::vector<double> img(n);
  for (std::size_t i = 0; i < n; ++i) {
    img[i] = bg + std::sqrt(s2) * rng.normal();
    if (i % 20 == 0) img[i] += mu0 + std::sqrt(v0) * rng.normal();
  }
  const RadarPriors r = estimate_priors(img, p0);
  EXPECT_NEAR(r.background_mean, bg, 0.05 * bg);
  EXPECT_NEAR(r.sigma_sq, s2, 0.05 * s2);
  EXPECT_NEAR(r.mu0, mu0, 0.05 * mu0);
  // Target values carry background noise too: variance v0 + s2.
  EXPECT_NEAR(r.sigma0_sq, v0 + s2, 0.05 * (v0 + s2));
}

TEST(Priors, DegenerateSplitRejected) {
  EXPECT_THROW(estimate_priors(std::vector<double>(2, 1.0), 0.5),
               ParameterError);
  EXPECT_THROW(estimate_priors(std::vector<double>(10, 1.0), 0.0),
               ParameterError);
}

TEST(Pulses, SinglePixelSpreadsOverFootprint) {
  const Template t = make_tank_template(5, 3, 1);
  std::vector<double> lambda(20 * 10, 0.0);
  lambda[5 * 20 + 10] = 7.0;
  const auto kappa = map_to_pulses(lambda, 20, 10, t, 22);
  EXPECT_EQ(std::accumulate(kappa.begin(), kappa.end(), std::int64_t{0}), 22);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) {
      const int u = x - 10 + t.cx(), v = y - 5 + t.cy();
      const bool inside = u >= 0 && v >= 0 && u < t.width && v < t.height &&
                          t.at(u, v);
      if (!inside) EXPECT_EQ(kappa[y * 20 + x], 0) << x << "," << y;
    }
  }
}

TEST(Pulses, UniformLambdaGivesNearUniformPlan) {
  const Template t = make_tank_template();
  const std::vector<double> lambda(30 * 20, 1.0);
  Rng tie(1);
  const auto kappa = map_to_pulses(lambda, 30, 20, t, 30 * 20 * 2 + 77, &tie);
  EXPECT_EQ(std::accumulate(kappa.begin(), kappa.end(), std::int64_t{0}),
            30 * 20 * 2 + 77);
  for (std::int64_t k : kappa) {
    EXPECT_GE(k, 2);
    EXPECT_LE(k, 3);
  }
}

// Ideal real-valued plan computed independently: each lambda_j is spread
// evenly over its footprint normalised per receiving pixel.
TEST(Pulses, RandomLambdaApportionment) {
  const int w = 17, h = 11;
  const Template t = make_tank_template(5, 3, 1);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> lambda(w * h);
    for (double& v : lambda) v = rng.uniform() < 0.3 ? 5.0 * rng.uniform() : 0.0;
    const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
    const std::int64_t pulses = std::llround(total);
    std::vector<double> ideal(w * h, 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        int count = 0;
        for (int dy = -t.cy(); dy < t.height - t.cy(); ++dy) {
          for (int dx = -t.cx(); dx < t.width - t.cx(); ++dx) {
            if (!t.at(dx + t.cx(), dy + t.cy())) continue;
            const int sx = x - dx, sy = y - dy;
            if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
            acc += lambda[sy * w + sx];
            ++count;
          }
        }
        ideal[y * w + x] = acc / count;
      }
    }
    const double mass = std::accumulate(ideal.begin(), ideal.end(), 0.0);
    const auto kappa = map_to_pulses(lambda, w, h, t, pulses);
    EXPECT_EQ(std::accumulate(kappa.begin(), kappa.end(), std::int64_t{0}),
              pulses);
    for (int i = 0; i < w * h; ++i) {
      EXPECT_LE(std::abs(kappa[i] - ideal[i] * pulses / mass), 1.0 + 1e-9);
    }
  }
}

TEST(Reconstruct, WeightsObservationsByPulses) {
  using Z = std::vector<std::optional<double>>;
  using K = std::vector<std::int64_t>;
  const auto one = ml_reconstruct(2, 1, {Z{4.0, 1.5}}, {K{2, 2}});
  EXPECT_EQ(one.image.data, (std::vector<double>{4.0, 1.5}));
  const auto even =
      ml_reconstruct(1, 1, {Z{4.0}, Z{2.0}}, {K{3}, K{3}});
  EXPECT_DOUBLE_EQ(even.image.data[0], 3.0);
  const auto weighted =
      ml_reconstruct(1, 1, {Z{4.0}, Z{0.0}}, {K{1}, K{3}});
  EXPECT_DOUBLE_EQ(weighted.image.data[0], 1.0);
  const auto none = ml_reconstruct(1, 1, {Z{std::nullopt}}, {K{0}});
  EXPECT_EQ(none.image.data[0], 0.0);
  EXPECT_EQ(none.observed[0], 0);
}

TEST(Pgm, RoundTripIsBitIdentical) {
  Image img(7, 5);
  Rng rng(10);
  for (double& v : img.data) v = 100.0 * rng.uniform();
  std::stringstream a;
  write_pgm(img, a);
  const std::string first = a.str();
  std::stringstream in(first);
  const Image back = read_pgm(in);
  std::stringstream b;
  write_pgm(back, b);
  EXPECT_EQ(first, b.str());
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_NEAR(back.data[i], img.data[i], 100.0 / 65535.0);
  }
}

TEST(Pgm, SinglePixelZeroImage) {
  std::stringstream s;
  write_pgm(Image(1, 1, 0.0), s);
  const std::string bytes = s.str();
  EXPECT_EQ(bytes.substr(0, 3), "P5\n");
  EXPECT_EQ(bytes.substr(bytes.size() - 2), std::string(2, '\0'));
  EXPECT_LT(bytes.size(), 64u);
  std::stringstream in(bytes);
  EXPECT_EQ(read_pgm(in).data, std::vector<double>{0.0});
}

TEST(Pgm, EightBitFixtureScaledByMaxval) {
  std::string file = "P5\n# hand made\n3 1\n200\n";
  file += static_cast<char>(0);
  file += static_cast<char>(100);
  file += static_cast<char>(200);
  std::stringstream in(file);
  const Image img = read_pgm(in);
  EXPECT_EQ(img.data, (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Pgm, MalformedInputRejected) {
  std::stringstream bad_magic("P2\n1 1\n255\n0");
  EXPECT_THROW(read_pgm(bad_magic), FormatError);
  std::stringstream bad_header("P5\n1 x\n255\n0");
  EXPECT_THROW(read_pgm(bad_header), FormatError);
  std::string truncated = "P5\n2 2\n65535\n";
  truncated += std::string(5, '\1');
  std::stringstream t(truncated);
  EXPECT_THROW(read_pgm(t), FormatError);
}

TEST(Scene, SyntheticTargetsArePlaced) {
  const RadarConfig c;
  const Scene s = synthetic_scene(c);
  EXPECT_EQ(static_cast<int>(s.centers.size()), 13);
  const int target_pixels = static_cast<int>(
      std::count(s.target_mask.begin(), s.target_mask.end(), 1));
  EXPECT_EQ(target_pixels, 13 * c.make_template().count());
  for (double v : s.image.data) EXPECT_GT(v, 0.0);
}

TEST(Pipeline, PulsesConservedForEveryPolicy) {
  const RadarConfig base = SmallRadar();
  const Scene scene = synthetic_scene(base);
  const RadarSetup setup = prepare_radar(scene, base, 4);
  for (PolicyKind p :
       {PolicyKind::kNonadaptive, PolicyKind::kDs, PolicyKind::kOlfc}) {
    for (int stages : {2, 4}) {
      RadarConfig c = base;
      c.policy = p;
      c.stages = stages;
      for (std::uint64_t r = 0; r < 5; ++r) {
        const RadarRun run = run_radar_realization(scene, setup, c, r);
        EXPECT_EQ(run.total_pulses,
                  static_cast<std::int64_t>(scene.image.size()) * 2);
        for (double v : run.reconstruction.image.data) {
          EXPECT_TRUE(std::isfinite(v));
          EXPECT_GE(v, 0.0);
        }
      }
    }
  }
}

TEST(Pipeline, DeterministicAcrossThreadCounts) {
  RadarConfig c = SmallRadar();
  const Scene scene = synthetic_scene(c);
  const RadarSetup setup = prepare_radar(scene, c, c.stages);
  const RadarSummary a = run_radar(scene, setup, c);
  c.threads = 3;
  const RadarSummary b = run_radar(scene, setup, c);
  EXPECT_EQ(a.mean.data, b.mean.data);
  EXPECT_EQ(a.target_std_db, b.target_std_db);
}

// Swerling observations are unbiased, so with a fixed pulse plan the pixel
// reconstructions of a constant scene average to the scene value. Adaptive
// plans depend on earlier returns and are excluded.
TEST(Pipeline, ConstantSceneReconstructionIsUnbiased) {
  RadarConfig c = SmallRadar();
  c.realizations = 100;
  c.policy = PolicyKind::kNonadaptive;
  const Scene scene = scene_from_image(Image(c.width, c.height, 2.0));
  const RadarSetup setup = prepare_radar(scene, c, c.stages);
  std::vector<double> sum(scene.image.size(), 0.0), sq(scene.image.size(), 0.0);
  std::vector<int> count(scene.image.size(), 0);
  for (int r = 0; r < c.realizations; ++r) {
    const RadarRun run = run_radar_realization(scene, setup, c, r);
    for (std::size_t i = 0; i < scene.image.size(); ++i) {
      if (!run.reconstruction.observed[i]) continue;
      const double v = run.reconstruction.image.data[i];
      sum[i] += v;
      sq[i] += v * v;
      ++count[i];
    }
  }
  int outliers = 0, checked = 0;
  for (std::size_t i = 0; i < scene.image.size(); i += 31) {
    if (count[i] < 10) continue;
    ++checked;
    const double mean = sum[i] / count[i];
    const double var = (sq[i] - count[i] * mean * mean) / (count[i] - 1);
    if (std::abs(mean - 2.0) > 4.0 * std::sqrt(var / count[i])) ++outliers;
  }
  EXPECT_GT(checked, 20);
  EXPECT_EQ(outliers, 0);
}

}  // namespace
}  // namespace sparse_sense
