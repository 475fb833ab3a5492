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

#ifndef SPARSE_SENSE_RADAR_HPP_
#define SPARSE_SENSE_RADAR_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sparse_sense/belief.hpp"
#include "sparse_sense/calibration.hpp"
#include "sparse_sense/common.hpp"
#include "sparse_sense/policies.hpp"
#include "sparse_sense/rng.hpp"

namespace sparse_sense {

// ---------------------------------------------------------------------------
// Images.

// Row-major image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw ParameterError("image dimensions must be > 0");
    data.assign(static_cast<std::size_t>(w) * h, fill);
  }

  std::size_t size() const { return data.size(); }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
};

// Binary target template; its centre is (width/2, height/2).
struct Template {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;

  std::uint8_t at(int x, int y) const {
    return mask[static_cast<std::size_t>(y) * width + x];
  }
  int count() const {
    return static_cast<int>(std::count(mask.begin(), mask.end(), 1));
  }
  int cx() const { return width / 2; }
  int cy() const { return height / 2; }
};

// Rectangle with `cut` pixels removed diagonally at each corner.
inline Template make_tank_template(int width = 9, int height = 5, int cut = 1) {
  if (width < 1 || height < 1) {
    throw ParameterError("template dimensions must be > 0");
  }
  if (cut < 0 || 2 * cut >= std::min(width, height)) {
    throw ParameterError("corner cut too large for template");
  }
  Template t;
  t.width = width;
  t.height = height;
  t.mask.assign(static_cast<std::size_t>(width) * height, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int dx = std::min(x, width - 1 - x);
      const int dy = std::min(y, height - 1 - y);
      if (dx + dy < cut) t.mask[static_cast<std::size_t>(y) * width + x] = 0;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// PGM input and output. Samples are 16-bit big-endian; the stored value s
// maps to intensity s / maxval * scale, with scale kept in a comment.

inline constexpr const char* kPgmScaleTag = "sparse-sense scale=";

inline void write_pgm(const Image& image, std::ostream& out) {
  if (image.width <= 0 || image.height <= 0) {
    throw ParameterError("image dimensions must be > 0");
  }
  double peak = 0.0;
  for (double v : image.data) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ParameterError("PGM intensities must be finite and >= 0");
    }
    peak = std::max(peak, v);
  }
  const double scale = peak > 0.0 ? peak : 1.0;
  std::ostringstream header;
  header << std::setprecision(17);
  header << "P5\n# " << kPgmScaleTag << scale << '\n'
         << image.width << ' ' << image.height << "\n65535\n";
  out << header.str();
  std::vector<char> bytes(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const auto s = static_cast<std::uint16_t>(
        std::clamp<long>(std::lround(image.data[i] / scale * 65535.0), 0, 65535));
    bytes[2 * i] = static_cast<char>(s >> 8);
    bytes[2 * i + 1] = static_cast<char>(s & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void write_pgm(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write PGM: " + path);
  write_pgm(image, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Image read_pgm(std::istream& in) {
  double scale = 1.0;
  // Reads one header token, consuming whitespace and comment lines.
  const auto token = [&]() {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        std::string comment;
        std::getline(in, comment);
        const auto pos = comment.find(kPgmScaleTag);
        if (pos != std::string::npos) {
          try {
            scale = std::stod(comment.substr(pos + std::strlen(kPgmScaleTag)));
          } catch (const std::logic_error&) {
            throw FormatError("PGM: bad scale comment");
          }
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError("PGM: truncated header");
    return tok;
  };
  const auto number = [&](const char* what) {
    const std::string tok = token();
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
      return v;
    } catch (const std::logic_error&) {
      throw FormatError(std::string("PGM: bad ") + what + ": " + tok);
    }
  };
  if (token() != "P5") throw FormatError("PGM: magic must be P5");
  const long width = number("width");
  const long height = number("height");
  const long maxval = number("maxval");
  if (maxval > 65535) throw FormatError("PGM: maxval must be <= 65535");
  if (width > 1 << 16 || height > 1 << 16) {
    throw FormatError("PGM: image too large");
  }
  Image image(static_cast<int>(width), static_cast<int>(height));
  const int bytes_per = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(image.size() * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw FormatError("PGM: truncated pixel data");
  }
  for (std::size_t i = 0; i < image.size(); ++i) {
    const unsigned s = bytes_per == 1
                           ? raw[i]
                           : (static_cast<unsigned>(raw[2 * i]) << 8) |
                                 raw[2 * i + 1];
    if (s > static_cast<unsigned>(maxval)) {
      throw FormatError("PGM: sample exceeds maxval");
    }
    image.data[i] = static_cast<double>(s) / static_cast<double>(maxval) * scale;
  }
  return image;
}

inline Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read PGM: " + path);
  return read_pgm(in);
}

// ---------------------------------------------------------------------------
// Observation and filtering.

// z_i = mean of kappa_i exponentials with mean x_i; absent where kappa_i = 0.
inline std::vector<std::optional<double>> swerling_observe(
    const Image& scene, std::span<const std::int64_t> kappa, Rng& rng) {
  if (kappa.size() != scene.size()) {
    throw ParameterError("pulse plan does not match the scene size");
  }
  std::vector<std::optional<double>> z(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (kappa[i] < 0) throw ParameterError("pulse counts must be >= 0");
    if (kappa[i] == 0) continue;
    double sum = 0.0;
    for (std::int64_t k = 0; k < kappa[i]; ++k) sum += rng.exponential();
    z[i] = scene.data[i] * sum / static_cast<double>(kappa[i]);
  }
  return z;
}

// Same-size 2-D cross-correlation with zero-padded borders.
inline Image correlate(const Image& image, const Template& t) {
  if (t.width > image.width || t.height > image.height) {
    throw ParameterError("template must not exceed the image");
  }
  Image out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (int v = 0; v < t.height; ++v) {
        const int yy = y + v - t.cy();
        if (yy < 0 || yy >= image.height) continue;
        for (int u = 0; u < t.width; ++u) {
          const int xx = x + u - t.cx();
          if (!t.at(u, v) || xx < 0 || xx >= image.width) continue;
          acc += image.at(xx, yy);
        }
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

// Binary-template correlation is the matched filter.
inline Image matched_filter(const Image& image, const Template& t) {
  return correlate(image, t);
}

// Pulse-weighted matched filter of one stage: the correlation of kappa * z
// over the correlation of kappa, rescaled by the template size so that an
// evenly sampled stage reproduces matched_filter. `effort` receives the
// average pulse count over each footprint; pixels whose footprint got no
// pulses carry no filtered value.
struct FilteredStage {
  std::vector<std::optional<double>> value;
  std::vector<double> effort;
};

inline FilteredStage filter_stage(const std::vector<std::optional<double>>& z,
                                  std::span<const std::int64_t> kappa,
                                  int width, int height, const Template& t) {
  Image weighted(width, height), pulses(width, height);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i]) {
      weighted.data[i] = static_cast<double>(kappa[i]) * *z[i];
      pulses.data[i] = static_cast<double>(kappa[i]);
    }
  }
  const Image num = correlate(weighted, t);
  const Image den = correlate(pulses, t);
  const double size = t.count();
  FilteredStage out;
  out.value.resize(z.size());
  out.effort.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.effort[i] = den.data[i] / size;
    if (den.data[i] > 0.0) out.value[i] = num.data[i] / den.data[i] * size;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prior estimation.

struct RadarPriors {
  double background_mean = 0.0;
  double sigma_sq = 1.0;  // filtered noise variance at unit footprint effort
  double mu0 = 0.0;       // target mean after background subtraction
  double sigma0_sq = 0.0;
  double threshold = 0.0;
};

// Splits the filtered values at the (1 - p0) quantile: the lower part gives
// the background mean and noise variance, the upper part the target prior.
// With `effort`, squared deviations are scaled by the footprint effort so
// that sigma_sq refers to unit effort.
inline RadarPriors estimate_priors(std::span<const double> filtered, double p0,
                                   std::span<const double> effort = {}) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw ParameterError("p0 must be in (0,1)");
  if (!effort.empty() && effort.size() != filtered.size()) {
    throw ParameterError("effort size does not match the image");
  }
  const std::size_t n = filtered.size();
  const std::size_t above = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(p0 * static_cast<double>(n))));
  if (n < above + 2) {
    throw ParameterError("too few pixels to split at the (1 - p0) quantile");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return filtered[a] < filtered[b];
  });
  const std::size_t split = n - above;
  RadarPriors r;
  r.threshold = filtered[order[split]];
  double mean_b = 0.0;
  for (std::size_t k = 0; k < split; ++k) mean_b += filtered[order[k]];
  mean_b /= static_cast<double>(split);
  double var_b = 0.0;
  for (std::size_t k = 0; k < split; ++k) {
    const double d = filtered[order[k]] - mean_b;
    var_b += d * d * (effort.empty() ? 1.0 : effort[order[k]]);
  }
  var_b /= static_cast<double>(split);
  double mean_t = 0.0;
  for (std::size_t k = split; k < n; ++k) mean_t += filtered[order[k]];
  mean_t /= static_cast<double>(above);
  double var_t = 0.0;
  for (std::size_t k = split; k < n; ++k) {
    const double d = filtered[order[k]] - mean_t;
    var_t += d * d;
  }
  var_t /= static_cast<double>(above);
  r.background_mean = mean_b;
  r.sigma_sq = var_b;
  r.mu0 = mean_t - mean_b;
  r.sigma0_sq = var_t;
  if (var_t == 0.0) warn("estimate_priors: target amplitude variance is 0");
  if (var_b == 0.0) warn("estimate_priors: background variance is 0");
  return r;
}

// ---------------------------------------------------------------------------
// Pulse mapping and reconstruction.

// Spreads lambda over the template footprint (a local average, so a uniform
// lambda stays uniform), scales the result to `total` pulses and rounds by
// largest remainders. Equal remainders are ordered by `tie_rng` when given,
// otherwise by index.
inline std::vector<std::int64_t> map_to_pulses(std::span<const double> lambda,
                                               int width, int height,
                                               const Template& t,
                                               std::int64_t total,
                                               Rng* tie_rng = nullptr) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (lambda.size() != n) throw ParameterError("lambda does not match image");
  if (total < 0) throw ParameterError("pulse total must be >= 0");
  for (double v : lambda) {
    if (!(v >= 0.0)) throw ParameterError("effort must be >= 0");
  }
  // Convolution with the support: pixel i collects lambda_j for every j
  // whose footprint covers i, averaged over the footprints inside the image.
  std::vector<double> ideal(n, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      int count = 0;
      for (int v = 0; v < t.height; ++v) {
        const int yy = y - (v - t.cy());
        if (yy < 0 || yy >= height) continue;
        for (int u = 0; u < t.width; ++u) {
          const int xx = x - (u - t.cx());
          if (!t.at(u, v) || xx < 0 || xx >= width) continue;
          acc += lambda[static_cast<std::size_t>(yy) * width + xx];
          ++count;
        }
      }
      ideal[static_cast<std::size_t>(y) * width + x] =
          count > 0 ? acc / count : 0.0;
    }
  }
  double mass = std::accumulate(ideal.begin(), ideal.end(), 0.0);
  if (!(mass > 0.0)) {
    std::fill(ideal.begin(), ideal.end(), 1.0);
    mass = static_cast<double>(n);
  }
  const double scale = static_cast<double>(total) / mass;
  std::vector<std::int64_t> kappa(n);
  std::vector<double> remainder(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = ideal[i] * scale;
    const double f = std::floor(v);
    kappa[i] = static_cast<std::int64_t>(f);
    remainder[i] = v - f;
    assigned += kappa[i];
  }
  std::int64_t left = total - assigned;
  std::vector<std::uint64_t> key(n, 0);
  if (tie_rng) {
    for (std::uint64_t& k : key) k = tie_rng->next_u64();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    if (key[a] != key[b]) return key[a] < key[b];
    return a < b;
  });
  // Rounding can leave the floor sum off by one pulse in either direction.
  for (std::size_t k = 0; left > 0; k = (k + 1) % n, --left) ++kappa[order[k]];
  for (std::size_t k = n; left < 0; ++left) {
    do {
      k = (k + n - 1) % n;
    } while (kappa[order[k]] == 0);
    --kappa[order[k]];
  }
  return kappa;
}

struct Reconstruction {
  Image image;
  std::vector<std::uint8_t> observed;
};

// x_i = sum_t kappa_i(t) z_i(t) / sum_t kappa_i(t); unobserved pixels are 0
// and flagged in `observed`.
inline Reconstruction ml_reconstruct(
    int width, int height,
    const std::vector<std::vector<std::optional<double>>>& z,
    const std::vector<std::vector<std::int64_t>>& kappa) {
  if (z.size() != kappa.size()) {
    throw ParameterError("stage counts of observations and pulses differ");
  }
  Reconstruction r;
  r.image = Image(width, height);
  r.observed.assign(r.image.size(), 0);
  std::vector<double> weight(r.image.size(), 0.0);
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (z[t].size() != r.image.size() || kappa[t].size() != r.image.size()) {
      throw ParameterError("stage image size mismatch");
    }
    for (std::size_t i = 0; i < r.image.size(); ++i) {
      if (kappa[t][i] > 0 && z[t][i]) {
        r.image.data[i] += static_cast<double>(kappa[t][i]) * *z[t][i];
        weight[i] += static_cast<double>(kappa[t][i]);
      }
    }
  }
  for (std::size_t i = 0; i < r.image.size(); ++i) {
    if (weight[i] > 0.0) {
      r.image.data[i] /= weight[i];
      r.observed[i] = 1;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scenes.

struct RadarConfig {
  int width = 160;
  int height = 96;
  int targets = 13;
  double target_amplitude = 3.0;
  double target_spread = 0.5;   // per-target brightness, relative half-range
  double target_texture = 0.3;  // per-pixel variation inside a target
  double background = 1.0;
  double background_texture = 0.3;  // relative spread of the clutter level
  int template_width = 9;
  int template_height = 5;
  int template_cut = 1;
  std::uint64_t scene_seed = 7;

  double p0 = 0.001;
  int pulses_per_pixel = 2;
  int stages = 5;
  PolicyKind policy = PolicyKind::kOlfc;
  int realizations = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  int calibration_samples = 32;
  int scan_row = -1;  // profile row; negative picks the first target row

  Template make_template() const {
    return make_tank_template(template_width, template_height, template_cut);
  }

  void validate() const {
    if (width < 1 || height < 1) throw ParameterError("scene size must be > 0");
    if (pulses_per_pixel < 1) throw ParameterError("pulses per pixel must be >= 1");
    if (stages < 1) throw ParameterError("stages must be >= 1");
    if (realizations < 1) throw ParameterError("realizations must be >= 1");
    if (!(p0 > 0.0 && p0 < 1.0)) throw ParameterError("p0 must be in (0,1)");
    if (threads < 1) throw ParameterError("threads must be >= 1");
    if (calibration_samples < 1) {
      throw ParameterError("calibration samples must be >= 1");
    }
    if (policy == PolicyKind::kDs && stages < 2) {
      throw ParameterError("distilled sensing needs >= 2 stages");
    }
    if (policy == PolicyKind::kOracle || policy == PolicyKind::kRollout) {
      throw ParameterError("radar supports olfc, ds and nonadaptive");
    }
  }
};

struct Scene {
  Image image;
  std::vector<std::uint8_t> target_mask;
  std::vector<std::pair<int, int>> centers;
};

// Clutter of mean `background` with a fixed random texture, plus template
// shaped targets of varying brightness and texture at non-overlapping random
// positions.
inline Scene synthetic_scene(const RadarConfig& c) {
  const Template t = c.make_template();
  if (c.width < t.width + 2 || c.height < t.height + 2) {
    throw ParameterError("scene too small for the template");
  }
  Rng rng = make_stream(c.scene_seed, 0, StreamRole::kRadar);
  Scene s;
  s.image = Image(c.width, c.height);
  s.target_mask.assign(s.image.size(), 0);
  for (double& v : s.image.data) {
    v = c.background * (1.0 + c.background_texture * (2.0 * rng.uniform() - 1.0));
  }
  // Targets keep one blank pixel of clearance from each other and the edge.
  std::vector<std::uint8_t> blocked(s.image.size(), 0);
  const int max_tries = 100000;
  for (int placed = 0, tries = 0; placed < c.targets; ++tries) {
    if (tries >= max_tries) {
      throw ParameterError("cannot place all targets in the scene");
    }
    const int x = 1 + t.cx() +
                  static_cast<int>(rng.uniform() * (c.width - t.width - 1));
    const int y = 1 + t.cy() +
                  static_cast<int>(rng.uniform() * (c.height - t.height - 1));
    bool free = true;
    for (int v = -1; v <= t.height && free; ++v) {
      for (int u = -1; u <= t.width && free; ++u) {
        const int xx = x + u - t.cx(), yy = y + v - t.cy();
        if (!s.image.contains(xx, yy)) continue;
        free = !blocked[static_cast<std::size_t>(yy) * c.width + xx];
      }
    }
    if (!free) continue;
    const double level =
        c.target_amplitude * (1.0 + c.target_spread * (2.0 * rng.uniform() - 1.0));
    for (int v = 0; v < t.height; ++v) {
      for (int u = 0; u < t.width; ++u) {
        const int xx = x + u - t.cx(), yy = y + v - t.cy();
        const std::size_t i = static_cast<std::size_t>(yy) * c.width + xx;
        blocked[i] = 1;
        if (t.at(u, v)) {
          s.image.data[i] =
              level * (1.0 + c.target_texture * (2.0 * rng.uniform() - 1.0));
          s.target_mask[i] = 1;
        }
      }
    }
    s.centers.emplace_back(x, y);
    ++placed;
  }
  return s;
}

// Scene from an image without ground truth: pixels more than two standard
// deviations above the mean count as target pixels.
inline Scene scene_from_image(Image image) {
  Scene s;
  const double n = static_cast<double>(image.size());
  double mean = 0.0;
  for (double v : image.data) mean += v / n;
  double var = 0.0;
  for (double v : image.data) var += (v - mean) * (v - mean) / n;
  const double cut = mean + 2.0 * std::sqrt(var);
  s.target_mask.assign(image.size(), 0);
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (image.data[i] > cut) s.target_mask[i] = 1;
  }
  s.image = std::move(image);
  return s;
}

// ---------------------------------------------------------------------------
// Multistage imaging.

// Per-experiment quantities fixed before the Monte Carlo runs: priors from a
// pilot non-adaptive realization and, for OLFC, a calibration of the stage
// fractions at the pilot SNR.
struct RadarSetup {
  Template tmpl;
  RadarPriors pilot;
  double snr_db = 0.0;
  std::optional<CalibrationTable> table;
};

inline constexpr std::uint64_t kPilotRealization =
    std::numeric_limits<std::uint64_t>::max();

inline RadarSetup prepare_radar(const Scene& scene, const RadarConfig& c,
                                int max_stages) {
  RadarSetup setup;
  setup.tmpl = c.make_template();
  const std::size_t n = scene.image.size();
  const std::vector<std::int64_t> kappa(n, c.pulses_per_pixel);
  Rng rng = make_stream(c.seed, kPilotRealization, StreamRole::kRadar);
  const auto z = swerling_observe(scene.image, kappa, rng);
  const FilteredStage f = filter_stage(z, kappa, scene.image.width,
                                       scene.image.height, setup.tmpl);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = *f.value[i];
  setup.pilot = estimate_priors(values, c.p0, f.effort);
  if (!(setup.pilot.mu0 > 0.0) || !(setup.pilot.sigma_sq > 0.0)) {
    throw NumericalError("radar pilot: degenerate prior estimate");
  }
  setup.snr_db = sigma_sq_to_snr(setup.pilot.sigma_sq, setup.pilot.mu0);
  if (c.policy == PolicyKind::kOlfc && max_stages >= 2) {
    CalibrationPrior prior;
    prior.p0 = c.p0;
    prior.mu0 = setup.pilot.mu0;
    prior.sigma0_sq = std::max(setup.pilot.sigma0_sq,
                               1e-6 * setup.pilot.mu0 * setup.pilot.mu0);
    prior.n = n;
    prior.budget = static_cast<double>(n) * c.pulses_per_pixel;
    CalibrationOptions o;
    o.samples = c.calibration_samples;
    o.beta_step = 0.1;
    o.gamma_step = 0.1;
    o.refine_step = 0.05;
    o.refine_radius = 1;
    o.seed = c.seed;
    o.threads = c.threads;
    setup.table = calibrate_table(prior, 2.0, {setup.snr_db}, max_stages, 0, o);
  }
  return setup;
}

struct RadarRun {
  Reconstruction reconstruction;
  std::vector<std::vector<std::int64_t>> kappa;  // per stage
  std::int64_t total_pulses = 0;
};

inline RadarRun run_radar_realization(const Scene& scene,
                                      const RadarSetup& setup,
                                      const RadarConfig& c,
                                      std::uint64_t realization) {
  const int width = scene.image.width, height = scene.image.height;
  const std::size_t n = scene.image.size();
  const std::int64_t budget =
      static_cast<std::int64_t>(n) * c.pulses_per_pixel;
  const int stages = c.policy == PolicyKind::kNonadaptive ? 1 : c.stages;
  const Rng base = make_stream(c.seed, realization, StreamRole::kRadar);

  std::optional<OlfcSchedule> schedule;
  if (c.policy == PolicyKind::kOlfc && stages > 1) {
    if (!setup.table) throw DependencyError("radar OLFC needs a calibration");
    schedule = schedule_from_table(*setup.table, stages, setup.snr_db, 2.0);
  }
  std::vector<double> alpha;
  DsState ds;
  if (c.policy == PolicyKind::kDs) {
    alpha = ds_fractions(stages);
    ds = ds_init(n);
  }

  RadarRun run;
  std::vector<std::vector<std::optional<double>>> zs;
  std::int64_t remaining = budget;
  RadarPriors priors;
  bool have_priors = false;
  BeliefState state;
  SensingModel model;
  OlfcWorkspace ws;
  std::vector<double> lambda(n);
  for (int t = 0; t < stages; ++t) {
    std::int64_t stage_pulses = 0;
    if (t == stages - 1) {
      stage_pulses = remaining;
    } else if (c.policy == PolicyKind::kDs) {
      stage_pulses = std::llround(alpha[t] * static_cast<double>(budget));
    } else {
      stage_pulses =
          std::llround(schedule->beta[t] * static_cast<double>(remaining));
    }
    stage_pulses = std::clamp<std::int64_t>(stage_pulses, 0, remaining);

    // Effort in the filtered domain.
    if (c.policy == PolicyKind::kDs) {
      lambda = ds_allocate(ds, t, alpha, static_cast<double>(budget));
    } else if (!have_priors) {
      // A uniform prior gives a uniform allocation.
      std::fill(lambda.begin(), lambda.end(), 1.0);
    } else {
      state.budget = static_cast<double>(remaining);
      OlfcSchedule unit = *schedule;
      unit.beta[t] = 1.0;
      olfc_allocate_into(state, t, unit, model, LossSpec::power(2.0), lambda,
                         ws);
    }
    Rng tie = base.fork(2 * static_cast<std::uint64_t>(t) + 1);
    std::vector<std::int64_t> kappa =
        map_to_pulses(lambda, width, height, setup.tmpl, stage_pulses, &tie);
    Rng noise = base.fork(2 * static_cast<std::uint64_t>(t));
    auto z = swerling_observe(scene.image, kappa, noise);
    const FilteredStage f = filter_stage(z, kappa, width, height, setup.tmpl);

    if (!have_priors && stages > 1 && stage_pulses > 0) {
      // Priors from the first observed stage, fixed afterwards.
      std::vector<double> values, effort;
      for (std::size_t i = 0; i < n; ++i) {
        if (f.value[i]) {
          values.push_back(*f.value[i]);
          effort.push_back(f.effort[i]);
        }
      }
      priors = estimate_priors(values, c.p0, effort);
      PriorParams pp;
      pp.p0 = c.p0;
      pp.mu0 = priors.mu0;
      pp.sigma0_sq = std::max(priors.sigma0_sq,
                              1e-6 * priors.mu0 * priors.mu0 + 1e-300);
      pp.sigma_sq = priors.sigma_sq > 0.0 ? priors.sigma_sq : 1e-300;
      pp.budget = static_cast<double>(budget);
      pp.n = n;
      state = init_state(pp);
      model = SensingModel{pp.sigma_sq, EffortFunction::identity()};
      have_priors = true;
    }
    if (have_priors && t < stages - 1) {
      ObservationVector y(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!f.value[i] || !(f.effort[i] > 0.0)) continue;
        y[i] = *f.value[i] - priors.background_mean;
        detail::update_component(state.p[i], state.mu[i], state.var[i], *y[i],
                                 f.effort[i], model.sigma_sq);
      }
      if (c.policy == PolicyKind::kDs) ds_refine(ds, y);
    }
    remaining -= stage_pulses;
    run.total_pulses += std::accumulate(kappa.begin(), kappa.end(),
                                        std::int64_t{0});
    run.kappa.push_back(std::move(kappa));
    zs.push_back(std::move(z));
  }
  if (run.total_pulses != budget) {
    throw BudgetError("radar: pulse total " + std::to_string(run.total_pulses) +
                      " differs from the budget " + std::to_string(budget));
  }
  run.reconstruction = ml_reconstruct(width, height, zs, run.kappa);
  return run;
}

struct RadarSummary {
  Image mean;
  Image stddev;
  Image first;  // reconstruction of realization 0
  double target_std_db = 0.0;      // 10 log10 of the mean target variance
  double background_std_db = 0.0;
  double target_rmse = 0.0;
  int realizations = 0;
  bool pulses_conserved = true;
  int unobserved_target_pixels = 0;  // summed over realizations
};

// Runs all realizations; pixel statistics are merged in realization order.
inline RadarSummary run_radar(const Scene& scene, const RadarSetup& setup,
                              const RadarConfig& c) {
  c.validate();
  const std::size_t n = scene.image.size();
  const int count = c.realizations;
  std::vector<RadarRun> runs(count);
  const int threads = std::max(1, std::min(c.threads, count));
  const auto work = [&](int w) {
    for (int r = w; r < count; r += threads) {
      runs[r] = run_radar_realization(scene, setup, c,
                                      static_cast<std::uint64_t>(r));
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (std::thread& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  RadarSummary s;
  s.realizations = count;
  s.mean = Image(scene.image.width, scene.image.height);
  s.stddev = Image(scene.image.width, scene.image.height);
  s.first = runs[0].reconstruction.image;
  const std::int64_t budget = static_cast<std::int64_t>(n) * c.pulses_per_pixel;
  std::vector<double> sq(n, 0.0);
  double err_sq = 0.0;
  for (const RadarRun& run : runs) {
    if (run.total_pulses != budget) s.pulses_conserved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = run.reconstruction.image.data[i];
      s.mean.data[i] += v;
      sq[i] += v * v;
      if (scene.target_mask[i]) {
        err_sq += (v - scene.image.data[i]) * (v - scene.image.data[i]);
        if (!run.reconstruction.observed[i]) ++s.unobserved_target_pixels;
      }
    }
  }
  double target_var = 0.0, background_var = 0.0;
  std::size_t targets = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s.mean.data[i] /= count;
    const double var =
        count > 1 ? std::max(0.0, (sq[i] - count * s.mean.data[i] *
                                               s.mean.data[i]) /
                                      (count - 1))
                  : 0.0;
    s.stddev.data[i] = std::sqrt(var);
    if (scene.target_mask[i]) {
      target_var += var;
      ++targets;
    } else {
      background_var += var;
    }
  }
  const std::size_t background = n - targets;
  if (targets > 0) {
    s.target_std_db = 10.0 * std::log10(target_var / targets);
    s.target_rmse = std::sqrt(err_sq / (static_cast<double>(targets) * count));
  }
  if (background > 0) {
    s.background_std_db = 10.0 * std::log10(background_var / background);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Reports.

// Profile row for the scan line: the explicit row, else the first target's
// row, else the row holding the most target pixels.
inline int scan_row_for(const Scene& scene, int requested) {
  const int h = scene.image.height, w = scene.image.width;
  if (requested >= 0) {
    if (requested >= h) throw ParameterError("scan row outside the scene");
    return requested;
  }
  if (!scene.centers.empty()) return scene.centers.front().second;
  int best = 0, best_count = -1;
  for (int y = 0; y < h; ++y) {
    int count = 0;
    for (int x = 0; x < w; ++x) count += scene.target_mask[y * w + x];
    if (count > best_count) {
      best = y;
      best_count = count;
    }
  }
  return best;
}

inline void write_profile_csv(std::ostream& out, const Scene& scene,
                              const RadarSummary& s, int row) {
  const int w = scene.image.width;
  out << "x,y,truth,mean,std,target\n";
  char buf[160];
  for (int x = 0; x < w; ++x) {
    const std::size_t i = static_cast<std::size_t>(row) * w + x;
    std::snprintf(buf, sizeof buf, "%d,%d,%.6e,%.6e,%.6e,%d\n", x, row,
                  scene.image.data[i], s.mean.data[i], s.stddev.data[i],
                  scene.target_mask[i]);
    out << buf;
  }
}

inline void write_summary_csv(std::ostream& out, const RadarConfig& c,
                              const RadarSetup& setup, const RadarSummary& s) {
  out << "policy,T,pulses_per_pixel,realizations,snr_db_est,target_std_db,"
         "background_std_db,target_rmse,pulses_conserved,"
         "unobserved_target_pixels\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%.6f,%.6f,%.6f,%.6e,%d,%d\n",
                policy_name(c.policy).c_str(), c.stages, c.pulses_per_pixel,
                s.realizations, setup.snr_db, s.target_std_db,
                s.background_std_db, s.target_rmse, s.pulses_conserved ? 1 : 0,
                s.unobserved_target_pixels);
  out << buf;
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_RADAR_HPP_
