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

#ifndef SPARSE_SENSE_CALIBRATION_HPP_
#define SPARSE_SENSE_CALIBRATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "sparse_sense/belief.hpp"
#include "sparse_sense/common.hpp"
#include "sparse_sense/loss.hpp"
#include "sparse_sense/policies.hpp"
#include "sparse_sense/rng.hpp"

namespace sparse_sense {

// Signal-domain SNR in dB to noise variance: sigma^2 = mu0^2 10^(-snr/10).
inline double snr_to_sigma_sq(double snr_db, double mu0) {
  if (mu0 == 0.0) throw ParameterError("SNR is undefined for mu0 = 0");
  return mu0 * mu0 * std::pow(10.0, -snr_db / 10.0);
}

inline double sigma_sq_to_snr(double sigma_sq, double mu0) {
  if (mu0 == 0.0) throw ParameterError("SNR is undefined for mu0 = 0");
  if (!(sigma_sq > 0.0)) throw ParameterError("noise variance must be > 0");
  return 10.0 * std::log10(mu0 * mu0 / sigma_sq);
}

// alpha(t) = beta(t) prod_{tau < t} (1 - beta(tau)): the fraction of the
// total budget spent at each stage.
inline std::vector<double> beta_to_alpha(std::span<const double> beta) {
  std::vector<double> alpha(beta.size());
  double remaining = 1.0;
  for (std::size_t t = 0; t < beta.size(); ++t) {
    alpha[t] = beta[t] * remaining;
    remaining *= 1.0 - beta[t];
  }
  return alpha;
}

struct CalibrationEntry {
  int stages = 1;
  double snr_db = 0.0;
  double beta_raw = 1.0;
  double gamma_raw = 1.0;
  double beta_fit = 1.0;
  double gamma_fit = 1.0;
};

// First-stage parameters beta^(T)(0), gamma^(T)(0) on an SNR grid, raw and
// smoothed. Rows are kept sorted by (T, snr).
class CalibrationTable {
 public:
  static constexpr const char* kHeader = "# sparse-sense-calib v1";

  std::map<std::string, std::string> metadata;

  const std::vector<CalibrationEntry>& entries() const { return entries_; }

  void set(const CalibrationEntry& e) {
    for (CalibrationEntry& existing : entries_) {
      if (existing.stages == e.stages && existing.snr_db == e.snr_db) {
        existing = e;
        return;
      }
    }
    entries_.push_back(e);
    std::sort(entries_.begin(), entries_.end(),
              [](const CalibrationEntry& a, const CalibrationEntry& b) {
                return a.stages != b.stages ? a.stages < b.stages
                                            : a.snr_db < b.snr_db;
              });
  }

  std::vector<CalibrationEntry*> mutable_rows(int stages) {
    std::vector<CalibrationEntry*> out;
    for (CalibrationEntry& e : entries_) {
      if (e.stages == stages) out.push_back(&e);
    }
    return out;
  }

  std::vector<CalibrationEntry> rows(int stages) const {
    std::vector<CalibrationEntry> out;
    for (const CalibrationEntry& e : entries_) {
      if (e.stages == stages) out.push_back(e);
    }
    return out;
  }

  bool has(int stages) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const CalibrationEntry& e) {
                         return e.stages == stages;
                       });
  }

  int max_stages() const {
    int m = 0;
    for (const CalibrationEntry& e : entries_) m = std::max(m, e.stages);
    return m;
  }

  double final_gamma() const {
    const auto it = metadata.find("q");
    const double q = it == metadata.end() ? 2.0 : std::stod(it->second);
    return 2.0 / (q + 2.0);
  }

  // Smoothed first-stage fraction, interpolated linearly in SNR and clamped
  // to the grid ends.
  double beta0(int stages, double snr_db) const {
    if (stages == 1) return 1.0;
    return interpolate(stages, snr_db, [](const CalibrationEntry& e) {
      return e.beta_fit;
    });
  }

  double gamma0(int stages, double snr_db) const {
    if (stages == 1) return final_gamma();
    return interpolate(stages, snr_db, [](const CalibrationEntry& e) {
      return e.gamma_fit;
    });
  }

  void write(std::ostream& out) const {
    out << kHeader << '\n';
    for (const auto& [key, value] : metadata) {
      out << "# " << key << '=' << value << '\n';
    }
    out << std::setprecision(10);
    for (const CalibrationEntry& e : entries_) {
      out << e.stages << ' ' << e.snr_db << ' ' << e.beta_raw << ' '
          << e.gamma_raw << ' ' << e.beta_fit << ' ' << e.gamma_fit << '\n';
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write calibration table: " + path);
    write(out);
    if (!out) throw std::runtime_error("write failed: " + path);
  }

  static CalibrationTable parse(std::istream& in) {
    CalibrationTable table;
    std::string line;
    if (!std::getline(in, line) || trim(line) != kHeader) {
      throw FormatError("calibration table must start with '" +
                        std::string(kHeader) + "'");
    }
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string text = trim(line);
      if (text.empty()) continue;
      if (text[0] == '#') {
        const std::string body = trim(text.substr(1));
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
          table.metadata[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
        }
        continue;
      }
      std::istringstream row(text);
      CalibrationEntry e;
      std::string extra;
      if (!(row >> e.stages >> e.snr_db >> e.beta_raw >> e.gamma_raw >>
            e.beta_fit >> e.gamma_fit) ||
          (row >> extra)) {
        throw FormatError("calibration table line " + std::to_string(line_no) +
                          ": expected 'T snr_db beta0_raw gamma0_raw "
                          "beta0_fit gamma0_fit'");
      }
      if (e.stages < 1) {
        throw FormatError("calibration table line " + std::to_string(line_no) +
                          ": stage count must be >= 1");
      }
      table.set(e);
    }
    return table;
  }

  static CalibrationTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read calibration table: " + path);
    return parse(in);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  double interpolate(
      int stages, double snr_db,
      const std::function<double(const CalibrationEntry&)>& field) const {
    const std::vector<CalibrationEntry> r = rows(stages);
    if (r.empty()) {
      throw DependencyError("calibration table has no entries for T = " +
                            std::to_string(stages));
    }
    if (snr_db <= r.front().snr_db) return field(r.front());
    if (snr_db >= r.back().snr_db) return field(r.back());
    for (std::size_t k = 1; k < r.size(); ++k) {
      if (snr_db <= r[k].snr_db) {
        const double w = (snr_db - r[k - 1].snr_db) /
                         (r[k].snr_db - r[k - 1].snr_db);
        return (1.0 - w) * field(r[k - 1]) + w * field(r[k]);
      }
    }
    return field(r.back());
  }

  std::vector<CalibrationEntry> entries_;
};

// T-stage schedule at a given SNR from a calibrated table.
inline OlfcSchedule schedule_from_table(const CalibrationTable& table,
                                        int stages, double snr_db, double q) {
  if (stages < 1) throw ParameterError("stage count must be >= 1");
  for (int k = 2; k <= stages; ++k) {
    if (!table.has(k)) {
      throw DependencyError("calibration table lacks T = " + std::to_string(k));
    }
  }
  std::vector<double> lower(static_cast<std::size_t>(stages), 1.0);
  for (int k = 2; k < stages; ++k) lower[k] = table.beta0(k, snr_db);
  const double final_gamma = 2.0 / (q + 2.0);
  const double gamma0 =
      std::clamp(table.gamma0(stages, snr_db), 1e-3, final_gamma);
  return make_schedule(table.beta0(stages, snr_db), gamma0, q, lower, stages);
}

// ---------------------------------------------------------------------------
// Recursive calibration.

struct CalibrationPrior {
  double p0 = 0.01;
  double mu0 = 1.0;
  double sigma0_sq = 1.0 / 16.0;
  std::size_t n = 1000;
  double budget = 1000.0;  // total effort
};

struct CalibrationOptions {
  int samples = 2000;
  double beta_step = 0.05;
  double gamma_step = 0.05;
  double refine_step = 0.01;
  int refine_radius = 4;  // refinement cells on each side of the best
  bool fixed_gamma = false;  // search beta only, gamma = 2/(q+2)
  std::uint64_t seed = 1;
  int threads = 1;
};

struct CellResult {
  double beta = 0.0;
  double gamma = 0.0;
  double cost = 0.0;
  double stderr_ = 0.0;
};

struct StageCalibration {
  CellResult best;
  // Cost of the shorter policy (beta = 0 nesting cell) where it exists.
  std::optional<CellResult> nested;
  std::vector<CellResult> cells;
};

namespace detail {

// Evaluates many (beta, gamma) cells of the T-stage policy on one shared set
// of simulated truths and noise streams.
class CellEvaluator {
 public:
  CellEvaluator(const CalibrationPrior& prior, double sigma_sq, double q,
                std::vector<double> lower_beta0, int stages,
                const CalibrationOptions& options, std::uint64_t stream_tag)
      : prior_(prior),
        model_{sigma_sq, EffortFunction::identity()},
        loss_(LossSpec::power(q)),
        q_(q),
        lower_(std::move(lower_beta0)),
        stages_(stages),
        options_(options),
        base_(Rng(options.seed).fork(stream_tag)) {
    PriorParams pp;
    pp.p0 = prior.p0;
    pp.mu0 = prior.mu0;
    pp.sigma0_sq = prior.sigma0_sq;
    pp.sigma_sq = sigma_sq;
    pp.budget = prior.budget;
    pp.n = prior.n;
    start_ = init_state(pp);
  }

  // Mean and standard error of the expected final loss over the samples.
  CellResult evaluate(double beta, double gamma) const {
    CellResult r;
    r.beta = beta;
    r.gamma = gamma;
    const OlfcSchedule schedule =
        make_schedule(beta, gamma, q_, lower_, stages_);
    SimulationWorkspace ws;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < options_.samples; ++k) {
      const double c = sample_cost(schedule, k, ws);
      sum += c;
      sq += c * c;
    }
    const double n = options_.samples;
    r.cost = sum / n;
    r.stderr_ = n > 1 ? std::sqrt(std::max(0.0, sq / n - r.cost * r.cost) /
                                  (n - 1))
                      : 0.0;
    return r;
  }

  // Evaluates cells in parallel; results are ordered as the input.
  std::vector<CellResult> evaluate_all(
      const std::vector<std::pair<double, double>>& cells) const {
    std::vector<CellResult> out(cells.size());
    const int threads = std::max(1, std::min<int>(options_.threads,
                                                  static_cast<int>(cells.size())));
    if (threads == 1) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        out[c] = evaluate(cells[c].first, cells[c].second);
      }
      return out;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < cells.size(); c += threads) {
          out[c] = evaluate(cells[c].first, cells[c].second);
        }
      });
    }
    for (std::thread& th : pool) th.join();
    return out;
  }

  // Exact cost of spending everything at stage 0 (beta = 1).
  double single_stage_cost() const {
    const std::vector<double> lambda(start_.size(),
                                     prior_.budget / static_cast<double>(
                                                         start_.size()));
    return terminal_cost(start_, lambda, model_, loss_);
  }

 private:
  double sample_cost(const OlfcSchedule& schedule, int k,
                     SimulationWorkspace& ws) const {
    const Rng sample = base_.fork(static_cast<std::uint64_t>(k));
    Rng truth_rng = sample.fork(0);
    sample_truth(start_, truth_rng, ws.truth);
    return simulate_schedule(start_, 0, schedule, ws.truth, model_, loss_,
                             sample.fork(1), ws);
  }

  CalibrationPrior prior_;
  SensingModel model_;
  LossSpec loss_;
  double q_;
  std::vector<double> lower_;
  int stages_;
  CalibrationOptions options_;
  Rng base_;
  BeliefState start_;
};

inline std::vector<double> axis(double lo, double hi, double step) {
  std::vector<double> v;
  const int count = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int k = 0; k <= count; ++k) v.push_back(lo + k * step);
  if (hi - v.back() > 1e-9) v.push_back(hi);
  return v;
}

}  // namespace detail

// Searches (beta, gamma) for the T-stage policy at one SNR. `lower_beta0[k]`
// and `lower_gamma0` come from the smoothed (T-1)- and shorter tables.
inline StageCalibration calibrate_cell(int stages,
                                       const CalibrationPrior& prior,
                                       double snr_db, double q,
                                       const std::vector<double>& lower_beta0,
                                       double lower_gamma0,
                                       const CalibrationOptions& options) {
  if (options.samples < 1) throw ParameterError("samples must be >= 1");
  const double final_gamma = 2.0 / (q + 2.0);
  StageCalibration out;
  if (stages == 1) {
    out.best = {1.0, final_gamma, 0.0, 0.0};
    return out;
  }
  const double sigma_sq = snr_to_sigma_sq(snr_db, prior.mu0);
  // The stream tag depends only on the SNR so every T shares the same truths.
  const std::uint64_t tag =
      static_cast<std::uint64_t>(std::llround((snr_db + 1000.0) * 1000.0));
  const detail::CellEvaluator eval(prior, sigma_sq, q, lower_beta0, stages,
                                   options, tag);
  // With a uniform prior the first stage is uniform whatever gamma is, so
  // gamma only matters when at least two stages follow.
  const bool search_gamma = !options.fixed_gamma && stages > 2;

  std::vector<std::pair<double, double>> cells;
  const std::vector<double> betas = detail::axis(0.0, 1.0, options.beta_step);
  const std::vector<double> gammas =
      search_gamma ? detail::axis(options.gamma_step, final_gamma,
                                  options.gamma_step)
                   : std::vector<double>{final_gamma};
  for (double b : betas) {
    if (b >= 1.0) continue;
    for (double g : gammas) cells.emplace_back(b, g);
  }
  // Nesting cell: beta = 0 with the exponent that makes stages 1.. coincide
  // with the (T-1)-stage policy.
  std::optional<std::size_t> nest_index;
  double nest_gamma = final_gamma;
  if (stages == 2) {
    nest_gamma = final_gamma;
  } else if (!options.fixed_gamma) {
    nest_gamma = ((stages - 1) * lower_gamma0 - final_gamma) / (stages - 2);
  }
  if (nest_gamma > 0.0 && nest_gamma <= final_gamma) {
    nest_index = cells.size();
    cells.emplace_back(0.0, nest_gamma);
  }
  std::vector<CellResult> results = eval.evaluate_all(cells);
  const double exact_one = eval.single_stage_cost();
  for (double g : gammas) results.push_back({1.0, g, exact_one, 0.0});
  if (nest_index) out.nested = results[*nest_index];

  const auto argmin = [](const std::vector<CellResult>& r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.size(); ++k) {
      if (r[k].cost < r[best].cost) best = k;
    }
    return r[best];
  };
  const CellResult coarse = argmin(results);

  // Local refinement around the coarse optimum.
  std::vector<std::pair<double, double>> refine;
  const int rad = options.refine_radius;
  for (int i = -rad; i <= rad; ++i) {
    const double b = coarse.beta + i * options.refine_step;
    if (b < -1e-12 || b >= 1.0 - 1e-12) continue;
    const int grad = search_gamma ? rad : 0;
    for (int j = -grad; j <= grad; ++j) {
      const double g = search_gamma ? coarse.gamma + j * options.refine_step
                                    : coarse.gamma;
      if (g <= 1e-12 || g > final_gamma + 1e-12) continue;
      if (i == 0 && j == 0) continue;
      refine.emplace_back(std::max(0.0, b), std::min(g, final_gamma));
    }
  }
  std::vector<CellResult> refined = eval.evaluate_all(refine);
  results.insert(results.end(), refined.begin(), refined.end());
  out.best = argmin(results);
  out.cells = std::move(results);
  return out;
}

// Least-squares polynomial of `degree` through (x, y) evaluated at x.
inline std::vector<double> poly_fit_values(const std::vector<double>& x,
                                           const std::vector<double>& y,
                                           int degree) {
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  if (n < degree + 1) {
    throw ParameterError("polynomial fit of degree " + std::to_string(degree) +
                         " needs at least " + std::to_string(degree + 1) +
                         " points");
  }
  const double lo = *std::min_element(x.begin(), x.end());
  const double hi = *std::max_element(x.begin(), x.end());
  const double mid = 0.5 * (lo + hi);
  const double half = hi > lo ? 0.5 * (hi - lo) : 1.0;
  Eigen::MatrixXd a(n, degree + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double u = (x[r] - mid) / half;
    double power = 1.0;
    for (int k = 0; k <= degree; ++k) {
      a(r, k) = power;
      power *= u;
    }
    b(r) = y[r];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd fit = a * coef;
  return std::vector<double>(fit.data(), fit.data() + n);
}

// Smooths beta^(T)(0) and gamma^(T)(0) across SNR for every T, keeping
// beta^(T)(0) <= beta^(T-1)(0) on the grid: points whose fit rises above
// the bound are pulled down to it and the fit is repeated; a final pointwise
// clip removes what the refits leave.
inline void fit_stage(CalibrationTable& table, int stages, int degree,
                      double final_gamma) {
  std::vector<CalibrationEntry*> rows = table.mutable_rows(stages);
  if (rows.empty()) return;
  if (stages == 1) {
    for (CalibrationEntry* e : rows) {
      e->beta_fit = 1.0;
      e->gamma_fit = final_gamma;
    }
    return;
  }
  std::vector<double> x, beta, gamma, bound;
  for (const CalibrationEntry* e : rows) {
    x.push_back(e->snr_db);
    beta.push_back(e->beta_raw);
    gamma.push_back(e->gamma_raw);
    bound.push_back(stages == 2 ? 1.0 : table.beta0(stages - 1, e->snr_db));
  }
  std::vector<double> target = beta;
  std::vector<double> fit = poly_fit_values(x, target, degree);
  for (int pass = 0; pass < 50; ++pass) {
    bool changed = false;
    for (std::size_t k = 0; k < fit.size(); ++k) {
      if (fit[k] > bound[k] + 1e-12) {
        // Lower the target by the overshoot so the refit lands at the bound.
        target[k] -= fit[k] - bound[k];
        changed = true;
      }
    }
    if (!changed) break;
    fit = poly_fit_values(x, target, degree);
  }
  const std::vector<double> gamma_fit = poly_fit_values(x, gamma, degree);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k]->beta_fit = std::clamp(std::min(fit[k], bound[k]), 0.0, 1.0);
    rows[k]->gamma_fit = std::clamp(gamma_fit[k], 1e-3, final_gamma);
  }
}

inline void fit_parameter_curves(CalibrationTable& table, int degree) {
  const double final_gamma = table.final_gamma();
  for (int stages = 1; stages <= table.max_stages(); ++stages) {
    fit_stage(table, stages, degree, final_gamma);
  }
}

struct CalibrationProgress {
  int stages = 0;
  double snr_db = 0.0;
  StageCalibration result;
};

// Builds the table for T = 1..max_stages over `snr_grid`, calibrating each T
// against the smoothed shorter policies.
inline CalibrationTable calibrate_table(
    const CalibrationPrior& prior, double q, const std::vector<double>& snr_grid,
    int max_stages, int degree, const CalibrationOptions& options,
    const std::function<void(const CalibrationProgress&)>& progress = {}) {
  if (snr_grid.empty()) throw ParameterError("SNR grid must be non-empty");
  if (max_stages < 1) throw ParameterError("max stages must be >= 1");
  if (static_cast<int>(snr_grid.size()) < degree + 1) {
    throw ParameterError("SNR grid has fewer points than degree + 1");
  }
  const double final_gamma = 2.0 / (q + 2.0);
  CalibrationTable table;
  std::ostringstream num;
  const auto fmt = [&](double v) {
    num.str("");
    num << std::setprecision(10) << v;
    return num.str();
  };
  table.metadata["q"] = fmt(q);
  table.metadata["p0"] = fmt(prior.p0);
  table.metadata["mu0"] = fmt(prior.mu0);
  table.metadata["sigma0_sq"] = fmt(prior.sigma0_sq);
  table.metadata["n"] = std::to_string(prior.n);
  table.metadata["budget"] = fmt(prior.budget);
  table.metadata["samples"] = std::to_string(options.samples);
  table.metadata["degree"] = std::to_string(degree);
  table.metadata["fixed_gamma"] = options.fixed_gamma ? "1" : "0";
  table.metadata["seed"] = std::to_string(options.seed);
  for (double snr : snr_grid) {
    table.set({1, snr, 1.0, final_gamma, 1.0, final_gamma});
  }
  for (int stages = 2; stages <= max_stages; ++stages) {
    for (double snr : snr_grid) {
      std::vector<double> lower(static_cast<std::size_t>(stages), 1.0);
      for (int k = 2; k < stages; ++k) lower[k] = table.beta0(k, snr);
      const double lower_gamma = table.gamma0(stages - 1, snr);
      CalibrationProgress p;
      p.stages = stages;
      p.snr_db = snr;
      p.result = calibrate_cell(stages, prior, snr, q, lower, lower_gamma,
                                options);
      CalibrationEntry e;
      e.stages = stages;
      e.snr_db = snr;
      e.beta_raw = p.result.best.beta;
      e.gamma_raw = p.result.best.gamma;
      table.set(e);
      if (progress) progress(p);
    }
    fit_stage(table, stages, degree, final_gamma);
  }
  return table;
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_CALIBRATION_HPP_
