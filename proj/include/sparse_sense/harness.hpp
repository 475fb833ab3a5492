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

#ifndef SPARSE_SENSE_HARNESS_HPP_
#define SPARSE_SENSE_HARNESS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sparse_sense/belief.hpp"
#include "sparse_sense/calibration.hpp"
#include "sparse_sense/common.hpp"
#include "sparse_sense/loss.hpp"
#include "sparse_sense/policies.hpp"
#include "sparse_sense/rng.hpp"

#ifndef SPARSE_SENSE_DATA_DIR
#define SPARSE_SENSE_DATA_DIR "data"
#endif

namespace sparse_sense {

inline std::string default_calibration_path() {
  return std::string(SPARSE_SENSE_DATA_DIR) + "/calibration_mse.txt";
}

// ---------------------------------------------------------------------------
// Configuration.

struct SimConfig {
  std::size_t n = 1000;
  double p0 = 0.01;
  double mu0 = 1.0;
  double sigma0_sq = 1.0 / 16.0;
  std::optional<double> budget;  // defaults to n

  // Policy-side prior for mismatch runs; unset means "same as the truth".
  std::optional<double> assumed_p0;
  std::optional<double> assumed_mu0;
  std::optional<double> assumed_sigma0_sq;
  // The policy believes the SNR is this many dB higher than it is.
  double assumed_snr_offset_db = 0.0;

  std::vector<int> stages = {2, 10};
  std::vector<double> snr_db = {10.0};
  std::vector<PolicyKind> policies = {PolicyKind::kNonadaptive,
                                      PolicyKind::kOlfc};
  int trials = 500;
  std::vector<LossSpec> losses = {LossSpec::power(2.0)};
  std::uint64_t seed = 1;
  EffortFunction h = EffortFunction::identity();
  std::string output;
  std::string calibration;  // empty: shipped table
  LossSpec olfc_loss = LossSpec::power(2.0);
  bool fixed_gamma = false;  // OLFC exponent held at 2/(q+2) in every stage
  double ds_ratio = 0.75;
  int rollout_samples = 200;
  int threads = 1;

  double total_budget() const {
    return budget.value_or(static_cast<double>(n));
  }

  void validate() const {
    if (n < 1) throw ParameterError("n must be >= 1");
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw ParameterError("p0 must be in [0,1]");
    if (!(sigma0_sq >= 0.0)) throw ParameterError("sigma0_sq must be >= 0");
    if (mu0 == 0.0) throw ParameterError("mu0 must be non-zero to define SNR");
    if (!(total_budget() > 0.0)) throw ParameterError("budget must be > 0");
    if (trials < 1) throw ParameterError("trials must be >= 1");
    if (snr_db.empty()) throw ParameterError("snr_db list must be non-empty");
    if (stages.empty()) throw ParameterError("stages list must be non-empty");
    for (int t : stages) {
      if (t < 1) throw ParameterError("stage counts must be >= 1");
    }
    if (policies.empty()) throw ParameterError("policies list must be non-empty");
    if (losses.empty()) throw ParameterError("losses list must be non-empty");
    if (threads < 1) throw ParameterError("threads must be >= 1");
    if (rollout_samples < 1) throw ParameterError("rollout_samples must be >= 1");
    if (!(ds_ratio > 0.0)) throw ParameterError("ds_ratio must be > 0");
    if (assumed_p0 && !(*assumed_p0 >= 0.0 && *assumed_p0 <= 1.0)) {
      throw ParameterError("assumed_p0 must be in [0,1]");
    }
    if (assumed_sigma0_sq && !(*assumed_sigma0_sq >= 0.0)) {
      throw ParameterError("assumed_sigma0_sq must be >= 0");
    }
    if (assumed_mu0 && *assumed_mu0 == 0.0) {
      throw ParameterError("assumed_mu0 must be non-zero");
    }
  }
};

namespace detail {

inline std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ParameterError("config key '" + key + "': not a number: " + v);
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ParameterError("config key '" + key + "': not an integer: " + v);
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long d = std::stoull(v, &used);
    if (used != v.size() || v.find('-') != std::string::npos) {
      throw std::invalid_argument(v);
    }
    return d;
  } catch (const std::logic_error&) {
    throw ParameterError("config key '" + key + "': not a u64: " + v);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ParameterError("config key '" + key + "': not a boolean: " + v);
}

}  // namespace detail

// "a:b:step" or a comma list.
inline std::vector<double> parse_snr_list(const std::string& text) {
  const std::string v = detail::trim_copy(text);
  if (std::count(v.begin(), v.end(), ':') == 2) {
    const auto c1 = v.find(':');
    const auto c2 = v.find(':', c1 + 1);
    const double a = detail::parse_double("snr_db", v.substr(0, c1));
    const double b = detail::parse_double("snr_db", v.substr(c1 + 1, c2 - c1 - 1));
    const double step = detail::parse_double("snr_db", v.substr(c2 + 1));
    if (!(step > 0.0) || b < a) {
      throw ParameterError("snr range must be a:b:step with step > 0, b >= a");
    }
    std::vector<double> out;
    const long count = std::lround(std::floor((b - a) / step + 1e-9));
    for (long k = 0; k <= count; ++k) out.push_back(a + k * step);
    return out;
  }
  std::vector<double> out;
  for (const std::string& item : detail::split_list(v)) {
    out.push_back(detail::parse_double("snr_db", item));
  }
  if (out.empty()) throw ParameterError("snr_db list must be non-empty");
  return out;
}

inline std::vector<int> parse_stage_list(const std::string& text) {
  std::vector<int> out;
  for (const std::string& item : detail::split_list(text)) {
    out.push_back(static_cast<int>(detail::parse_int("stages", item)));
  }
  if (out.empty()) throw ParameterError("stages list must be non-empty");
  return out;
}

inline EffortFunction parse_effort(const std::string& text) {
  if (text == "identity") return EffortFunction::identity();
  if (text.rfind("power:", 0) == 0) {
    return EffortFunction::power(detail::parse_double("effort", text.substr(6)));
  }
  throw ParameterError("effort must be 'identity' or 'power:<c>': " + text);
}

// Applies one key=value pair. Unknown keys are errors.
inline void apply_config_value(SimConfig& c, const std::string& key,
                               const std::string& value) {
  using namespace detail;
  if (key == "n") {
    const long long v = parse_int(key, value);
    if (v < 1) throw ParameterError("n must be >= 1");
    c.n = static_cast<std::size_t>(v);
  } else if (key == "p0") {
    c.p0 = parse_double(key, value);
  } else if (key == "mu0") {
    c.mu0 = parse_double(key, value);
  } else if (key == "sigma0_sq") {
    c.sigma0_sq = parse_double(key, value);
  } else if (key == "budget") {
    c.budget = parse_double(key, value);
  } else if (key == "assumed_p0") {
    c.assumed_p0 = parse_double(key, value);
  } else if (key == "assumed_mu0") {
    c.assumed_mu0 = parse_double(key, value);
  } else if (key == "assumed_sigma0_sq") {
    c.assumed_sigma0_sq = parse_double(key, value);
  } else if (key == "assumed_snr_offset_db") {
    c.assumed_snr_offset_db = parse_double(key, value);
  } else if (key == "stages") {
    c.stages = parse_stage_list(value);
  } else if (key == "snr_db") {
    c.snr_db = parse_snr_list(value);
  } else if (key == "policies") {
    c.policies.clear();
    for (const std::string& item : split_list(value)) {
      c.policies.push_back(parse_policy(item));
    }
  } else if (key == "trials") {
    c.trials = static_cast<int>(parse_int(key, value));
  } else if (key == "losses") {
    c.losses.clear();
    for (const std::string& item : split_list(value)) {
      c.losses.push_back(LossSpec::parse(item));
    }
  } else if (key == "seed") {
    c.seed = parse_u64(key, value);
  } else if (key == "effort") {
    c.h = parse_effort(value);
  } else if (key == "output") {
    c.output = value;
  } else if (key == "calibration") {
    c.calibration = value;
  } else if (key == "olfc_loss") {
    c.olfc_loss = LossSpec::parse(value);
  } else if (key == "fixed_gamma") {
    c.fixed_gamma = parse_bool(key, value);
  } else if (key == "ds_ratio") {
    c.ds_ratio = parse_double(key, value);
  } else if (key == "rollout_samples") {
    c.rollout_samples = static_cast<int>(parse_int(key, value));
  } else if (key == "threads") {
    c.threads = static_cast<int>(parse_int(key, value));
  } else {
    throw ParameterError("unknown config key: " + key);
  }
}

// Flat key=value text; '#' starts a comment.
inline SimConfig parse_config(std::istream& in, SimConfig base = {}) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    apply_config_value(base, detail::trim_copy(line.substr(0, eq)),
                       detail::trim_copy(line.substr(eq + 1)));
  }
  return base;
}

inline SimConfig load_config(const std::string& path, SimConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  return parse_config(in, std::move(base));
}

// ---------------------------------------------------------------------------
// Signal and observation channel.

struct Signal {
  std::vector<std::uint8_t> support;
  std::vector<double> theta;
};

inline Signal generate_signal(double p0, double mu0, double sigma0_sq,
                              std::size_t n, Rng& rng) {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw ParameterError("p0 must be in [0,1]");
  if (!(sigma0_sq >= 0.0)) throw ParameterError("sigma0_sq must be >= 0");
  Signal s;
  s.support.resize(n);
  s.theta.resize(n);
  const double sd = std::sqrt(sigma0_sq);
  for (std::size_t i = 0; i < n; ++i) {
    // Draw both numbers for every component so streams stay aligned.
    const double u = rng.uniform();
    const double z = rng.normal();
    s.support[i] = u < p0 ? 1 : 0;
    s.theta[i] = s.support[i] ? mu0 + sd * z : 0.0;
  }
  return s;
}

// y_i = theta_i + n_i / sqrt(h(lambda_i)), n_i ~ N(0, sigma^2); absent where
// the effort is below the observation threshold. One normal is consumed per
// component regardless.
inline ObservationVector observe(std::span<const double> theta,
                                 std::span<const double> lambda,
                                 const EffortFunction& h, double sigma_sq,
                                 Rng& rng) {
  if (theta.size() != lambda.size()) {
    throw ParameterError("observe: size mismatch");
  }
  ObservationVector y(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!(lambda[i] >= 0.0)) throw ParameterError("effort must be >= 0");
    const double z = rng.normal();
    const double hv = h(lambda[i]);
    if (lambda[i] > kObsEpsilon && hv > 0.0) {
      y[i] = theta[i] + std::sqrt(sigma_sq / hv) * z;
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Trials.

struct TrialMetrics {
  std::vector<double> losses;  // one per configured loss
  std::size_t support_size = 0;
  std::vector<double> stage_usage;
  std::uint64_t trial = 0;
};

// Everything a trial needs besides the trial index.
struct ExperimentContext {
  SimConfig config;
  // Required for olfc and rollout.
  std::optional<CalibrationTable> table;

  PriorParams policy_prior(double snr_db) const {
    PriorParams pp;
    pp.p0 = config.assumed_p0.value_or(config.p0);
    pp.mu0 = config.assumed_mu0.value_or(config.mu0);
    pp.sigma0_sq = config.assumed_sigma0_sq.value_or(config.sigma0_sq);
    pp.sigma_sq = snr_to_sigma_sq(snr_db, config.mu0) *
                  std::pow(10.0, -config.assumed_snr_offset_db / 10.0);
    pp.budget = config.total_budget();
    pp.n = config.n;
    return pp;
  }

  // SNR as the policy sees it, used for calibration lookups.
  double policy_snr(double snr_db) const {
    const PriorParams pp = policy_prior(snr_db);
    return sigma_sq_to_snr(pp.sigma_sq, pp.mu0);
  }

  OlfcSchedule schedule(int stages, double snr_db, bool fixed_gamma) const {
    if (!table) {
      throw DependencyError("olfc and rollout policies need a calibration "
                            "table");
    }
    if (config.olfc_loss.kind() != LossSpec::Kind::kPower) {
      throw ParameterError("calibrated policies need a power-law olfc_loss");
    }
    const double q = config.olfc_loss.param();
    OlfcSchedule s = schedule_from_table(*table, stages, policy_snr(snr_db), q);
    if (fixed_gamma) std::fill(s.gamma.begin(), s.gamma.end(), 2.0 / (q + 2.0));
    return s;
  }
};

inline TrialMetrics run_trial(const ExperimentContext& ctx, PolicyKind policy,
                              int stages, double snr_db, std::uint64_t trial) {
  const SimConfig& c = ctx.config;
  const double sigma_sq = snr_to_sigma_sq(snr_db, c.mu0);
  const double budget0 = c.total_budget();
  Rng signal_rng = make_stream(c.seed, trial, StreamRole::kSignal);
  const Signal signal = generate_signal(c.p0, c.mu0, c.sigma0_sq, c.n,
                                        signal_rng);
  const Rng noise_base = make_stream(c.seed, trial, StreamRole::kNoise);
  const Rng policy_base = make_stream(c.seed, trial, StreamRole::kPolicy);

  const PriorParams pp = ctx.policy_prior(snr_db);
  const SensingModel model{pp.sigma_sq, c.h};
  BeliefState state = init_state(pp);

  const bool single_stage = policy == PolicyKind::kNonadaptive ||
                            policy == PolicyKind::kOracle;
  const int run_stages = single_stage ? 1 : stages;
  if (policy == PolicyKind::kDs && run_stages < 2) {
    throw ParameterError("distilled sensing needs >= 2 stages");
  }

  std::optional<OlfcSchedule> schedule;
  if (policy == PolicyKind::kOlfc) {
    schedule = ctx.schedule(run_stages, snr_db, c.fixed_gamma);
  } else if (policy == PolicyKind::kRollout) {
    schedule = ctx.schedule(run_stages, snr_db, true);
  }
  std::vector<double> alpha;
  DsState ds;
  if (policy == PolicyKind::kDs) {
    alpha = ds_fractions(run_stages, c.ds_ratio);
    ds = ds_init(c.n);
  }

  TrialMetrics m;
  m.trial = trial;
  OlfcWorkspace ws;
  std::vector<double> lambda(c.n, 0.0);
  for (int t = 0; t < run_stages; ++t) {
    switch (policy) {
      case PolicyKind::kNonadaptive:
        lambda = nonadaptive_allocate(c.n, budget0);
        break;
      case PolicyKind::kOracle:
        lambda = oracle_allocate(signal.support, budget0);
        break;
      case PolicyKind::kDs:
        lambda = ds_allocate(ds, t, alpha, budget0);
        if (t == run_stages - 1) {
          // Spend exactly what is left.
          double used = 0.0;
          for (double u : m.stage_usage) used += u;
          double planned = 0.0;
          for (double v : lambda) planned += v;
          if (planned > 0.0) {
            const double scale = (budget0 - used) / planned;
            for (double& v : lambda) v *= scale;
          }
        }
        break;
      case PolicyKind::kOlfc:
        olfc_allocate_into(state, t, *schedule, model, c.olfc_loss, lambda, ws);
        break;
      case PolicyKind::kRollout: {
        Rng rng = policy_base.fork(static_cast<std::uint64_t>(t));
        RolloutOptions opts;
        opts.futures = c.rollout_samples;
        lambda = rollout_allocate(state, t, *schedule, model, c.olfc_loss, rng,
                                  opts)
                     .lambda;
        break;
      }
    }
    Rng stage_noise = noise_base.fork(static_cast<std::uint64_t>(t));
    const ObservationVector y = observe(signal.theta, lambda, c.h, sigma_sq,
                                        stage_noise);
    update_in_place(state, lambda, y, model);
    double spent = 0.0;
    for (double v : lambda) spent += v;
    m.stage_usage.push_back(spent);
    if (policy == PolicyKind::kDs) ds_refine(ds, y);
  }

  // Estimates are the posterior means; the loss runs over the true support.
  m.losses.assign(c.losses.size(), 0.0);
  for (std::size_t i = 0; i < c.n; ++i) {
    if (!signal.support[i]) continue;
    ++m.support_size;
    const double err = std::abs(state.mu[i] - signal.theta[i]);
    for (std::size_t k = 0; k < c.losses.size(); ++k) {
      m.losses[k] += c.losses[k](err);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Experiments.

struct ResultRow {
  std::string policy;
  int stages = 1;
  double snr_db = 0.0;
  double p0 = 0.0;
  std::string loss;
  double mean_loss = 0.0;
  double stderr_ = 0.0;
  double gain_db = 0.0;
  int trials = 0;
};

inline const char* kCsvHeader =
    "policy,T,snr_db,p0,loss_kind,mean_loss,stderr,gain_db,trials";

inline std::string format_row(const ResultRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%d,%.6g,%.6g,%s,%.10e,%.6e,%.6f,%d",
                r.policy.c_str(), r.stages, r.snr_db, r.p0, r.loss.c_str(),
                r.mean_loss, r.stderr_, r.gain_db, r.trials);
  return buf;
}

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvHeader << '\n';
  for (const ResultRow& r : rows) out << format_row(r) << '\n';
}

// Runs all trials of one (policy, T, SNR) cell; results in trial order.
inline std::vector<TrialMetrics> run_cell(const ExperimentContext& ctx,
                                          PolicyKind policy, int stages,
                                          double snr_db) {
  const int trials = ctx.config.trials;
  std::vector<TrialMetrics> out(trials);
  const int threads = std::max(1, std::min(ctx.config.threads, trials));
  const auto work = [&](int w) {
    for (int k = w; k < trials; k += threads) {
      out[k] = run_trial(ctx, policy, stages, snr_db,
                         static_cast<std::uint64_t>(k));
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
  return out;
}

struct CellSummary {
  std::vector<double> mean;
  std::vector<double> stderr_;
};

inline CellSummary summarize(const std::vector<TrialMetrics>& trials,
                             std::size_t loss_count) {
  CellSummary s;
  s.mean.assign(loss_count, 0.0);
  s.stderr_.assign(loss_count, 0.0);
  const double n = static_cast<double>(trials.size());
  for (std::size_t k = 0; k < loss_count; ++k) {
    double sum = 0.0, sq = 0.0;
    for (const TrialMetrics& m : trials) {
      sum += m.losses[k];
      sq += m.losses[k] * m.losses[k];
    }
    s.mean[k] = sum / n;
    const double var = n > 1 ? std::max(0.0, sq / n - s.mean[k] * s.mean[k]) *
                                   n / (n - 1)
                             : 0.0;
    s.stderr_[k] = std::sqrt(var / n);
  }
  return s;
}

inline double gain_db(double baseline, double value) {
  if (value <= 0.0 || baseline <= 0.0) return 0.0;
  return 10.0 * std::log10(baseline / value);
}

// Every configured cell, with dB gains against the nonadaptive policy on the
// same trials. Nonadaptive and oracle runs are single-stage and reported
// with T = 1.
inline std::vector<ResultRow> run_experiment(
    const ExperimentContext& ctx,
    const std::function<void(const std::string&)>& progress = {}) {
  const SimConfig& c = ctx.config;
  c.validate();
  std::vector<ResultRow> rows;
  for (double snr : c.snr_db) {
    const CellSummary baseline = summarize(
        run_cell(ctx, PolicyKind::kNonadaptive, 1, snr), c.losses.size());
    for (PolicyKind policy : c.policies) {
      std::vector<int> stage_list = c.stages;
      if (policy == PolicyKind::kNonadaptive || policy == PolicyKind::kOracle) {
        stage_list = {1};
      }
      for (int stages : stage_list) {
        if (policy == PolicyKind::kDs && stages < 2) continue;
        if (progress) {
          progress(policy_name(policy) + " T=" + std::to_string(stages) +
                   " snr=" + std::to_string(snr));
        }
        const CellSummary s =
            policy == PolicyKind::kNonadaptive
                ? baseline
                : summarize(run_cell(ctx, policy, stages, snr),
                            c.losses.size());
        for (std::size_t k = 0; k < c.losses.size(); ++k) {
          ResultRow r;
          r.policy = policy_name(policy);
          r.stages = stages;
          r.snr_db = snr;
          r.p0 = c.p0;
          r.loss = c.losses[k].name();
          r.mean_loss = s.mean[k];
          r.stderr_ = s.stderr_[k];
          r.gain_db = gain_db(baseline.mean[k], s.mean[k]);
          r.trials = c.trials;
          rows.push_back(r);
        }
      }
    }
  }
  return rows;
}

// Loads the calibration table a configuration needs, if any.
inline ExperimentContext make_context(const SimConfig& config) {
  ExperimentContext ctx;
  ctx.config = config;
  const bool needs_table =
      std::any_of(config.policies.begin(), config.policies.end(),
                  [](PolicyKind k) {
                    return k == PolicyKind::kOlfc || k == PolicyKind::kRollout;
                  });
  if (needs_table) {
    ctx.table = CalibrationTable::load(
        config.calibration.empty() ? default_calibration_path()
                                   : config.calibration);
  }
  return ctx;
}

}  // namespace sparse_sense

#endif  // SPARSE_SENSE_HARNESS_HPP_
