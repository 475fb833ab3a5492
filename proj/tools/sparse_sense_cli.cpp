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

// Command line driver: calibrate, simulate, sweep and radar.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparse_sense/calibration.hpp"
#include "sparse_sense/harness.hpp"
#include "sparse_sense/radar.hpp"

namespace ss = sparse_sense;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  bool full_scale = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "key=value configuration file");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--out", o.out, "output path (default: stdout)");
  app->add_option("--threads", o.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  app->add_flag("--full-scale", o.full_scale,
                "N = 10000 and 4000 trials (hours)");
}

ss::SimConfig load_sim_config(const CommonOptions& o) {
  ss::SimConfig c = o.config.empty() ? ss::SimConfig{} : ss::load_config(o.config);
  if (o.full_scale) {
    c.n = 10000;
    c.trials = 4000;
    c.budget.reset();
  }
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (!o.out.empty()) c.output = o.out;
  return c;
}

// Writes through `path`, or to stdout when it is empty.
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ss::FormatError("cannot open output file: " + path);
  fn(out);
  if (!out) throw ss::FormatError("write failed: " + path);
}

void log_progress(const std::string& msg) { std::cerr << msg << '\n'; }

void run_simulation(const ss::SimConfig& config) {
  const ss::ExperimentContext ctx = ss::make_context(config);
  const auto rows = ss::run_experiment(ctx, log_progress);
  with_output(config.output,
              [&](std::ostream& out) { ss::write_csv(out, rows); });
}

// --- calibrate -------------------------------------------------------------

struct CalibrateOptions {
  std::string snr_grid = "-10:35:2.5";
  int max_stages = 10;
  std::optional<int> samples;
  int degree = 6;
};

void run_calibrate(const CommonOptions& o, const CalibrateOptions& k) {
  const ss::SimConfig c = load_sim_config(o);
  c.validate();
  if (c.olfc_loss.kind() != ss::LossSpec::Kind::kPower) {
    throw ss::ParameterError("calibration needs a power loss for olfc_loss");
  }
  ss::CalibrationPrior prior;
  prior.p0 = c.assumed_p0.value_or(c.p0);
  prior.mu0 = c.assumed_mu0.value_or(c.mu0);
  prior.sigma0_sq = c.assumed_sigma0_sq.value_or(c.sigma0_sq);
  prior.n = o.full_scale ? 1000 : c.n;
  prior.budget = o.full_scale ? 1000.0 : c.total_budget();
  ss::CalibrationOptions opt;
  opt.samples = k.samples.value_or(o.full_scale ? 2000 : 200);
  opt.fixed_gamma = c.fixed_gamma;
  opt.seed = c.seed;
  opt.threads = c.threads;
  const ss::CalibrationTable table = ss::calibrate_table(
      prior, c.olfc_loss.param(), ss::parse_snr_list(k.snr_grid),
      k.max_stages, k.degree, opt, [](const ss::CalibrationProgress& p) {
        std::cerr << "T=" << p.stages << " snr=" << p.snr_db
                  << " beta=" << p.result.best.beta
                  << " gamma=" << p.result.best.gamma
                  << " cost=" << p.result.best.cost << '\n';
      });
  with_output(c.output, [&](std::ostream& out) { table.write(out); });
}

// --- sweep -----------------------------------------------------------------

struct SweepOptions {
  std::string snr_db;
  std::string stages;
  std::string policies;
  std::string losses;
};

void run_sweep(const CommonOptions& o, const SweepOptions& s) {
  ss::SimConfig c = load_sim_config(o);
  if (!s.snr_db.empty()) ss::apply_config_value(c, "snr_db", s.snr_db);
  if (!s.stages.empty()) ss::apply_config_value(c, "stages", s.stages);
  if (!s.policies.empty()) ss::apply_config_value(c, "policies", s.policies);
  if (!s.losses.empty()) ss::apply_config_value(c, "losses", s.losses);
  run_simulation(c);
}

// --- radar -----------------------------------------------------------------

struct RadarOptions {
  std::string scene;
  bool synthetic = false;
  std::optional<int> pulses_per_pixel;
  std::optional<int> stages;
  std::string policy = "olfc";
  std::optional<int> realizations;
  std::string out_dir = "radar_out";
  std::optional<int> scan_row;
  std::optional<double> p0;
  std::optional<int> calibration_samples;
};

void run_radar_command(const CommonOptions& o, const RadarOptions& r) {
  ss::RadarConfig c;
  if (!o.config.empty()) {
    throw ss::ParameterError("radar takes its settings from flags, not --config");
  }
  if (r.synthetic == !r.scene.empty()) {
    throw ss::ParameterError("give exactly one of --scene or --synthetic");
  }
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (r.pulses_per_pixel) c.pulses_per_pixel = *r.pulses_per_pixel;
  if (r.stages) c.stages = *r.stages;
  if (r.realizations) c.realizations = *r.realizations;
  if (r.p0) c.p0 = *r.p0;
  if (r.calibration_samples) c.calibration_samples = *r.calibration_samples;
  c.policy = ss::parse_policy(r.policy);
  c.scan_row = r.scan_row.value_or(-1);
  c.validate();

  const ss::Scene scene = r.synthetic
                              ? ss::synthetic_scene(c)
                              : ss::scene_from_image(ss::read_pgm(r.scene));
  const std::string dir = o.out.empty() ? r.out_dir : o.out;
  std::filesystem::create_directories(dir);

  std::cerr << "pilot and calibration\n";
  const ss::RadarSetup setup = ss::prepare_radar(scene, c, c.stages);
  std::cerr << "filtered snr " << setup.snr_db << " dB\n";
  const ss::RadarSummary s = ss::run_radar(scene, setup, c);

  ss::write_pgm(scene.image, dir + "/truth.pgm");
  ss::write_pgm(s.mean, dir + "/mean.pgm");
  ss::write_pgm(s.stddev, dir + "/std.pgm");
  ss::write_pgm(s.first, dir + "/realization0.pgm");

  const int row = ss::scan_row_for(scene, c.scan_row);
  with_output(dir + "/profile.csv", [&](std::ostream& out) {
    ss::write_profile_csv(out, scene, s, row);
  });
  with_output(dir + "/summary.csv", [&](std::ostream& out) {
    ss::write_summary_csv(out, c, setup, s);
  });
  std::cerr << "target std " << s.target_std_db << " dB, outputs in " << dir
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multistage adaptive effort allocation for sparse signals"};
  app.require_subcommand(1);

  CommonOptions common;
  CalibrateOptions calib;
  SweepOptions sweep;
  RadarOptions radar;

  auto* cal = app.add_subcommand("calibrate", "write a calibration table");
  add_common(cal, common);
  cal->add_option("--snr-grid", calib.snr_grid, "lo:hi:step or comma list");
  cal->add_option("--max-stages", calib.max_stages, "largest T")
      ->check(CLI::PositiveNumber);
  cal->add_option("--samples", calib.samples, "Monte Carlo samples per cell")
      ->check(CLI::PositiveNumber);
  cal->add_option("--degree", calib.degree, "polynomial degree of the fits")
      ->check(CLI::NonNegativeNumber);

  auto* sim = app.add_subcommand("simulate", "run a configuration, write CSV");
  add_common(sim, common);

  auto* swp = app.add_subcommand("sweep", "Cartesian sweep over SNR and T");
  add_common(swp, common);
  swp->add_option("--snr-db", sweep.snr_db, "lo:hi:step or comma list");
  swp->add_option("--stages", sweep.stages, "comma list of T");
  swp->add_option("--policies", sweep.policies, "comma list of policies");
  swp->add_option("--losses", sweep.losses, "comma list of losses");

  auto* rad = app.add_subcommand("radar", "multistage radar imaging demo");
  add_common(rad, common);
  auto* scene_opt = rad->add_option("--scene", radar.scene, "PGM scene");
  auto* synth_opt =
      rad->add_flag("--synthetic", radar.synthetic, "generated 13-target scene");
  scene_opt->excludes(synth_opt);
  rad->add_option("--pulses-per-pixel", radar.pulses_per_pixel, "P")
      ->check(CLI::PositiveNumber);
  rad->add_option("--stages", radar.stages, "T")->check(CLI::PositiveNumber);
  rad->add_option("--policy", radar.policy, "olfc, ds or nonadaptive")
      ->check(CLI::IsMember({"olfc", "ds", "nonadaptive"}));
  rad->add_option("--realizations", radar.realizations, "Monte Carlo runs")
      ->check(CLI::PositiveNumber);
  rad->add_option("--out-dir", radar.out_dir, "output directory");
  rad->add_option("--scan-row", radar.scan_row, "profile row");
  rad->add_option("--p0", radar.p0, "target prior in the filtered domain");
  rad->add_option("--calibration-samples", radar.calibration_samples,
                  "samples per calibration cell")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cal->parsed()) {
      run_calibrate(common, calib);
    } else if (sim->parsed()) {
      run_simulation(load_sim_config(common));
    } else if (swp->parsed()) {
      run_sweep(common, sweep);
    } else if (rad->parsed()) {
      run_radar_command(common, radar);
    }
  } catch (const ss::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
