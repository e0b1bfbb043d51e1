#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kqid/dictionary.hpp"
#include "kqid/dynamics.hpp"
#include "kqid/errors.hpp"
#include "kqid/harness.hpp"
#include "kqid/ident.hpp"
#include "kqid/io.hpp"
#include "kqid/mpc.hpp"
#include "kqid/predictor.hpp"
#include "kqid/quantization.hpp"
#include "kqid/rng.hpp"
#include "kqid/util.hpp"

namespace {

using namespace kqid;

struct SimulateArgs {
  std::string plant = "pendulum";
  int n_traj = 20;
  int horizon = 500;
  std::uint64_t seed = 1;
  std::string out = "data.bin";
};

int cmd_simulate(const SimulateArgs& a) {
  const PlantModel plant = make_plant(plant_kind_from_name(a.plant));
  const TrajectorySet set = generate_training_set(plant, a.n_traj, a.horizon, a.seed);
  save_trajectory_set(set, a.out);
  std::cout << "wrote " << set.trajectories.size() << " trajectories ("
            << set.total_pairs() << " transition pairs) to " << a.out << "\n";
  return 0;
}

struct IdentifyArgs {
  std::string data;
  std::string out = "model.bin";
  std::string dictionary = "state_tps";
  int n_centers = 100;
  double center_lo = -1.0;
  double center_hi = 1.0;
  std::uint64_t centers_seed = 1;
  std::string mode = "none";
  int word_length = 8;
  double margin = 0.05;
  std::vector<double> shared_range;
  std::uint64_t dither_seed = 1;
  double lambda = 0.0;
};

int cmd_identify(const IdentifyArgs& a) {
  const TrajectorySet data = load_trajectory_set(a.data);
  const int n = static_cast<int>(data.trajectories.front().X.rows());

  Dictionary dict;
  if (a.dictionary == "identity") {
    dict = make_identity_dictionary(n);
  } else if (a.dictionary == "state_tps") {
    dict = make_tps_dictionary(
        n, draw_centers(n, a.n_centers, a.center_lo, a.center_hi, a.centers_seed));
  } else if (a.dictionary == "kdv_poly") {
    dict = make_kdv_dictionary(n);
  } else {
    throw ConfigError("unknown dictionary kind '" + a.dictionary + "'");
  }

  QuantSetup setup;
  if (a.mode == "none") setup.mode = QuantMode::none;
  else if (a.mode == "state_input") setup.mode = QuantMode::state_input;
  else if (a.mode == "observable") setup.mode = QuantMode::observable;
  else throw ConfigError("unknown quantization mode '" + a.mode + "'");
  setup.word_length_b = a.word_length;
  setup.margin = a.margin;
  if (!a.shared_range.empty()) {
    setup.has_shared_range = true;
    setup.shared_lo = a.shared_range[0];
    setup.shared_hi = a.shared_range[1];
  }

  const SnapshotSet snaps = assemble_snapshots(data, dict, setup, a.dither_seed);
  const auto [raw, report] = a.lambda > 0.0 ? ridge_fit(snaps, a.lambda) : edmd_fit(snaps);
  const LinearPredictor p = make_predictor(dict, raw.A, raw.B);
  save_predictor(p, a.out, a.mode + "/b" + std::to_string(a.word_length), snaps.dither_seed);

  std::cout << "lifted dimension " << p.A.rows() << ", " << snaps.T() << " pairs\n"
            << "residual rms " << report.residual_rms << ", rank " << report.rank_used
            << ", condition " << report.condition_estimate << "\n";
  if (snaps.saturation_count > 0)
    std::cout << "warning: " << snaps.saturation_count << " samples saturated the quantizer\n";
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string data;
  int traj = 0;
  std::string out = "prediction.csv";
};

int cmd_predict(const PredictArgs& a) {
  const LoadedPredictor loaded = load_predictor(a.model);
  const TrajectorySet data = load_trajectory_set(a.data);
  if (a.traj < 0 || a.traj >= static_cast<int>(data.trajectories.size()))
    throw ConfigError("trajectory index out of range");
  const Trajectory& tr = data.trajectories[static_cast<std::size_t>(a.traj)];

  const PredictionRun run = make_prediction_run(tr.X, loaded.predictor, tr.U);
  int skipped = 0;
  const double err = prediction_error(run, &skipped);
  write_prediction_csv(run, data.dt, a.out);
  std::cout << "mean relative prediction error " << err << " over "
            << run.per_step_rel_error.size() - skipped << " steps\n"
            << "wrote " << a.out << "\n";
  return 0;
}

struct MpcArgs {
  std::string model;
  std::string plant = "pendulum";
  double duration = 0.0;  // 0 keeps the scenario default
  std::string out = "closed_loop.csv";
};

int cmd_mpc(const MpcArgs& a) {
  const LoadedPredictor loaded = load_predictor(a.model);
  const PlantModel plant = make_plant(plant_kind_from_name(a.plant));
  Scenario sc = default_scenario(plant);
  if (a.duration > 0.0) sc.duration = a.duration;

  const ClosedLoopResult result =
      run_closed_loop(plant, loaded.predictor, sc.cfg, sc.x0, sc.duration);
  write_closed_loop_csv(result, plant.dt, a.out);
  std::cout << "closed-loop cost " << result.J << " over " << result.U.cols() << " steps\n"
            << "worst predicted constraint violation " << result.max_violation << "\n"
            << "wrote " << a.out << "\n";
  return 0;
}

struct SweepArgs {
  std::string config;
  bool paper_scale = false;
  std::string out;  // overrides the config's output_dir when nonempty
};

int cmd_sweep(const SweepArgs& a) {
  ExperimentConfig cfg = load_config(a.config);
  if (a.paper_scale) apply_paper_scale(cfg);
  if (!a.out.empty()) cfg.output_dir = a.out;

  const SweepResult result = run_sweep(cfg);
  emit_outputs(result, cfg.output_dir, cfg.emit_svg);

  std::cout << result.records.size() << " records -> " << cfg.output_dir << "\n";
  std::cout << "reference prediction error " << result.reference_prediction_error << "\n";
  if (result.reference_loop.has_value())
    std::cout << "reference closed-loop cost " << result.reference_cost << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "slope A %+.4f (r2 %.3f)  slope B %+.4f (r2 %.3f)",
                result.slope_a.slope, result.slope_a.r_squared, result.slope_b.slope,
                result.slope_b.r_squared);
  std::cout << line << "\n";
  return 0;
}

struct ValidateArgs {
  int bits = 8;
  std::vector<double> range = {-1.0, 1.0};
  std::int64_t samples = 1000000;
  int coords = 2;
  std::uint64_t seed = 1;
};

int cmd_validate_quantizer(const ValidateArgs& a) {
  const QuantizerSpec q = build_quantizer(a.range[0], a.range[1], a.bits);
  // Signals stay one cell clear of the edges so dither cannot saturate; the
  // uniform error law only holds away from the boundary cells.
  const double lo = q.x_min + q.resolution_eps;
  const double hi = q.x_max - q.resolution_eps;
  if (!(lo < hi)) throw ConfigError("quantizer range too narrow for the word length");

  RngStream signal(derive_seed(a.seed, "signal", 0));
  DitherStream dither(derive_seed(a.seed, "dither", 0));
  SaturationCounter sat;
  ErrorSampleSet samples;
  samples.errors.resize(a.coords, a.samples);
  for (std::int64_t t = 0; t < a.samples; ++t)
    for (int i = 0; i < a.coords; ++i) {
      const double x = signal.next_uniform(lo, hi);
      const double w = dither.next(q.resolution_eps);
      samples.errors(i, t) = dither_quantize(q, x, w, &sat) - x;
    }

  const MomentReport report = error_moment_report(samples, q.resolution_eps);
  std::cout << "resolution " << q.resolution_eps << ", theory variance "
            << report.theory_variance[0] << "\n";
  for (int i = 0; i < a.coords; ++i)
    std::cout << "coord " << i << ": mean " << report.mean[i] << " (z " << report.z_mean[i]
              << "), variance " << report.variance[i] << " (z " << report.z_variance[i]
              << "), lag1 z " << report.z_lag1[i] << "\n";
  std::cout << "max |z| " << report.max_abs_z() << ", saturated " << sat.count << "\n";
  if (report.max_abs_z() > 4.0)
    throw NumericError("error moments deviate from the uniform law (|z| > 4)");
  std::cout << "moment law holds within 4 standard errors\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifted linear identification from dither-quantized data, with MPC on top"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "Generate a trajectory dataset");
  c_sim->add_option("--plant", sim.plant, "pendulum | vanderpol | motor | kdv");
  c_sim->add_option("--n-traj", sim.n_traj, "number of trajectories");
  c_sim->add_option("--horizon", sim.horizon, "steps per trajectory");
  c_sim->add_option("--seed", sim.seed, "master seed");
  c_sim->add_option("--out", sim.out, "output dataset file");

  IdentifyArgs ident;
  CLI::App* c_id = app.add_subcommand("identify", "Fit a lifted linear predictor");
  c_id->add_option("--data", ident.data, "trajectory dataset")->required();
  c_id->add_option("--out", ident.out, "output model file");
  c_id->add_option("--dictionary", ident.dictionary, "identity | state_tps | kdv_poly");
  c_id->add_option("--n-centers", ident.n_centers, "radial centers for state_tps");
  c_id->add_option("--center-lo", ident.center_lo, "center box lower edge");
  c_id->add_option("--center-hi", ident.center_hi, "center box upper edge");
  c_id->add_option("--centers-seed", ident.centers_seed, "center draw seed");
  c_id->add_option("--mode", ident.mode, "none | state_input | observable");
  c_id->add_option("--word-length", ident.word_length, "quantizer bits");
  c_id->add_option("--margin", ident.margin, "range widening fraction");
  c_id->add_option("--shared-range", ident.shared_range, "shared quantizer range lo hi")
      ->expected(2);
  c_id->add_option("--dither-seed", ident.dither_seed, "dither seed");
  c_id->add_option("--lambda", ident.lambda, "ridge weight; 0 = plain least squares");

  PredictArgs pred;
  CLI::App* c_pr = app.add_subcommand("predict", "Open-loop prediction against a dataset");
  c_pr->add_option("--model", pred.model, "model file")->required();
  c_pr->add_option("--data", pred.data, "trajectory dataset")->required();
  c_pr->add_option("--traj", pred.traj, "trajectory index");
  c_pr->add_option("--out", pred.out, "output CSV");

  MpcArgs mpc;
  CLI::App* c_mpc = app.add_subcommand("mpc", "Closed-loop tracking on the benchmark scenario");
  c_mpc->add_option("--model", mpc.model, "model file")->required();
  c_mpc->add_option("--plant", mpc.plant, "pendulum | vanderpol | motor | kdv");
  c_mpc->add_option("--duration", mpc.duration, "run length in seconds");
  c_mpc->add_option("--out", mpc.out, "output CSV");

  SweepArgs sweep;
  CLI::App* c_sw = app.add_subcommand("sweep", "Monte-Carlo word-length sweep");
  c_sw->add_option("--config", sweep.config, "experiment config JSON")->required();
  c_sw->add_flag("--paper-scale", sweep.paper_scale,
                 "200 trajectories x 1000 steps, 50 dither seeds");
  c_sw->add_option("--out", sweep.out, "output directory override");

  ValidateArgs val;
  CLI::App* c_val = app.add_subcommand("validate-quantizer", "Check the dither error moment law");
  c_val->add_option("--bits", val.bits, "word length");
  c_val->add_option("--range", val.range, "quantizer range lo hi")->expected(2);
  c_val->add_option("--samples", val.samples, "draws per coordinate");
  c_val->add_option("--coords", val.coords, "number of coordinates");
  c_val->add_option("--seed", val.seed, "master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_id->parsed()) return cmd_identify(ident);
    if (c_pr->parsed()) return cmd_predict(pred);
    if (c_mpc->parsed()) return cmd_mpc(mpc);
    if (c_sw->parsed()) return cmd_sweep(sweep);
    if (c_val->parsed()) return cmd_validate_quantizer(val);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
