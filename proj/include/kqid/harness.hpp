#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kqid/dictionary.hpp"
#include "kqid/dynamics.hpp"
#include "kqid/ident.hpp"
#include "kqid/mpc.hpp"

namespace kqid {

// ============================================================================
// Experiment configuration
// ============================================================================

struct DictionarySpec {
  DictionaryKind kind = DictionaryKind::state_tps;
  int n_centers = 100;
  // Sampling box for radial centers, one interval shared by every coordinate;
  // matches the unit initial-condition box by default.
  double center_lo = -1.0;
  double center_hi = 1.0;
};

// Everything a sweep run depends on. The master seed fans out to named
// substreams (training set, test set, center draw, per-record dither), so any
// single (word length, seed) record can be recomputed in isolation.
struct ExperimentConfig {
  std::string plant = "pendulum";
  DictionarySpec dictionary;

  int n_traj = 20;
  int horizon = 500;
  int n_test_traj = 5;
  int test_horizon = 100;

  std::vector<int> word_lengths = {5, 6, 7, 8, 9, 10, 11};
  int n_monte_carlo = 10;
  QuantMode mode = QuantMode::state_input;
  double margin = 0.05;
  bool has_shared_range = false;
  double shared_lo = 0.0;
  double shared_hi = 0.0;

  bool run_mpc = false;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  bool emit_svg = true;

  void validate() const;
};

[[nodiscard]] ExperimentConfig parse_config(const std::string& json_text);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);
[[nodiscard]] std::string config_to_json(const ExperimentConfig& cfg);

// Restores the full experiment scale: 200 trajectories x 1000 steps, 50
// Monte-Carlo dither seeds. Desk defaults stay in the struct initializers.
void apply_paper_scale(ExperimentConfig& cfg);

// ============================================================================
// Sweep results
// ============================================================================

struct SweepRecord {
  int word_length = 0;
  int seed_index = 0;
  double rel_a = 0.0;  // gap to the unquantized-data estimate, A block
  double rel_b = 0.0;
  double prediction_error = 0.0;     // mean open-loop error over the test set
  double closed_loop_cost = 0.0;     // NaN when the config skips MPC
};

struct Aggregate {
  int word_length = 0;
  double mean_rel_a = 0.0, std_rel_a = 0.0;
  double mean_rel_b = 0.0, std_rel_b = 0.0;
  double mean_pred = 0.0, std_pred = 0.0;
  double mean_cost = 0.0, std_cost = 0.0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

struct SweepResult {
  std::vector<SweepRecord> records;   // |word_lengths| x n_monte_carlo entries
  std::vector<Aggregate> aggregates;  // one per word length, ascending input order
  // Least-squares lines through (b, log10 mean error); slope is NaN when a
  // mean is nonpositive or fewer than three word lengths were swept.
  SlopeFit slope_a, slope_b, slope_pred;
  double reference_prediction_error = 0.0;
  double reference_cost = 0.0;  // NaN when MPC is skipped
  std::optional<ClosedLoopResult> reference_loop;
  double dt = 0.0;
  std::string config_json;
  std::uint64_t config_hash = 0;
};

// Simulates the training and test sets once, fits the unquantized reference
// estimate, then walks the (word length, dither seed) grid: quantize, refit,
// gap, open-loop prediction error, and (optionally) closed-loop cost.
// Deterministic given the config; records are independent of visit order.
[[nodiscard]] SweepResult run_sweep(const ExperimentConfig& cfg);

// Ordinary least squares of log10(error) against b. Requires >= 3 points and
// strictly positive errors.
[[nodiscard]] SlopeFit fit_log_slope(const std::vector<double>& b_values,
                                     const std::vector<double>& mean_errors);

// Writes records.csv, aggregate.csv, manifest.json, plot-data CSVs, and
// (when enabled in the config) small SVG line charts into dir.
void emit_outputs(const SweepResult& result, const std::string& dir, bool emit_svg = true);

[[nodiscard]] std::vector<SweepRecord> load_records_csv(const std::string& path);

}  // namespace kqid
