#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "kqid/dictionary.hpp"
#include "kqid/dynamics.hpp"
#include "kqid/quantization.hpp"

namespace kqid {

// ============================================================================
// Snapshot assembly
// ============================================================================

enum class QuantMode {
  none,         // raw data
  state_input,  // states and inputs pass through the dither quantizer, then lift
  observable    // lifted values and inputs pass through the dither quantizer
};

struct QuantSetup {
  QuantMode mode = QuantMode::none;
  int word_length_b = 8;
  // Quantizer ranges default to the per-coordinate empirical span of the
  // training data widened on each side by margin * span.
  double margin = 0.05;
  // A shared explicit range overrides the empirical construction and gives
  // every coordinate the same resolution.
  bool has_shared_range = false;
  double shared_lo = 0.0;
  double shared_hi = 0.0;
  // Each stored snapshot is quantized once and reused where it appears as
  // both a current and a next sample; true draws fresh dither per appearance.
  bool requantize_appearances = false;
};

struct SnapshotSet {
  Eigen::MatrixXd Phi;      // N x T lifted current samples
  Eigen::MatrixXd PhiPlus;  // N x T lifted next samples
  Eigen::MatrixXd U;        // m x T inputs, quantized when the mode says so
  Eigen::MatrixXd X;        // n x T raw current states
  Eigen::MatrixXd XPlus;    // n x T raw next states

  QuantMode mode = QuantMode::none;
  std::vector<QuantizerSpec> state_quantizers;       // state_input mode
  std::vector<QuantizerSpec> observable_quantizers;  // observable mode
  std::vector<QuantizerSpec> input_quantizers;       // both quantized modes
  std::int64_t saturation_count = 0;
  std::uint64_t dither_seed = 0;

  [[nodiscard]] Eigen::Index T() const { return Phi.cols(); }
  // Psi = [Phi; U], the regressor block.
  [[nodiscard]] Eigen::MatrixXd Psi() const;
};

// Column pairs (lift(x_t), u_t) -> lift(x_{t+1}) concatenated across
// trajectories; pairs never span a trajectory boundary. Dither draws come
// from substreams of dither_seed keyed by trajectory index, so the result is
// reproducible and independent of assembly order.
[[nodiscard]] SnapshotSet assemble_snapshots(const TrajectorySet& data, const Dictionary& dict,
                                             const QuantSetup& setup, std::uint64_t dither_seed);

// ============================================================================
// Least-squares identification
// ============================================================================

struct LinearPredictor {
  Eigen::MatrixXd A;  // N x N
  Eigen::MatrixXd B;  // N x m
  Eigen::MatrixXd C;  // n x N decoder
  Dictionary dict;
};

struct FitReport {
  double residual_rms = 0.0;        // sqrt((1/T) ||PhiPlus - A Phi - B U||_F^2)
  int rank_used = 0;
  double regularizer_lambda = 0.0;  // 0 for the plain least-squares path
  double condition_estimate = 0.0;  // sigma_max / sigma_min over kept directions
  double rank_tolerance = 0.0;
};

// Minimum-norm minimizer of (1/T) ||PhiPlus - G [Phi; U]||_F^2 via a rank-
// tolerant pseudoinverse; singular values below max(rows, cols) * machine
// epsilon * sigma_max are truncated. The decoder C is left empty.
[[nodiscard]] std::pair<LinearPredictor, FitReport> edmd_fit(const SnapshotSet& s);

// G = PhiPlus Psi^T (Psi Psi^T + T lambda I)^{-1}, the minimizer of
// (1/T)||PhiPlus - G Psi||^2 + lambda ||G||_F^2.
[[nodiscard]] std::pair<LinearPredictor, FitReport> ridge_fit(const SnapshotSet& s, double lambda);

// Least-squares decoder X ~= C Phi.
[[nodiscard]] Eigen::MatrixXd fit_decoder(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Phi);

// [I_n 0], exact when the dictionary keeps the state in its leading rows.
[[nodiscard]] Eigen::MatrixXd state_selector_decoder(int n, int N);

// Predictor with the decoder filled in: the selector, exact because every
// built-in dictionary keeps the state in its leading rows.
[[nodiscard]] LinearPredictor make_predictor(const Dictionary& dict, const Eigen::MatrixXd& A,
                                             const Eigen::MatrixXd& B);

// ============================================================================
// Streaming normal equations
// ============================================================================

// Accumulates Psi Psi^T, PhiPlus Psi^T and the target square-norm so fits can
// run over data too large to hold as one snapshot block.
class GramAccumulator {
 public:
  GramAccumulator(int N, int m);

  void add(const Eigen::VectorXd& phi, const Eigen::VectorXd& u, const Eigen::VectorXd& phi_plus);
  void add_block(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& U,
                 const Eigen::MatrixXd& PhiPlus);

  [[nodiscard]] std::int64_t count() const { return count_; }
  [[nodiscard]] const Eigen::MatrixXd& psi_gram() const { return psi_gram_; }
  [[nodiscard]] const Eigen::MatrixXd& cross() const { return cross_; }
  [[nodiscard]] double target_sq() const { return target_sq_; }

  // Same estimators as edmd_fit / ridge_fit, computed from the accumulated
  // normal equations. lambda = 0 falls back to the rank-tolerant
  // eigendecomposition of the Gram matrix.
  [[nodiscard]] std::pair<LinearPredictor, FitReport> fit(double lambda) const;

 private:
  int N_, m_;
  std::int64_t count_ = 0;
  Eigen::MatrixXd psi_gram_;  // (N+m) x (N+m)
  Eigen::MatrixXd cross_;     // N x (N+m)
  double target_sq_ = 0.0;    // sum ||phi_plus||^2
};

// ============================================================================
// Estimate comparison
// ============================================================================

struct GapReport {
  double relA = 0.0;  // ||A - Aq||_F / ||A||_F
  double relB = 0.0;
  double relG = 0.0;  // joint [A B] block
};

[[nodiscard]] GapReport estimate_gap(const LinearPredictor& ref, const LinearPredictor& other);

// (eps^2/12) * || (Psi Psi^T / T + eps^2/12 I)^{-1} ||_F evaluated on
// unquantized data: the identification error cap that the ridge equivalence
// yields in the large data regime.
[[nodiscard]] double mismatch_bound(const SnapshotSet& s, double eps);
[[nodiscard]] double mismatch_bound_from_gram(const Eigen::MatrixXd& psi_gram, std::int64_t T,
                                              double eps);

}  // namespace kqid
