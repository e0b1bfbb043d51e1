#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "kqid/dynamics.hpp"
#include "kqid/ident.hpp"
#include "kqid/quantization.hpp"

namespace kqid {

// ============================================================================
// Tracking configuration
// ============================================================================

// Piecewise-constant reference: segment i holds from start_times[i] until the
// next start time. start_times ascend and the first segment covers t = 0.
struct ReferenceSignal {
  std::vector<double> start_times;
  std::vector<Eigen::VectorXd> values;

  [[nodiscard]] Eigen::VectorXd value(double t) const;
};

struct MpcConfig {
  Eigen::MatrixXd Q;  // n x n PSD state weight
  Eigen::MatrixXd R;  // m x m PSD input weight
  int horizon = 10;
  Eigen::VectorXd u_lo, u_hi;  // hard input box
  Eigen::VectorXd x_lo, x_hi;  // per-coordinate bounds on Cz; +-inf disables
  ReferenceSignal reference;
  // State bounds are soft: each bounded output sample gets a slack variable
  // charged soft_penalty_scale * max diagonal of Q per unit squared, so a
  // degraded predictor cannot render the per-step problem infeasible. At this
  // weight a satisfiable bound is slackened only by its constraint price over
  // twice the weight, far below the solver tolerance; an unsatisfiable one
  // degrades into the least-squares compromise instead of a solver failure.
  double soft_penalty_scale = 1e6;
  // Floor added to the Hessian diagonal; keeps R = 0 solvable.
  double tikhonov = 1e-9;
  // Measurements fed back into the controller pass through these dither
  // quantizers when nonempty; the default leaves run-time measurements exact
  // so quantization enters through identification only.
  std::vector<QuantizerSpec> measurement_quantizers;
  std::uint64_t measurement_dither_seed = 0;
};

// ============================================================================
// Quadratic program
// ============================================================================

// minimize 0.5 x'Hx + f'x subject to lo <= A x <= hi, H PSD.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd A;
  Eigen::VectorXd lo, hi;
};

struct QpSolution {
  Eigen::VectorXd x;  // primal
  Eigen::VectorXd y;  // row duals: negative at an active lower bound
  Eigen::VectorXd z;  // A x at the solution
  double objective = 0.0;
  double stat_residual = 0.0;    // ||Hx + f + A'y||_inf
  double primal_residual = 0.0;  // worst bound violation
  double comp_residual = 0.0;    // worst dual-sign or complementary-slackness defect
  int iterations = 0;
  bool polished = false;
};

// Operator-splitting iteration with a direct active-set polish. The contract
// is the KKT tolerance on the original data: stationarity <= 1e-6, primal
// violation <= 1e-8, complementarity <= 1e-6. The iteration runs on a
// Ruiz-equilibrated copy; residuals are always checked unscaled. Structure
// (H, A) is fixed at construction so factorizations carry across solves;
// each solve warm-starts from the last.
class QpSolver {
 public:
  QpSolver(Eigen::MatrixXd H, Eigen::MatrixXd A);

  [[nodiscard]] QpSolution solve(const Eigen::VectorXd& f, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi);
  // Tries one exact KKT solve on a caller-supplied working-set guess
  // (side[i] = +1 upper bound active, -1 lower, 0 inactive) before falling
  // back to the iteration. A caller that can identify the set from problem
  // structure skips the splitting entirely.
  [[nodiscard]] QpSolution solve_seeded(const Eigen::VectorXd& f, const Eigen::VectorXd& lo,
                                        const Eigen::VectorXd& hi, std::vector<int> side);
  void reset_warm_start();

 private:
  void equilibrate();
  void factor();
  bool polish_solve(const Eigen::VectorXd& f, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                    std::vector<int> side, Eigen::VectorXd* x_out, Eigen::VectorXd* y_out);
  void remember_side(const std::vector<int>& side);

  Eigen::MatrixXd H_, A_;    // original problem data
  Eigen::MatrixXd Hs_, As_;  // Ruiz-equilibrated copies
  Eigen::VectorXd D_, E_;    // variable and constraint scalings
  double cost_scale_ = 0.0;  // set at the first solve from the cost data
  double rho_ = 0.1;
  double sigma_ = 1e-6;
  Eigen::LLT<Eigen::MatrixXd> kkt_;
  Eigen::VectorXd x_, y_, z_;  // scaled iterate carried across solves
  bool have_warm_ = false;
  // Polish factorization, keyed by the equality set; consecutive warm-started
  // solves usually repeat the set, so the LU survives across receding-horizon
  // steps.
  std::vector<Eigen::Index> polish_act_;
  Eigen::MatrixXd polish_kkt_;
  Eigen::PartialPivLU<Eigen::MatrixXd> polish_lu_;
  bool have_polish_ = false;
  // Working-set sides of recent successful polishes, most recent first. The
  // next solve seeds its walk from each in turn: consecutive instances
  // usually repeat one of them up to a few rows, and a controller chattering
  // against a bound alternates between two sets, so one step of memory is
  // not enough.
  std::vector<std::vector<int>> recent_sides_;
};

[[nodiscard]] QpSolution solve_qp(const QpProblem& qp);

// ============================================================================
// Condensed MPC
// ============================================================================

// Horizon maps and the decision-vector layout shared by condense() and the
// controller. The decision vector is [u_0..u_{Th-1}; s_0..s_{K-1}]: the
// stacked input sequence followed by one slack per bounded output sample.
// Outputs y_t = C z_t, t = 1..Th, enter the cost against the reference
// window; a sample's slack relaxes both sides of its box and is charged
// slack_weight * s^2.
struct Condensation {
  int n = 0, m = 0, N = 0, Th = 0;
  int n_inputs = 0;
  int n_slacks = 0;
  Eigen::MatrixXd Gamma;         // (n Th) x N free-response map
  Eigen::MatrixXd Theta;         // (n Th) x (m Th) forced-response map
  Eigen::MatrixXd H;             // decision Hessian, inputs block then slack diagonal
  Eigen::MatrixXd A;             // rows: u box, s >= 0, then slackened output rows
  Eigen::VectorXd lo, hi;        // bounds template; output rows re-offset per solve
  Eigen::MatrixXd theta_t_qbar;  // Theta' Qbar, the linear-term map
  std::vector<int> soft_output;  // stacked-output index per slack
  std::vector<int> soft_row_hi;  // upper-side row per slack, -1 when unbounded
  std::vector<int> soft_row_lo;  // lower-side row per slack, -1 when unbounded
  double slack_weight = 0.0;
};

[[nodiscard]] Condensation build_condensation(const LinearPredictor& p, const MpcConfig& cfg);

// Reference window starts one sample after t0; free response enters the
// linear term and the soft-row offsets.
[[nodiscard]] QpProblem condense(const LinearPredictor& p, const MpcConfig& cfg,
                                 const Eigen::VectorXd& z0, double dt, double t0 = 0.0);

class CondensedController {
 public:
  CondensedController(const LinearPredictor& p, const MpcConfig& cfg, double dt);

  // Solves the horizon problem from state x at absolute time t and returns
  // the first input, clamped to the box exactly.
  [[nodiscard]] Eigen::VectorXd step(const Eigen::VectorXd& x, double t);

  [[nodiscard]] const QpSolution& last_solution() const { return last_; }
  // Largest slack in the most recent solve: the state-bound excursion
  // tolerated on the predicted trajectory.
  [[nodiscard]] double last_violation() const { return last_violation_; }

 private:
  LinearPredictor p_;
  MpcConfig cfg_;
  double dt_;
  Condensation cond_;
  QpSolver solver_;
  QpSolution last_;
  double last_violation_ = 0.0;
  Eigen::VectorXd warm_u_;  // previous input stack, the Newton start
};

// ============================================================================
// Closed loop
// ============================================================================

struct ClosedLoopResult {
  Eigen::MatrixXd X;           // n x (S+1) true states
  Eigen::MatrixXd U;           // m x S applied inputs
  Eigen::MatrixXd Ref;         // n x (S+1) reference samples
  Eigen::VectorXd stage_cost;  // length S+1; the final entry has no input term
  double J = 0.0;              // tracking cost accumulated along the true trajectory
  double max_violation = 0.0;  // worst predicted state-bound excursion over the run
};

using PlantStepFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// Receding horizon: lift the measured state, solve, apply the first input to
// the true plant, advance one sample.
[[nodiscard]] ClosedLoopResult run_closed_loop(const PlantStepFn& plant_step_fn, double dt,
                                               const LinearPredictor& p, const MpcConfig& cfg,
                                               const Eigen::VectorXd& x0, double duration);

[[nodiscard]] ClosedLoopResult run_closed_loop(const PlantModel& plant, const LinearPredictor& p,
                                               const MpcConfig& cfg, const Eigen::VectorXd& x0,
                                               double duration);

// ============================================================================
// Benchmark scenarios
// ============================================================================

struct Scenario {
  MpcConfig cfg;
  Eigen::VectorXd x0;
  double duration = 6.0;
};

// The tracking setup each plant is evaluated under: weights, horizon, box
// bounds, and a two-level reference switching at mid-run.
[[nodiscard]] Scenario default_scenario(const PlantModel& plant);

}  // namespace kqid
