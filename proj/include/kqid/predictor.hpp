#pragma once

#include <Eigen/Dense>

#include "kqid/dynamics.hpp"
#include "kqid/ident.hpp"

namespace kqid {

// Lifted state sequence z_{t+1} = A z_t + B u_t from z0; N x (T+1).
[[nodiscard]] Eigen::MatrixXd rollout_lifted(const LinearPredictor& p, const Eigen::VectorXd& z0,
                                             const Eigen::MatrixXd& U);

// Decoded predictions x_hat_t = C z_t with z0 = lift(x0); n x (T+1).
[[nodiscard]] Eigen::MatrixXd rollout(const LinearPredictor& p, const Eigen::VectorXd& x0,
                                      const Eigen::MatrixXd& U);

struct PredictionRun {
  Eigen::MatrixXd predicted_states;    // n x (T+1)
  Eigen::MatrixXd true_states;         // n x (T+1)
  // ||x_hat_t - x_t|| / ||x_t|| for t = 1..T; NaN marks a skipped step whose
  // true-state norm fell below 1e-9.
  Eigen::VectorXd per_step_rel_error;
};

// Simulates the plant and the predictor under the same input sequence.
[[nodiscard]] PredictionRun make_prediction_run(const PlantModel& plant, const LinearPredictor& p,
                                                const Eigen::VectorXd& x0,
                                                const Eigen::MatrixXd& U);

[[nodiscard]] PredictionRun make_prediction_run(const Eigen::MatrixXd& true_states,
                                                const LinearPredictor& p,
                                                const Eigen::MatrixXd& U);

// Time-averaged relative error over the non-skipped steps.
[[nodiscard]] double prediction_error(const PredictionRun& run, int* skipped = nullptr);

}  // namespace kqid
