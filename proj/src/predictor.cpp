#include "kqid/predictor.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "kqid/errors.hpp"

namespace kqid {

namespace {
constexpr double kSkipNormFloor = 1e-9;
}

Eigen::MatrixXd rollout_lifted(const LinearPredictor& p, const Eigen::VectorXd& z0,
                               const Eigen::MatrixXd& U) {
  if (z0.size() != p.A.rows()) throw ConfigError("rollout: z0 size mismatch");
  if (U.rows() != p.B.cols()) throw ConfigError("rollout: input row count mismatch");
  const Eigen::Index T = U.cols();
  Eigen::MatrixXd Z(p.A.rows(), T + 1);
  Z.col(0) = z0;
  for (Eigen::Index t = 0; t < T; ++t) {
    Z.col(t + 1).noalias() = p.A * Z.col(t);
    Z.col(t + 1).noalias() += p.B * U.col(t);
    if (!Z.col(t + 1).allFinite())
      throw NumericError("rollout diverged at step " + std::to_string(t + 1));
  }
  return Z;
}

Eigen::MatrixXd rollout(const LinearPredictor& p, const Eigen::VectorXd& x0,
                        const Eigen::MatrixXd& U) {
  if (p.C.size() == 0) throw ConfigError("rollout: predictor has no decoder");
  const Eigen::MatrixXd Z = rollout_lifted(p, p.dict.lift(x0), U);
  return p.C * Z;
}

namespace {

PredictionRun build_run(const Eigen::MatrixXd& truth, const LinearPredictor& p,
                        const Eigen::MatrixXd& U) {
  if (truth.cols() != U.cols() + 1) throw ConfigError("prediction run: state/input length mismatch");
  PredictionRun run;
  run.true_states = truth;
  run.predicted_states = rollout(p, truth.col(0), U);
  const Eigen::Index T = U.cols();
  run.per_step_rel_error.resize(T);
  for (Eigen::Index t = 1; t <= T; ++t) {
    const double denom = truth.col(t).norm();
    run.per_step_rel_error[t - 1] =
        (denom < kSkipNormFloor) ? std::numeric_limits<double>::quiet_NaN()
                                 : (run.predicted_states.col(t) - truth.col(t)).norm() / denom;
  }
  return run;
}

}  // namespace

PredictionRun make_prediction_run(const PlantModel& plant, const LinearPredictor& p,
                                  const Eigen::VectorXd& x0, const Eigen::MatrixXd& U) {
  return build_run(simulate(plant, x0, U), p, U);
}

PredictionRun make_prediction_run(const Eigen::MatrixXd& true_states, const LinearPredictor& p,
                                  const Eigen::MatrixXd& U) {
  return build_run(true_states, p, U);
}

double prediction_error(const PredictionRun& run, int* skipped) {
  double sum = 0.0;
  int used = 0, skip = 0;
  for (Eigen::Index t = 0; t < run.per_step_rel_error.size(); ++t) {
    const double e = run.per_step_rel_error[t];
    if (std::isnan(e)) {
      ++skip;
    } else {
      sum += e;
      ++used;
    }
  }
  if (skipped) *skipped = skip;
  if (used == 0) throw NumericError("prediction_error: every step had a near-zero true state");
  return sum / used;
}

}  // namespace kqid
