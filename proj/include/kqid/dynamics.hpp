#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace kqid {

enum class PlantKind { pendulum, vanderpol, motor, kdv };

// A benchmark plant together with its sampling period and the boxes that
// training excitation and initial conditions are drawn from.
struct PlantModel {
  PlantKind kind = PlantKind::pendulum;
  std::string name;
  int n = 0;
  int m = 0;
  double dt = 0.01;
  std::map<std::string, double> params;
  Eigen::VectorXd train_u_lo, train_u_hi;  // excitation box, per input
  Eigen::VectorXd x0_lo, x0_hi;            // initial-condition box (ODE plants)
};

[[nodiscard]] PlantModel make_plant(PlantKind kind, double dt = 0.01);
[[nodiscard]] PlantKind plant_kind_from_name(const std::string& name);

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// Right-hand side of the plant ODE. The spectral plant has no pointwise
// field; asking for one is an error.
[[nodiscard]] VectorField plant_vector_field(const PlantModel& plant);

// Classical fourth-order step under a zero-order-hold input.
[[nodiscard]] Eigen::VectorXd rk4_step(const VectorField& f, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& u, double dt);

// One sampling period of the plant.
[[nodiscard]] Eigen::VectorXd plant_step(const PlantModel& plant, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& u);

// States under the input sequence; X.col(0) == x0 and X has U.cols()+1
// columns. Throws NumericError naming the step once the state leaves
// [-1e6, 1e6] or goes non-finite.
[[nodiscard]] Eigen::MatrixXd simulate(const PlantModel& plant, const Eigen::VectorXd& x0,
                                       const Eigen::MatrixXd& U);

// Same rollout for an arbitrary field; used by tests and custom plants.
[[nodiscard]] Eigen::MatrixXd simulate_field(const VectorField& f, const Eigen::VectorXd& x0,
                                             const Eigen::MatrixXd& U, double dt);

// ---------------------------------------------------------------------------
// Periodic third-order dispersive plant on [-pi, pi)
// ---------------------------------------------------------------------------
// Pseudo-spectral in space. The dispersion term advances exactly through an
// integrating factor in Fourier space; advection and forcing take a classical
// fourth-order step in the rotated frame. Quadratic products are de-aliased
// by the two-thirds rule. The k = 0 mode carries the spatial mean and only
// the forcing moves it.
[[nodiscard]] Eigen::VectorXd kdv_step(const Eigen::VectorXd& y, const Eigen::VectorXd& u_coeffs,
                                       double dt);

[[nodiscard]] Eigen::VectorXd kdv_grid(int mesh);
// Gaussian actuation profiles exp(-25 (x - c)^2), c in {-pi/2, 0, pi/2}.
[[nodiscard]] Eigen::MatrixXd kdv_forcing_profiles(int mesh);
// The three profiles whose convex combinations seed training rollouts.
[[nodiscard]] Eigen::MatrixXd kdv_initial_profiles(int mesh);

// ---------------------------------------------------------------------------
// Trajectory data
// ---------------------------------------------------------------------------

struct Trajectory {
  Eigen::MatrixXd X;  // n x (T+1)
  Eigen::MatrixXd U;  // m x T
};

struct TrajectorySet {
  std::vector<Trajectory> trajectories;
  std::string plant_name;
  double dt = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::int64_t total_pairs() const;
};

// Random-excitation rollouts. Trajectory i draws its initial condition from
// substream (seed, "ic", i) and its input sequence from (seed, "input", i),
// inputs time-major with the coordinate loop inside.
[[nodiscard]] TrajectorySet generate_training_set(const PlantModel& plant, int n_traj, int horizon,
                                                  std::uint64_t seed);

}  // namespace kqid
