#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "kqid/dynamics.hpp"
#include "kqid/errors.hpp"

using namespace kqid;

namespace {

// Test-side copies of the benchmark vector fields. A drift in the library
// implementations shows up as a mismatch against these.
Eigen::VectorXd pendulum_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  Eigen::VectorXd dx(2);
  dx << x[1], 0.01 * x[1] - std::sin(x[0]) + u[0];
  return dx;
}

Eigen::VectorXd vanderpol_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  Eigen::VectorXd dx(2);
  dx << 2.0 * x[1], -0.8 * x[0] + 2.0 * x[1] - 10.0 * x[0] * x[0] * x[1] + u[0];
  return dx;
}

Eigen::VectorXd motor_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  const double La = 0.314, Ra = 12.345, km = 0.253;
  const double J = 0.00441, B = 0.00732, tau_l = 1.47, ua = 60.0;
  Eigen::VectorXd dx(2);
  dx[0] = -(Ra / La) * x[0] - (km / La) * x[1] * u[0] + ua / La;
  dx[1] = -(B / J) * x[1] + (km / J) * x[0] * u[0] - tau_l / J;
  return dx;
}

}  // namespace

TEST_CASE("plant fields match independent implementations at sample points") {
  Eigen::VectorXd u(1);
  const double pts[][2] = {{0.3, -0.7}, {-1.1, 0.4}, {0.0, 0.0}, {0.9, 0.9}};
  for (auto& p : pts) {
    Eigen::VectorXd x(2);
    x << p[0], p[1];
    u << 0.37;
    for (auto kind : {PlantKind::pendulum, PlantKind::vanderpol, PlantKind::motor}) {
      VectorField f = plant_vector_field(make_plant(kind));
      Eigen::VectorXd want = kind == PlantKind::pendulum  ? pendulum_rhs(x, u)
                             : kind == PlantKind::vanderpol ? vanderpol_rhs(x, u)
                                                            : motor_rhs(x, u);
      CHECK((f(x, u) - want).lpNorm<Eigen::Infinity>() <= 1e-14 * want.lpNorm<Eigen::Infinity>());
    }
  }
}

TEST_CASE("plant names round trip and unknown names are rejected") {
  for (auto kind : {PlantKind::pendulum, PlantKind::vanderpol, PlantKind::motor, PlantKind::kdv}) {
    PlantModel p = make_plant(kind);
    CHECK(plant_kind_from_name(p.name) == kind);
  }
  CHECK_THROWS_AS((void)plant_kind_from_name("lorenz"), ConfigError);
}

TEST_CASE("the spectral plant has no pointwise field") {
  CHECK_THROWS_AS((void)plant_vector_field(make_plant(PlantKind::kdv)), ConfigError);
}

TEST_CASE("rk4 converges at fourth order on a nonlinear problem") {
  // x' = x^2, x(0) = 1 has solution 1/(1-t).
  VectorField f = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, x[0] * x[0]).eval();
  };
  Eigen::VectorXd u(0);
  auto run = [&](int steps) {
    Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
    const double dt = 0.5 / steps;
    for (int i = 0; i < steps; ++i) x = rk4_step(f, x, u, dt);
    return std::abs(x[0] - 2.0);
  };
  const double e1 = run(32), e2 = run(64);
  const double order = std::log2(e1 / e2);
  CHECK(order > 3.8);
  CHECK(order < 4.3);
}

TEST_CASE("the inverted damping term feeds energy into the pendulum") {
  PlantModel p = make_plant(PlantKind::pendulum);
  Eigen::VectorXd x0(2);
  x0 << 0.5, 0.0;
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(1, 5000);
  Eigen::MatrixXd X = simulate(p, x0, U);
  auto energy = [](const Eigen::VectorXd& x) {
    return 0.5 * x[1] * x[1] + (1.0 - std::cos(x[0]));
  };
  CHECK(energy(X.col(5000)) > 1.2 * energy(X.col(0)));
}

TEST_CASE("simulate stacks states next to the input sequence") {
  PlantModel p = make_plant(PlantKind::vanderpol);
  Eigen::VectorXd x0(2);
  x0 << 0.2, -0.1;
  Eigen::MatrixXd U = Eigen::MatrixXd::Random(1, 10) * 0.5;
  Eigen::MatrixXd X = simulate(p, x0, U);
  REQUIRE(X.rows() == 2);
  REQUIRE(X.cols() == 11);
  CHECK((X.col(0) - x0).norm() == 0.0);
  for (int t = 0; t < 10; ++t) {
    CHECK((X.col(t + 1) - plant_step(p, X.col(t), U.col(t))).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("simulate_field matches simulate through the plant field") {
  PlantModel p = make_plant(PlantKind::motor);
  Eigen::VectorXd x0(2);
  x0 << 4.0, 0.0;
  Eigen::MatrixXd U = Eigen::MatrixXd::Random(1, 8) * 0.4;
  Eigen::MatrixXd a = simulate(p, x0, U);
  Eigen::MatrixXd b = simulate_field(plant_vector_field(p), x0, U, p.dt);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("a diverging rollout raises a numeric error naming no silent state") {
  VectorField f = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, x[0] * x[0]).eval();
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 2.0);
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(0, 10);
  CHECK_THROWS_AS((void)simulate_field(f, x0, U, 1.0), NumericError);
}

TEST_CASE("spectral grid spans one period uniformly") {
  Eigen::VectorXd g = kdv_grid(128);
  REQUIRE(g.size() == 128);
  CHECK(g[0] == doctest::Approx(-M_PI).epsilon(1e-15));
  const double h = 2.0 * M_PI / 128;
  for (int i = 1; i < 128; ++i) CHECK(g[i] - g[i - 1] == doctest::Approx(h).epsilon(1e-13));
  CHECK(g[127] == doctest::Approx(M_PI - h).epsilon(1e-13));
}

TEST_CASE("forcing profiles are the three stated gaussians") {
  const int mesh = 64;
  Eigen::VectorXd g = kdv_grid(mesh);
  Eigen::MatrixXd F = kdv_forcing_profiles(mesh);
  REQUIRE(F.rows() == mesh);
  REQUIRE(F.cols() == 3);
  const double c[3] = {-M_PI / 2, 0.0, M_PI / 2};
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < mesh; ++i) {
      const double d = g[i] - c[j];
      CHECK(F(i, j) == doctest::Approx(std::exp(-25.0 * d * d)).epsilon(1e-13));
    }
  }
}

TEST_CASE("unforced spectral steps conserve the spatial mean") {
  const int mesh = 128;
  Eigen::VectorXd y = kdv_initial_profiles(mesh).col(0);
  const double m0 = y.mean();
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(3);
  for (int t = 0; t < 200; ++t) y = kdv_step(y, u0, 0.01);
  CHECK(std::abs(y.mean() - m0) < 1e-12);
}

TEST_CASE("forcing moves the spatial mean by exactly its own mean") {
  const int mesh = 128;
  Eigen::VectorXd y = kdv_initial_profiles(mesh).col(1);
  Eigen::VectorXd u(3);
  u << 0.3, -0.2, 0.5;
  const double dt = 0.01;
  const double gain = (kdv_forcing_profiles(mesh) * u).mean();
  double m = y.mean();
  for (int t = 0; t < 50; ++t) {
    y = kdv_step(y, u, dt);
    m += dt * gain;
  }
  CHECK(y.mean() == doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("a spectral state outside the safety box is rejected") {
  Eigen::VectorXd y = Eigen::VectorXd::Constant(128, 60.0);
  CHECK_THROWS_AS((void)kdv_step(y, Eigen::VectorXd::Zero(3), 0.01), NumericError);
}

TEST_CASE("training sets are reproducible and respect the excitation boxes") {
  PlantModel p = make_plant(PlantKind::pendulum);
  TrajectorySet a = generate_training_set(p, 3, 50, 9);
  TrajectorySet b = generate_training_set(p, 3, 50, 9);
  TrajectorySet c = generate_training_set(p, 3, 50, 10);
  REQUIRE(a.trajectories.size() == 3);
  CHECK(a.total_pairs() == 150);
  CHECK(a.plant_name == p.name);
  CHECK(a.dt == p.dt);
  double diff = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Trajectory& t = a.trajectories[static_cast<std::size_t>(i)];
    REQUIRE(t.X.rows() == 2);
    REQUIRE(t.X.cols() == 51);
    REQUIRE(t.U.rows() == 1);
    REQUIRE(t.U.cols() == 50);
    CHECK((t.X - b.trajectories[static_cast<std::size_t>(i)].X).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((t.U - b.trajectories[static_cast<std::size_t>(i)].U).lpNorm<Eigen::Infinity>() == 0.0);
    diff += (t.X - c.trajectories[static_cast<std::size_t>(i)].X).lpNorm<Eigen::Infinity>();
    for (int k = 0; k < 2; ++k) {
      CHECK(t.X(k, 0) >= p.x0_lo[k]);
      CHECK(t.X(k, 0) <= p.x0_hi[k]);
    }
    CHECK(t.U.minCoeff() >= p.train_u_lo[0]);
    CHECK(t.U.maxCoeff() <= p.train_u_hi[0]);
  }
  CHECK(diff > 0.0);
}

TEST_CASE("spectral training rollouts carry the full mesh state") {
  PlantModel p = make_plant(PlantKind::kdv);
  CHECK(p.n == 128);
  CHECK(p.m == 3);
  TrajectorySet s = generate_training_set(p, 2, 20, 4);
  for (const Trajectory& t : s.trajectories) {
    REQUIRE(t.X.rows() == 128);
    REQUIRE(t.X.cols() == 21);
    REQUIRE(t.U.rows() == 3);
    CHECK(t.U.minCoeff() >= -1.0);
    CHECK(t.U.maxCoeff() <= 1.0);
    CHECK(t.X.allFinite());
  }
}
