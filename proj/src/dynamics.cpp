#include "kqid/dynamics.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <stdexcept>

#include "kqid/errors.hpp"
#include "kqid/rng.hpp"

namespace kqid {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kKdvMesh = 128;

Eigen::VectorXd box_vec(int size, double lo, double hi, bool low) {
  return Eigen::VectorXd::Constant(size, low ? lo : hi);
}

}  // namespace

PlantModel make_plant(PlantKind kind, double dt) {
  if (!(dt > 0.0)) throw ConfigError("plant dt must be positive");
  PlantModel p;
  p.kind = kind;
  p.dt = dt;
  switch (kind) {
    case PlantKind::pendulum:
      p.name = "pendulum";
      p.n = 2;
      p.m = 1;
      p.params["damping"] = 0.01;
      p.train_u_lo = box_vec(1, -1.0, 1.0, true);
      p.train_u_hi = box_vec(1, -1.0, 1.0, false);
      p.x0_lo = box_vec(2, -1.0, 1.0, true);
      p.x0_hi = box_vec(2, -1.0, 1.0, false);
      break;
    case PlantKind::vanderpol:
      p.name = "vanderpol";
      p.n = 2;
      p.m = 1;
      p.train_u_lo = box_vec(1, -1.0, 1.0, true);
      p.train_u_hi = box_vec(1, -1.0, 1.0, false);
      p.x0_lo = box_vec(2, -1.0, 1.0, true);
      p.x0_hi = box_vec(2, -1.0, 1.0, false);
      break;
    case PlantKind::motor:
      p.name = "motor";
      p.n = 2;
      p.m = 1;
      p.params["La"] = 0.314;
      p.params["Ra"] = 12.345;
      p.params["km"] = 0.253;
      p.params["J"] = 0.00441;
      p.params["B"] = 0.00732;
      p.params["tau_l"] = 1.47;
      p.params["ua"] = 60.0;
      p.train_u_lo = box_vec(1, -1.0, 1.0, true);
      p.train_u_hi = box_vec(1, -1.0, 1.0, false);
      p.x0_lo = box_vec(2, -1.0, 1.0, true);
      p.x0_hi = box_vec(2, -1.0, 1.0, false);
      break;
    case PlantKind::kdv:
      p.name = "kdv";
      p.n = kKdvMesh;
      p.m = 3;
      p.params["mesh"] = static_cast<double>(kKdvMesh);
      p.train_u_lo = box_vec(3, -1.0, 1.0, true);
      p.train_u_hi = box_vec(3, -1.0, 1.0, false);
      // Initial conditions come from convex combinations of fixed profiles,
      // not a box; the box fields stay empty.
      break;
  }
  return p;
}

PlantKind plant_kind_from_name(const std::string& name) {
  if (name == "pendulum") return PlantKind::pendulum;
  if (name == "vanderpol") return PlantKind::vanderpol;
  if (name == "motor") return PlantKind::motor;
  if (name == "kdv") return PlantKind::kdv;
  throw ConfigError("unknown plant name: " + name);
}

VectorField plant_vector_field(const PlantModel& plant) {
  switch (plant.kind) {
    case PlantKind::pendulum: {
      const double c = plant.params.at("damping");
      return [c](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        Eigen::VectorXd dx(2);
        dx[0] = x[1];
        dx[1] = c * x[1] - std::sin(x[0]) + u[0];
        return dx;
      };
    }
    case PlantKind::vanderpol:
      return [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        Eigen::VectorXd dx(2);
        dx[0] = 2.0 * x[1];
        dx[1] = -0.8 * x[0] + 2.0 * x[1] - 10.0 * x[0] * x[0] * x[1] + u[0];
        return dx;
      };
    case PlantKind::motor: {
      const double La = plant.params.at("La");
      const double Ra = plant.params.at("Ra");
      const double km = plant.params.at("km");
      const double J = plant.params.at("J");
      const double B = plant.params.at("B");
      const double tau_l = plant.params.at("tau_l");
      const double ua = plant.params.at("ua");
      return [=](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        Eigen::VectorXd dx(2);
        dx[0] = (-Ra / La) * x[0] + (-km / La) * x[1] * u[0] + ua / La;
        dx[1] = (-B / J) * x[1] + (km / J) * x[0] * u[0] - tau_l / J;
        return dx;
      };
    }
    case PlantKind::kdv:
      break;
  }
  throw ConfigError("spectral plant has no pointwise vector field");
}

Eigen::VectorXd rk4_step(const VectorField& f, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double dt) {
  const Eigen::VectorXd k1 = f(x, u);
  const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1, u);
  const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2, u);
  const Eigen::VectorXd k4 = f(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::VectorXd plant_step(const PlantModel& plant, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) {
  if (x.size() != plant.n) throw ConfigError("plant_step: state size mismatch");
  if (u.size() != plant.m) throw ConfigError("plant_step: input size mismatch");
  if (plant.kind == PlantKind::kdv) return kdv_step(x, u, plant.dt);
  return rk4_step(plant_vector_field(plant), x, u, plant.dt);
}

namespace {

Eigen::MatrixXd simulate_impl(const std::function<Eigen::VectorXd(const Eigen::VectorXd&,
                                                                  const Eigen::VectorXd&)>& step,
                              const Eigen::VectorXd& x0, const Eigen::MatrixXd& U) {
  const int n = static_cast<int>(x0.size());
  const int T = static_cast<int>(U.cols());
  Eigen::MatrixXd X(n, T + 1);
  X.col(0) = x0;
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd next = step(X.col(t), U.col(t));
    if (!next.allFinite() || next.lpNorm<Eigen::Infinity>() > 1e6) {
      throw NumericError("simulation diverged at step " + std::to_string(t + 1));
    }
    X.col(t + 1) = next;
  }
  return X;
}

}  // namespace

Eigen::MatrixXd simulate(const PlantModel& plant, const Eigen::VectorXd& x0,
                         const Eigen::MatrixXd& U) {
  if (x0.size() != plant.n) throw ConfigError("simulate: x0 size mismatch");
  if (U.rows() != plant.m) throw ConfigError("simulate: input row count mismatch");
  return simulate_impl(
      [&plant](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        return plant_step(plant, x, u);
      },
      x0, U);
}

Eigen::MatrixXd simulate_field(const VectorField& f, const Eigen::VectorXd& x0,
                               const Eigen::MatrixXd& U, double dt) {
  return simulate_impl(
      [&f, dt](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        return rk4_step(f, x, u, dt);
      },
      x0, U);
}

// ---------------------------------------------------------------------------
// Spectral stepper
// ---------------------------------------------------------------------------

namespace {

using Cvec = Eigen::VectorXcd;

// Everything that depends only on (mesh, dt): wavenumbers, the half- and
// full-step integrating factors for the dispersion, the de-aliasing mask and
// the transformed actuation profiles.
struct KdvWorkspace {
  int mesh = 0;
  double dt = 0.0;
  Eigen::VectorXd k;         // signed wavenumbers in FFT order
  Cvec half_ik;              // -i k / 2, advection symbol on the square
  Cvec E1, E2;               // exp(i k^3 dt / 2), exp(i k^3 dt)
  Eigen::VectorXd dealias;   // 1 inside |k| <= mesh/3, else 0
  Eigen::MatrixXcd v_hat;    // actuation profiles in Fourier space
  Eigen::FFT<double> fft;

  void configure(int mesh_, double dt_) {
    if (mesh == mesh_ && dt == dt_) return;
    mesh = mesh_;
    dt = dt_;
    k.resize(mesh);
    for (int j = 0; j < mesh; ++j) k[j] = (j <= mesh / 2) ? j : j - mesh;
    if (mesh % 2 == 0) k[mesh / 2] = 0.0;  // unpaired Nyquist mode carries no derivative
    half_ik.resize(mesh);
    E1.resize(mesh);
    E2.resize(mesh);
    dealias.resize(mesh);
    const double cutoff = static_cast<double>(mesh) / 3.0;
    for (int j = 0; j < mesh; ++j) {
      const double kj = k[j];
      half_ik[j] = std::complex<double>(0.0, -0.5 * kj);
      const double phase = kj * kj * kj * dt;
      E1[j] = std::polar(1.0, 0.5 * phase);
      E2[j] = std::polar(1.0, phase);
      dealias[j] = (std::abs(kj) <= cutoff) ? 1.0 : 0.0;
    }
    const Eigen::MatrixXd v = kdv_forcing_profiles(mesh);
    v_hat.resize(mesh, v.cols());
    Cvec buf(mesh);
    for (int c = 0; c < v.cols(); ++c) {
      Cvec col = v.col(c).cast<std::complex<double>>();
      fft.fwd(buf, col);
      v_hat.col(c) = buf;
    }
  }

  // G(y_hat) = -(i k / 2) F[ (F^{-1} y_hat)^2 ] + sum_i u_i v_hat_i,
  // with the quadratic product de-aliased.
  Cvec nonlinear(const Cvec& y_hat, const Eigen::VectorXd& u) {
    Cvec tmp(mesh), sq_hat(mesh);
    fft.inv(tmp, y_hat);
    for (int j = 0; j < mesh; ++j) {
      const double re = tmp[j].real();
      tmp[j] = std::complex<double>(re * re, 0.0);
    }
    fft.fwd(sq_hat, tmp);
    Cvec out(mesh);
    for (int j = 0; j < mesh; ++j) out[j] = half_ik[j] * dealias[j] * sq_hat[j];
    for (int c = 0; c < v_hat.cols(); ++c) out += u[c] * v_hat.col(c);
    return out;
  }
};

thread_local KdvWorkspace g_kdv_ws;

}  // namespace

Eigen::VectorXd kdv_step(const Eigen::VectorXd& y, const Eigen::VectorXd& u_coeffs, double dt) {
  const int mesh = static_cast<int>(y.size());
  if (mesh < 4) throw ConfigError("kdv_step: mesh too small");
  if (!(dt > 0.0)) throw ConfigError("kdv_step: dt must be positive");
  KdvWorkspace& ws = g_kdv_ws;
  ws.configure(mesh, dt);
  if (u_coeffs.size() != ws.v_hat.cols()) throw ConfigError("kdv_step: input size mismatch");

  Cvec y_hat(mesh);
  {
    Cvec y_c = y.cast<std::complex<double>>();
    ws.fft.fwd(y_hat, y_c);
  }

  // Fourth-order stages in the integrating-factor frame. E1 advances a half
  // step of the dispersion, E2 a full step.
  const Cvec Na = ws.nonlinear(y_hat, u_coeffs);
  Cvec a = ws.E1.cwiseProduct(y_hat + (0.5 * dt) * Na);
  const Cvec Nb = ws.nonlinear(a, u_coeffs);
  Cvec b = ws.E1.cwiseProduct(y_hat) + (0.5 * dt) * Nb;
  const Cvec Nc = ws.nonlinear(b, u_coeffs);
  Cvec c = ws.E2.cwiseProduct(y_hat) + dt * ws.E1.cwiseProduct(Nc);
  const Cvec Nd = ws.nonlinear(c, u_coeffs);

  Cvec y_next = ws.E2.cwiseProduct(y_hat) +
                (dt / 6.0) * (ws.E2.cwiseProduct(Na) + 2.0 * ws.E1.cwiseProduct(Nb + Nc) + Nd);

  // The advection term cannot move the mean, so the k = 0 law is linear in
  // the forcing alone; enforcing it exactly removes roundoff drift.
  std::complex<double> mean_force(0.0, 0.0);
  for (int c0 = 0; c0 < ws.v_hat.cols(); ++c0) mean_force += u_coeffs[c0] * ws.v_hat(0, c0);
  y_next[0] = y_hat[0] + dt * mean_force;

  Cvec out_c(mesh);
  ws.fft.inv(out_c, y_next);
  Eigen::VectorXd out(mesh);
  for (int j = 0; j < mesh; ++j) out[j] = out_c[j].real();
  if (!out.allFinite() || out.lpNorm<Eigen::Infinity>() > 50.0) {
    throw NumericError("spectral step left the resolved regime");
  }
  return out;
}

Eigen::VectorXd kdv_grid(int mesh) {
  if (mesh < 2) throw ConfigError("kdv_grid: mesh too small");
  Eigen::VectorXd x(mesh);
  for (int j = 0; j < mesh; ++j) x[j] = -kPi + 2.0 * kPi * j / mesh;
  return x;
}

Eigen::MatrixXd kdv_forcing_profiles(int mesh) {
  const Eigen::VectorXd x = kdv_grid(mesh);
  const double centers[3] = {-kPi / 2.0, 0.0, kPi / 2.0};
  Eigen::MatrixXd v(mesh, 3);
  for (int c = 0; c < 3; ++c)
    for (int j = 0; j < mesh; ++j) {
      const double d = x[j] - centers[c];
      v(j, c) = std::exp(-25.0 * d * d);
    }
  return v;
}

Eigen::MatrixXd kdv_initial_profiles(int mesh) {
  const Eigen::VectorXd x = kdv_grid(mesh);
  Eigen::MatrixXd y0(mesh, 3);
  for (int j = 0; j < mesh; ++j) {
    const double a = x[j] - kPi / 2.0;
    const double b = x[j] + kPi / 2.0;
    const double s = std::sin(x[j] / 2.0);
    y0(j, 0) = std::exp(-a * a);
    y0(j, 1) = -s * s;
    y0(j, 2) = std::exp(-b * b);
  }
  return y0;
}

std::int64_t TrajectorySet::total_pairs() const {
  std::int64_t total = 0;
  for (const auto& tr : trajectories) total += tr.U.cols();
  return total;
}

TrajectorySet generate_training_set(const PlantModel& plant, int n_traj, int horizon,
                                    std::uint64_t seed) {
  if (n_traj < 1) throw ConfigError("generate_training_set: need at least one trajectory");
  if (horizon < 1) throw ConfigError("generate_training_set: need at least one step");
  TrajectorySet set;
  set.plant_name = plant.name;
  set.dt = plant.dt;
  set.seed = seed;
  set.trajectories.reserve(n_traj);

  const Eigen::MatrixXd y0_profiles =
      (plant.kind == PlantKind::kdv) ? kdv_initial_profiles(plant.n) : Eigen::MatrixXd();

  for (int i = 0; i < n_traj; ++i) {
    RngStream ic_rng(derive_seed(seed, "ic", i));
    RngStream in_rng(derive_seed(seed, "input", i));

    Eigen::VectorXd x0(plant.n);
    if (plant.kind == PlantKind::kdv) {
      // Convex weights over the three profiles via two sorted uniforms.
      double u1 = ic_rng.next_unit();
      double u2 = ic_rng.next_unit();
      if (u1 > u2) std::swap(u1, u2);
      const double w0 = u1, w1 = u2 - u1, w2 = 1.0 - u2;
      x0 = w0 * y0_profiles.col(0) + w1 * y0_profiles.col(1) + w2 * y0_profiles.col(2);
    } else {
      for (int j = 0; j < plant.n; ++j) x0[j] = ic_rng.next_uniform(plant.x0_lo[j], plant.x0_hi[j]);
    }

    Eigen::MatrixXd U(plant.m, horizon);
    for (int t = 0; t < horizon; ++t)
      for (int j = 0; j < plant.m; ++j)
        U(j, t) = in_rng.next_uniform(plant.train_u_lo[j], plant.train_u_hi[j]);

    Trajectory tr;
    tr.U = std::move(U);
    tr.X = simulate(plant, x0, tr.U);
    set.trajectories.push_back(std::move(tr));
  }
  return set;
}

}  // namespace kqid
