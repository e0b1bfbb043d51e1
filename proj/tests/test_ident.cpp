#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <utility>

#include "doctest.h"
#include "kqid/dynamics.hpp"
#include "kqid/ident.hpp"
#include "kqid/rng.hpp"

using namespace kqid;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed);
  Eigen::MatrixXd M(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) M(i, j) = rng.next_symmetric(scale);
  return M;
}

SnapshotSet raw_snapshots(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& U,
                          const Eigen::MatrixXd& PhiPlus) {
  SnapshotSet s;
  s.Phi = Phi;
  s.U = U;
  s.PhiPlus = PhiPlus;
  return s;
}

Eigen::MatrixXd joint(const LinearPredictor& p) {
  Eigen::MatrixXd G(p.A.rows(), p.A.cols() + p.B.cols());
  G << p.A, p.B;
  return G;
}

}  // namespace

TEST_CASE("least squares fit matches the normal equations on full rank data") {
  const int N = 5, m = 2, T = 300;
  Eigen::MatrixXd Phi = random_matrix(N, T, 1);
  Eigen::MatrixXd U = random_matrix(m, T, 2);
  Eigen::MatrixXd PhiPlus = random_matrix(N, T, 3);
  SnapshotSet s = raw_snapshots(Phi, U, PhiPlus);

  Eigen::MatrixXd Psi = s.Psi();
  Eigen::MatrixXd G_ref =
      (PhiPlus * Psi.transpose()) * (Psi * Psi.transpose()).ldlt().solve(
                                        Eigen::MatrixXd::Identity(N + m, N + m));
  auto [p, report] = edmd_fit(s);
  CHECK((joint(p) - G_ref).norm() <= 1e-9 * G_ref.norm());
  CHECK(report.rank_used == N + m);
  CHECK(report.condition_estimate >= 1.0);

  // The reported residual is the root mean square over columns.
  const double rms =
      std::sqrt((PhiPlus - p.A * Phi - p.B * U).squaredNorm() / static_cast<double>(T));
  CHECK(report.residual_rms == doctest::Approx(rms).epsilon(1e-12));
}

TEST_CASE("data generated by a linear map is recovered exactly") {
  const int N = 4, m = 1, T = 120;
  Eigen::MatrixXd A0 = random_matrix(N, N, 7, 0.4);
  Eigen::MatrixXd B0 = random_matrix(N, m, 8);
  Eigen::MatrixXd Phi = random_matrix(N, T, 9);
  Eigen::MatrixXd U = random_matrix(m, T, 10);
  SnapshotSet s = raw_snapshots(Phi, U, A0 * Phi + B0 * U);
  auto [p, report] = edmd_fit(s);
  CHECK((p.A - A0).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((p.B - B0).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(report.residual_rms < 1e-10);
}

TEST_CASE("rank deficient regressors give the minimum norm solution") {
  // With Phi row 2 equal to row 0 plus row 1, w = (1, 1, -1, 0) spans the
  // regressor column complement; the minimum-norm estimate must kill it.
  const int T = 60;
  Eigen::MatrixXd Phi = random_matrix(3, T, 21);
  Phi.row(2) = Phi.row(0) + Phi.row(1);
  Eigen::MatrixXd U = random_matrix(1, T, 22);
  Eigen::MatrixXd PhiPlus = random_matrix(3, T, 23);
  auto [p, report] = edmd_fit(raw_snapshots(Phi, U, PhiPlus));
  Eigen::VectorXd w(4);
  w << 1, 1, -1, 0;
  Eigen::MatrixXd G = joint(p);
  CHECK((G * w).lpNorm<Eigen::Infinity>() <= 1e-9 * G.norm());
  CHECK(report.rank_used == 3);
}

TEST_CASE("ridge at zero equals least squares and shrinks monotonically") {
  const int N = 4, m = 1, T = 250;
  SnapshotSet s = raw_snapshots(random_matrix(N, T, 31), random_matrix(m, T, 32),
                                random_matrix(N, T, 33));
  auto [pls, r0] = edmd_fit(s);
  auto [p0, rr] = ridge_fit(s, 0.0);
  CHECK((joint(p0) - joint(pls)).norm() <= 1e-9 * joint(pls).norm());
  CHECK(rr.regularizer_lambda == 0.0);

  auto [pa, ra] = ridge_fit(s, 1e-3);
  auto [pb, rb] = ridge_fit(s, 1e-1);
  CHECK(joint(pa).norm() < joint(pls).norm());
  CHECK(joint(pb).norm() < joint(pa).norm());
  CHECK(ra.regularizer_lambda == 1e-3);
}

TEST_CASE("scalar ridge has the textbook closed form") {
  const int T = 40;
  Eigen::MatrixXd Phi = random_matrix(1, T, 41);
  Eigen::MatrixXd PhiPlus = random_matrix(1, T, 42);
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(1, T);
  const double lambda = 0.05;
  auto [p, report] = ridge_fit(raw_snapshots(Phi, U, PhiPlus), lambda);
  const double g = (Phi * Phi.transpose())(0, 0);
  const double c = (PhiPlus * Phi.transpose())(0, 0);
  CHECK(p.A(0, 0) == doctest::Approx(c / (g + T * lambda)).epsilon(1e-12));
  CHECK(p.B(0, 0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("streaming normal equations reproduce the direct fits") {
  const int N = 4, m = 2, T = 200;
  Eigen::MatrixXd Phi = random_matrix(N, T, 51);
  Eigen::MatrixXd U = random_matrix(m, T, 52);
  Eigen::MatrixXd PhiPlus = random_matrix(N, T, 53);
  SnapshotSet s = raw_snapshots(Phi, U, PhiPlus);

  GramAccumulator acc(N, m);
  acc.add_block(Phi, U, PhiPlus);
  CHECK(acc.count() == T);

  GramAccumulator one(N, m);
  for (int t = 0; t < T; ++t) one.add(Phi.col(t), U.col(t), PhiPlus.col(t));
  CHECK((acc.psi_gram() - one.psi_gram()).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((acc.cross() - one.cross()).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(acc.target_sq() == doctest::Approx(one.target_sq()).epsilon(1e-12));

  auto [pg, rg] = acc.fit(0.0);
  auto [pd, rd] = edmd_fit(s);
  CHECK((joint(pg) - joint(pd)).norm() <= 1e-8 * joint(pd).norm());
  CHECK(rg.residual_rms == doctest::Approx(rd.residual_rms).epsilon(1e-6));

  auto [pgr, rgr] = acc.fit(0.01);
  auto [pdr, rdr] = ridge_fit(s, 0.01);
  CHECK((joint(pgr) - joint(pdr)).norm() <= 1e-8 * joint(pdr).norm());
  CHECK(rgr.residual_rms == doctest::Approx(rdr.residual_rms).epsilon(1e-6));
}

TEST_CASE("estimate gaps are plain relative Frobenius distances") {
  LinearPredictor ref, other;
  ref.A = Eigen::MatrixXd::Identity(2, 2);
  ref.B = Eigen::MatrixXd::Zero(2, 1);
  ref.B << 1, 1;
  other.A = ref.A;
  other.A(0, 1) = 0.3;
  other.B = ref.B;
  other.B(1, 0) = 1.4;
  GapReport gap = estimate_gap(ref, other);
  CHECK(gap.relA == doctest::Approx(0.3 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(gap.relB == doctest::Approx(0.4 / std::sqrt(2.0)).epsilon(1e-12));
  const double num = std::sqrt(0.3 * 0.3 + 0.4 * 0.4);
  CHECK(gap.relG == doctest::Approx(num / 2.0).epsilon(1e-12));
}

TEST_CASE("the mismatch cap has its scalar closed form and matches the gram route") {
  const double eps = 0.2;
  const double kappa = eps * eps / 12.0;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Constant(1, 1, 500.0);
  const std::int64_t T = 1000;  // sigma^2 = 0.5
  CHECK(mismatch_bound_from_gram(gram, T, eps) ==
        doctest::Approx(kappa / (0.5 + kappa)).epsilon(1e-12));

  Eigen::MatrixXd Phi = random_matrix(2, 300, 61);
  Eigen::MatrixXd U = random_matrix(1, 300, 62);
  SnapshotSet s = raw_snapshots(Phi, U, random_matrix(2, 300, 63));
  Eigen::MatrixXd Psi = s.Psi();
  CHECK(mismatch_bound(s, eps) ==
        doctest::Approx(mismatch_bound_from_gram(Psi * Psi.transpose(), 300, eps)).epsilon(1e-12));
}

TEST_CASE("more training data tightens the mismatch cap") {
  PlantModel plant = make_plant(PlantKind::pendulum);
  Dictionary dict = make_identity_dictionary(2);
  QuantSetup setup;  // raw data
  TrajectorySet small = generate_training_set(plant, 1, 500, 77);
  TrajectorySet large = generate_training_set(plant, 6, 500, 77);
  const double b_small = mismatch_bound(assemble_snapshots(small, dict, setup, 1), 0.1);
  const double b_large = mismatch_bound(assemble_snapshots(large, dict, setup, 1), 0.1);
  CHECK(b_large < b_small);
}

TEST_CASE("decoders select or regress the state out of the lift") {
  Eigen::MatrixXd S = state_selector_decoder(2, 5);
  REQUIRE(S.rows() == 2);
  REQUIRE(S.cols() == 5);
  CHECK((S.leftCols(2) - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
  CHECK(S.rightCols(3).norm() == 0.0);

  Eigen::MatrixXd C0 = random_matrix(2, 4, 71);
  Eigen::MatrixXd Phi = random_matrix(4, 100, 72);
  CHECK((fit_decoder(C0 * Phi, Phi) - C0).lpNorm<Eigen::Infinity>() < 1e-10);

  Dictionary dict = make_identity_dictionary(2);
  LinearPredictor p = make_predictor(dict, Eigen::MatrixXd::Identity(2, 2),
                                     Eigen::MatrixXd::Zero(2, 1));
  CHECK((p.C - state_selector_decoder(2, 2)).norm() == 0.0);
  CHECK(p.dict.kind == DictionaryKind::identity);
}

TEST_CASE("snapshot assembly never pairs across a trajectory boundary") {
  TrajectorySet data;
  data.plant_name = "pendulum";
  data.dt = 0.01;
  for (int k = 0; k < 2; ++k) {
    Trajectory t;
    t.X = random_matrix(2, 6, 80 + static_cast<std::uint64_t>(k));
    t.U = random_matrix(1, 5, 90 + static_cast<std::uint64_t>(k));
    data.trajectories.push_back(t);
  }
  Dictionary dict = make_identity_dictionary(2);
  QuantSetup setup;
  SnapshotSet s = assemble_snapshots(data, dict, setup, 0);
  REQUIRE(s.T() == 10);
  for (int k = 0; k < 2; ++k) {
    const Trajectory& t = data.trajectories[static_cast<std::size_t>(k)];
    for (int j = 0; j < 5; ++j) {
      const int col = 5 * k + j;
      CHECK((s.Phi.col(col) - t.X.col(j)).norm() == 0.0);
      CHECK((s.PhiPlus.col(col) - t.X.col(j + 1)).norm() == 0.0);
      CHECK((s.U.col(col) - t.U.col(j)).norm() == 0.0);
      CHECK((s.X.col(col) - t.X.col(j)).norm() == 0.0);
      CHECK((s.XPlus.col(col) - t.X.col(j + 1)).norm() == 0.0);
    }
  }
}

TEST_CASE("each sample is quantized once unless fresh dither is requested") {
  PlantModel plant = make_plant(PlantKind::pendulum);
  TrajectorySet data = generate_training_set(plant, 1, 40, 3);
  Dictionary dict = make_identity_dictionary(2);
  QuantSetup setup;
  setup.mode = QuantMode::state_input;
  setup.word_length_b = 6;

  SnapshotSet once = assemble_snapshots(data, dict, setup, 5);
  // Interior samples appear as the next value of one pair and the current
  // value of the following pair; sharing the draw makes those columns equal.
  for (int t = 0; t + 1 < once.T(); ++t) {
    CHECK((once.PhiPlus.col(t) - once.Phi.col(t + 1)).norm() == 0.0);
  }

  setup.requantize_appearances = true;
  SnapshotSet fresh = assemble_snapshots(data, dict, setup, 5);
  double max_gap = 0.0;
  for (int t = 0; t + 1 < fresh.T(); ++t) {
    max_gap = std::max(max_gap, (fresh.PhiPlus.col(t) - fresh.Phi.col(t + 1)).norm());
  }
  CHECK(max_gap > 0.0);
}

TEST_CASE("quantized assembly is seed deterministic and leaves raw states intact") {
  PlantModel plant = make_plant(PlantKind::pendulum);
  TrajectorySet data = generate_training_set(plant, 2, 30, 3);
  Dictionary dict = make_identity_dictionary(2);
  QuantSetup setup;
  setup.mode = QuantMode::state_input;
  setup.word_length_b = 5;

  SnapshotSet a = assemble_snapshots(data, dict, setup, 11);
  SnapshotSet b = assemble_snapshots(data, dict, setup, 11);
  SnapshotSet c = assemble_snapshots(data, dict, setup, 12);
  CHECK((a.Phi - b.Phi).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.U - b.U).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.Phi - c.Phi).lpNorm<Eigen::Infinity>() != 0.0);
  CHECK(a.dither_seed == 11);

  SnapshotSet raw = assemble_snapshots(data, dict, QuantSetup{}, 11);
  CHECK((a.X - raw.X).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.XPlus - raw.XPlus).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.Phi - raw.Phi).lpNorm<Eigen::Infinity>() != 0.0);
  CHECK(a.state_quantizers.size() == 2);
  CHECK(a.input_quantizers.size() == 1);
}

TEST_CASE("a narrow shared range saturates and the counter says so") {
  PlantModel plant = make_plant(PlantKind::pendulum);
  TrajectorySet data = generate_training_set(plant, 1, 50, 6);
  Dictionary dict = make_identity_dictionary(2);
  QuantSetup setup;
  setup.mode = QuantMode::state_input;
  setup.word_length_b = 8;
  setup.has_shared_range = true;
  setup.shared_lo = -0.05;
  setup.shared_hi = 0.05;
  SnapshotSet s = assemble_snapshots(data, dict, setup, 2);
  CHECK(s.saturation_count > 0);

  setup.shared_lo = -10.0;
  setup.shared_hi = 10.0;
  CHECK(assemble_snapshots(data, dict, setup, 2).saturation_count == 0);
}

TEST_CASE("observable quantization inflates the regressor gram by its noise floor") {
  // Quantizing every regressor coordinate with a shared resolution adds
  // eps^2/12 to each diagonal Gram entry in expectation and nothing off the
  // diagonal. Checked within a few standard errors at large T.
  const int T = 50000;
  RngStream rng(404);
  TrajectorySet data;
  data.plant_name = "scalar";
  data.dt = 0.01;
  Trajectory tr;
  tr.X.resize(1, T + 1);
  tr.U.resize(1, T);
  for (int t = 0; t <= T; ++t) tr.X(0, t) = rng.next_uniform(-0.9, 0.9);
  for (int t = 0; t < T; ++t) tr.U(0, t) = rng.next_uniform(-0.9, 0.9);
  data.trajectories.push_back(tr);

  Dictionary dict = make_identity_dictionary(1);
  QuantSetup raw_setup;
  QuantSetup qsetup;
  qsetup.mode = QuantMode::observable;
  qsetup.word_length_b = 3;
  qsetup.has_shared_range = true;
  qsetup.shared_lo = -1.0;
  qsetup.shared_hi = 1.0;

  SnapshotSet raw = assemble_snapshots(data, dict, raw_setup, 1);
  SnapshotSet q = assemble_snapshots(data, dict, qsetup, 1);
  REQUIRE(q.observable_quantizers.size() == 1);
  const double eps = q.observable_quantizers[0].resolution_eps;
  CHECK(eps == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q.input_quantizers[0].resolution_eps == doctest::Approx(eps).epsilon(1e-15));

  Eigen::MatrixXd Pr = raw.Psi(), Pq = q.Psi();
  Eigen::MatrixXd D = (Pq * Pq.transpose() - Pr * Pr.transpose()) / static_cast<double>(T);
  const double floor = eps * eps / 12.0;
  CHECK(std::abs(D(0, 0) - floor) < 0.002);
  CHECK(std::abs(D(1, 1) - floor) < 0.002);
  CHECK(std::abs(D(0, 1)) < 0.001);
  CHECK(std::abs(D(1, 0)) < 0.001);
}
