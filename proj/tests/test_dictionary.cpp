#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "kqid/dictionary.hpp"
#include "kqid/rng.hpp"

using namespace kqid;

TEST_CASE("identity dictionary is the state itself") {
  Dictionary d = make_identity_dictionary(3);
  CHECK(d.N == 3);
  Eigen::VectorXd x(3);
  x << 1.5, -2.0, 0.25;
  CHECK((d.lift(x) - x).norm() == 0.0);
}

TEST_CASE("thin plate dictionary stacks state over one observable per center") {
  Eigen::MatrixXd centers = draw_centers(2, 100, -1.0, 1.0, 99);
  Dictionary d = make_tps_dictionary(2, centers);
  CHECK(d.N == 102);
  Eigen::VectorXd x(2);
  x << 0.3, -0.7;
  Eigen::VectorXd z = d.lift(x);
  REQUIRE(z.size() == 102);
  CHECK(z[0] == x[0]);
  CHECK(z[1] == x[1]);
  for (int c = 0; c < 100; ++c) {
    const double r2 = (x - centers.col(c)).squaredNorm();
    CHECK(z[2 + c] == doctest::Approx(tps_value(r2)).epsilon(1e-14));
  }
}

TEST_CASE("thin plate value matches its closed form and vanishes at the center") {
  CHECK(tps_value(0.0) == 0.0);
  // r^2 log r = (r^2/2) log r^2
  CHECK(tps_value(4.0) == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(tps_value(1.0) == 0.0);
  const double r2 = 0.3;
  CHECK(tps_value(r2) == doctest::Approx(0.5 * r2 * std::log(r2)).epsilon(1e-14));

  Eigen::MatrixXd centers(2, 1);
  centers << 0.4, -0.2;
  Dictionary d = make_tps_dictionary(2, centers);
  CHECK(d.lift(centers.col(0))[2] == 0.0);
}

TEST_CASE("kdv dictionary lists per node monomials then the constant") {
  const int mesh = 4;
  Dictionary d = make_kdv_dictionary(mesh);
  CHECK(d.N == 3 * mesh + 1);
  Eigen::VectorXd y(mesh);
  y << 0.5, -1.0, 2.0, 0.25;
  Eigen::VectorXd z = d.lift(y);
  REQUIRE(z.size() == 13);
  for (int i = 0; i < mesh; ++i) {
    CHECK(z[i] == y[i]);
    CHECK(z[mesh + i] == doctest::Approx(y[i] * y[i]).epsilon(1e-15));
    CHECK(z[2 * mesh + i] == doctest::Approx(y[i] * y[(i + 1) % mesh]).epsilon(1e-15));
  }
  CHECK(z[12] == 1.0);
}

TEST_CASE("lift_batch agrees with lifting column by column") {
  Eigen::MatrixXd centers = draw_centers(2, 7, -1.0, 1.0, 5);
  Dictionary d = make_tps_dictionary(2, centers);
  RngStream rng(17);
  Eigen::MatrixXd X(2, 12);
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 2; ++i) X(i, j) = rng.next_symmetric(1.0);
  Eigen::MatrixXd Z = d.lift_batch(X);
  REQUIRE(Z.rows() == d.N);
  REQUIRE(Z.cols() == 12);
  for (int j = 0; j < 12; ++j) CHECK((Z.col(j) - d.lift(X.col(j))).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("center draws are deterministic in the seed and stay in the box") {
  Eigen::MatrixXd a = draw_centers(3, 50, -0.5, 0.75, 1234);
  Eigen::MatrixXd b = draw_centers(3, 50, -0.5, 0.75, 1234);
  Eigen::MatrixXd c = draw_centers(3, 50, -0.5, 0.75, 1235);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a - c).lpNorm<Eigen::Infinity>() != 0.0);
  CHECK(a.minCoeff() >= -0.5);
  CHECK(a.maxCoeff() <= 0.75);
}

TEST_CASE("row quantizers span the widened empirical range") {
  Eigen::MatrixXd rows(2, 4);
  rows << 0.0, 1.0, 0.5, 0.25,  //
      -2.0, 2.0, 0.0, 1.0;
  std::vector<QuantizerSpec> q = quantizers_from_rows(rows, 6, 0.05);
  REQUIRE(q.size() == 2);
  CHECK(q[0].x_min == doctest::Approx(-0.05));
  CHECK(q[0].x_max == doctest::Approx(1.05));
  CHECK(q[1].x_min == doctest::Approx(-2.2));
  CHECK(q[1].x_max == doctest::Approx(2.2));
  CHECK(q[0].resolution_eps == doctest::Approx(1.1 / 64));
}

TEST_CASE("a constant row quantizes around its value with unit width") {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(1, 10, 3.0);
  std::vector<QuantizerSpec> q = quantizers_from_rows(rows, 4, 0.05);
  CHECK(q[0].x_max - q[0].x_min == doctest::Approx(1.0));
  CHECK(0.5 * (q[0].x_min + q[0].x_max) == doctest::Approx(3.0));
}

TEST_CASE("quantizers_from_ranges matches the row construction") {
  Eigen::VectorXd lo(2), hi(2);
  lo << 0.0, -2.0;
  hi << 1.0, 2.0;
  std::vector<QuantizerSpec> q = quantizers_from_ranges(lo, hi, 6, 0.05);
  Eigen::MatrixXd rows(2, 2);
  rows << 0.0, 1.0, -2.0, 2.0;
  std::vector<QuantizerSpec> r = quantizers_from_rows(rows, 6, 0.05);
  for (int i = 0; i < 2; ++i) {
    CHECK(q[static_cast<std::size_t>(i)].x_min == r[static_cast<std::size_t>(i)].x_min);
    CHECK(q[static_cast<std::size_t>(i)].x_max == r[static_cast<std::size_t>(i)].x_max);
  }
}

TEST_CASE("quantized lifting equals lifting then quantizing coordinate wise") {
  Eigen::MatrixXd centers = draw_centers(2, 5, -1.0, 1.0, 8);
  Dictionary d = make_tps_dictionary(2, centers);
  Eigen::VectorXd x(2);
  x << 0.2, -0.6;
  Eigen::VectorXd z = d.lift(x);
  std::vector<QuantizerSpec> q = quantizers_from_rows(z, 8, 0.05);
  DitherStream s1(3);
  DitherStream s2(3);
  Eigen::VectorXd a = lift_quantized_observables(d, x, q, s1);
  Eigen::VectorXd b = dither_quantize_vector(q, z, s2);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);

  QuantizerSpec shared = build_quantizer(-4.0, 4.0, 8);
  DitherStream s3(4);
  DitherStream s4(4);
  Eigen::VectorXd c = lift_quantized_observables(d, x, shared, s3);
  Eigen::VectorXd e = dither_quantize_vector(shared, z, s4);
  CHECK((c - e).lpNorm<Eigen::Infinity>() == 0.0);
}
