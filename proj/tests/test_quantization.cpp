#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "kqid/errors.hpp"
#include "kqid/quantization.hpp"
#include "kqid/rng.hpp"

using namespace kqid;

TEST_CASE("resolution is the range over the cell count, exact in binary") {
  QuantizerSpec q = build_quantizer(-0.8, 0.8, 4);
  CHECK(q.resolution_eps == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(build_quantizer(-1.0, 1.0, 3).resolution_eps == 0.25);
  CHECK(build_quantizer(0.0, 1.0, 1).resolution_eps == 0.5);
}

TEST_CASE("build_quantizer rejects bad ranges and word lengths") {
  CHECK_THROWS_AS((void)build_quantizer(1.0, -1.0, 8), ConfigError);
  CHECK_THROWS_AS((void)build_quantizer(0.0, 0.0, 8), ConfigError);
  CHECK_THROWS_AS((void)build_quantizer(-1.0, 1.0, 0), ConfigError);
  CHECK_THROWS_AS((void)build_quantizer(-1.0, 1.0, 33), ConfigError);
}

TEST_CASE("round trip error stays within half a cell for in-range inputs") {
  QuantizerSpec q = build_quantizer(-0.8, 0.8, 4);
  const double eps = q.resolution_eps;
  RngStream rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.next_uniform(-0.8, 0.8);
    const double err = decode(q, encode(q, x)) - x;
    CHECK(err > -eps / 2 - 1e-15);
    CHECK(err <= eps / 2 + 1e-15);
  }
}

TEST_CASE("out of range inputs clamp to the edge cells") {
  QuantizerSpec q = build_quantizer(-1.0, 1.0, 4);
  CHECK(encode(q, -5.0) == 0);
  CHECK(encode(q, 5.0) == 15);
  CHECK(encode(q, 1.0) == 15);  // top edge belongs to the last cell
  SaturationCounter sat;
  (void)dither_quantize(q, 3.0, 0.0, &sat);
  (void)dither_quantize(q, 0.0, 0.0, &sat);
  CHECK(sat.count == 1);
}

TEST_CASE("decode returns cell midpoints") {
  QuantizerSpec q = build_quantizer(0.0, 1.0, 2);
  CHECK(decode(q, 0) == doctest::Approx(0.125));
  CHECK(decode(q, 3) == doctest::Approx(0.875));
}

TEST_CASE("dither errors match the uniform law across many seeds") {
  // The subtractive-dither error is uniform on [-eps/2, eps/2): mean 0,
  // variance eps^2/12, and var(e^2) = eps^4/180. Estimators over n samples
  // should sit within a few standard errors of those values.
  QuantizerSpec q = build_quantizer(-1.0, 1.0, 6);
  const double eps = q.resolution_eps;
  const int n = 20000;
  int mean_hits = 0, var_hits = 0, e2var_hits = 0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    DitherStream stream(derive_seed(777, "moments", static_cast<std::uint64_t>(s)));
    RngStream input(derive_seed(778, "inputs", static_cast<std::uint64_t>(s)));
    double sum = 0, sum2 = 0, sum4 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = input.next_uniform(-0.9, 0.9);
      const double w = stream.next(eps);
      const double e = dither_quantize(q, x, w) - x;
      sum += e;
      sum2 += e * e;
      sum4 += e * e * e * e;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double var_e2 = sum4 / n - (sum2 / n) * (sum2 / n);
    const double se_mean = eps / std::sqrt(12.0 * n);
    if (std::abs(mean) < 4 * se_mean) ++mean_hits;
    if (std::abs(var - eps * eps / 12) < 4 * std::sqrt(var_e2 / n)) ++var_hits;
    // var(e^2) has standard error ~ sqrt((m8 - m4^2)/n); bound it loosely.
    const double theory = eps * eps * eps * eps / 180.0;
    if (std::abs(var_e2 - theory) < 0.2 * theory) ++e2var_hits;
  }
  CHECK(mean_hits >= seeds - 3);
  CHECK(var_hits >= seeds - 3);
  CHECK(e2var_hits >= seeds - 3);
}

TEST_CASE("dither error is uncorrelated with the input") {
  QuantizerSpec q = build_quantizer(-1.0, 1.0, 5);
  const double eps = q.resolution_eps;
  DitherStream stream(31);
  RngStream input(32);
  const int n = 200000;
  double sx = 0, se = 0, sxe = 0, sxx = 0, see = 0;
  for (int i = 0; i < n; ++i) {
    const double x = input.next_uniform(-0.9, 0.9);
    const double e = dither_quantize(q, x, stream.next(eps)) - x;
    sx += x;
    se += e;
    sxe += x * e;
    sxx += x * x;
    see += e * e;
  }
  const double cov = sxe / n - (sx / n) * (se / n);
  const double sdx = std::sqrt(sxx / n - (sx / n) * (sx / n));
  const double sde = std::sqrt(see / n - (se / n) * (se / n));
  const double z = cov / (sdx * sde / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(z) < 4.0);
}

TEST_CASE("a 30 bit quantizer is indistinguishable from the identity") {
  QuantizerSpec q = build_quantizer(-1.0, 1.0, 30);
  DitherStream stream(5);
  RngStream input(6);
  for (int i = 0; i < 1000; ++i) {
    const double x = input.next_uniform(-0.99, 0.99);
    const double xq = dither_quantize(q, x, stream.next(q.resolution_eps));
    CHECK(std::abs(xq - x) <= 2.0 / (1 << 29));
  }
}

TEST_CASE("dither stream substreams are reproducible and distinct") {
  DitherStream a(42);
  DitherStream b(42);
  for (int i = 0; i < 16; ++i) CHECK(a.next(1.0) == b.next(1.0));
  DitherStream c = DitherStream(42).substream("traj", 0);
  DitherStream d = DitherStream(42).substream("traj", 1);
  DitherStream e = DitherStream(42).substream("test", 0);
  bool all_equal_cd = true, all_equal_ce = true;
  DitherStream c2 = DitherStream(42).substream("traj", 0);
  for (int i = 0; i < 16; ++i) {
    const double vc = c.next(1.0);
    if (vc != d.next(1.0)) all_equal_cd = false;
    if (vc != e.next(1.0)) all_equal_ce = false;
    CHECK(vc == c2.next(1.0));
  }
  CHECK_FALSE(all_equal_cd);
  CHECK_FALSE(all_equal_ce);
}

TEST_CASE("vector quantization applies one fresh dither draw per coordinate") {
  QuantizerSpec q = build_quantizer(-1.0, 1.0, 8);
  Eigen::VectorXd x(3);
  x << 0.1, -0.4, 0.7;
  DitherStream s1(9);
  DitherStream s2(9);
  Eigen::VectorXd xq = dither_quantize_vector(q, x, s1);
  Eigen::VectorXd manual(3);
  for (int i = 0; i < 3; ++i) manual[i] = dither_quantize(q, x[i], s2.next(q.resolution_eps));
  CHECK((xq - manual).lpNorm<Eigen::Infinity>() == 0.0);

  std::vector<QuantizerSpec> per = {build_quantizer(-1, 1, 8), build_quantizer(-2, 2, 8),
                                    build_quantizer(-1, 1, 4)};
  DitherStream s3(9);
  DitherStream s4(9);
  Eigen::VectorXd xq2 = dither_quantize_vector(per, x, s3);
  for (int i = 0; i < 3; ++i)
    CHECK(xq2[i] == dither_quantize(per[static_cast<std::size_t>(i)], x[i],
                                    s4.next(per[static_cast<std::size_t>(i)].resolution_eps)));
}

TEST_CASE("moment report flags biased and degenerate errors") {
  const double eps = 0.5;
  RngStream rng(123);
  const int n = 50000;
  ErrorSampleSet good;
  good.errors.resize(2, n);
  for (int i = 0; i < n; ++i) {
    good.errors(0, i) = rng.next_symmetric(eps / 2);
    good.errors(1, i) = rng.next_symmetric(eps / 2);
  }
  MomentReport ok = error_moment_report(good, eps);
  CHECK(ok.max_abs_z() < 4.0);
  CHECK(ok.samples == n);
  CHECK(ok.theory_variance[0] == doctest::Approx(eps * eps / 12).epsilon(1e-12));

  ErrorSampleSet biased = good;
  biased.errors.row(0).array() += eps / 4;  // mean off by 3+ standard errors
  MomentReport bad = error_moment_report(biased, eps);
  CHECK(bad.z_mean[0] > 10.0);

  ErrorSampleSet degen;
  degen.errors = Eigen::MatrixXd::Zero(1, 100);
  MomentReport flat = error_moment_report(degen, eps);
  REQUIRE(flat.degenerate.size() == 1);
  CHECK(flat.degenerate[0]);
}

TEST_CASE("per coordinate resolutions produce per coordinate theory variances") {
  ErrorSampleSet s;
  s.errors = Eigen::MatrixXd::Zero(2, 10);
  Eigen::VectorXd eps(2);
  eps << 0.1, 0.4;
  MomentReport r = error_moment_report(s, eps);
  CHECK(r.theory_variance[0] == doctest::Approx(0.01 / 12));
  CHECK(r.theory_variance[1] == doctest::Approx(0.16 / 12));
}
