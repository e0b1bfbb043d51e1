#include "kqid/quantization.hpp"

#include <cmath>
#include <string>

#include "kqid/errors.hpp"

namespace kqid {

QuantizerSpec build_quantizer(double x_min, double x_max, int b) {
  if (!(x_min < x_max) || !std::isfinite(x_min) || !std::isfinite(x_max)) {
    throw ConfigError("build_quantizer: need finite x_min < x_max, got [" + std::to_string(x_min) +
                      ", " + std::to_string(x_max) + "]");
  }
  if (b < 1 || b > 32) {
    throw ConfigError("build_quantizer: word length must be in [1, 32], got " + std::to_string(b));
  }
  QuantizerSpec q;
  q.x_min = x_min;
  q.x_max = x_max;
  q.word_length_b = b;
  // Division by a power of two is exact.
  q.resolution_eps = (x_max - x_min) / static_cast<double>(1ull << b);
  return q;
}

std::uint64_t encode(const QuantizerSpec& q, double x) {
  if (!std::isfinite(x)) throw NumericError("encode: non-finite input");
  if (x <= q.x_min) return 0;
  const std::uint64_t levels = 1ull << q.word_length_b;
  const double t = (x - q.x_min) / q.resolution_eps;
  auto k = static_cast<std::uint64_t>(t);
  return k >= levels ? levels - 1 : k;
}

double decode(const QuantizerSpec& q, std::uint64_t level) {
  const std::uint64_t levels = 1ull << q.word_length_b;
  if (level >= levels) {
    throw ConfigError("decode: level " + std::to_string(level) + " out of range for b=" +
                      std::to_string(q.word_length_b));
  }
  return q.x_min + (static_cast<double>(level) + 0.5) * q.resolution_eps;
}

double dither_quantize(const QuantizerSpec& q, double x, double w, SaturationCounter* sat) {
  const double shifted = x + w;
  if (sat != nullptr && (shifted < q.x_min || shifted > q.x_max)) ++sat->count;
  return decode(q, encode(q, shifted)) - w;
}

Eigen::VectorXd dither_quantize_vector(const std::vector<QuantizerSpec>& q, const Eigen::VectorXd& x,
                                       DitherStream& stream, SaturationCounter* sat) {
  if (static_cast<Eigen::Index>(q.size()) != x.size()) {
    throw ConfigError("dither_quantize_vector: " + std::to_string(q.size()) + " quantizers for " +
                      std::to_string(x.size()) + " coordinates");
  }
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double w = stream.next(q[static_cast<std::size_t>(i)].resolution_eps);
    out[i] = dither_quantize(q[static_cast<std::size_t>(i)], x[i], w, sat);
  }
  return out;
}

Eigen::VectorXd dither_quantize_vector(const QuantizerSpec& q, const Eigen::VectorXd& x,
                                       DitherStream& stream, SaturationCounter* sat) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double w = stream.next(q.resolution_eps);
    out[i] = dither_quantize(q, x[i], w, sat);
  }
  return out;
}

double MomentReport::max_abs_z() const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < z_mean.size(); ++i) {
    worst = std::max(worst, std::abs(z_mean[i]));
    worst = std::max(worst, std::abs(z_variance[i]));
    worst = std::max(worst, std::abs(z_lag1[i]));
    for (Eigen::Index j = 0; j < z_mean.size(); ++j) {
      if (i != j) worst = std::max(worst, std::abs(z_cross(i, j)));
    }
  }
  return worst;
}

MomentReport error_moment_report(const ErrorSampleSet& samples, const Eigen::VectorXd& eps_per_coord) {
  const Eigen::MatrixXd& E = samples.errors;
  const Eigen::Index d = E.rows();
  const Eigen::Index T = E.cols();
  if (d == 0 || T < 2) throw ConfigError("error_moment_report: need at least one coordinate and two samples");
  if (eps_per_coord.size() != d) {
    throw ConfigError("error_moment_report: resolution vector size mismatch");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(eps_per_coord[i] > 0.0)) throw ConfigError("error_moment_report: resolutions must be positive");
  }

  MomentReport r;
  r.samples = T;
  r.theory_variance = eps_per_coord.array().square() / 12.0;
  r.mean = E.rowwise().mean();
  Eigen::MatrixXd centered = E.colwise() - r.mean;
  r.variance = centered.array().square().rowwise().mean();

  r.lag1_autocov.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    r.lag1_autocov[i] =
        (centered.row(i).head(T - 1).array() * centered.row(i).tail(T - 1).array()).mean();
  }

  r.cross_cov = (centered * centered.transpose()) / static_cast<double>(T);
  r.cross_cov.diagonal().setZero();

  const double Td = static_cast<double>(T);
  r.z_mean.resize(d);
  r.z_variance.resize(d);
  r.z_lag1.resize(d);
  r.degenerate.assign(static_cast<std::size_t>(d), false);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double v0 = r.theory_variance[i];
    const double eps4 = eps_per_coord[i] * eps_per_coord[i] * eps_per_coord[i] * eps_per_coord[i];
    r.z_mean[i] = r.mean[i] / std::sqrt(v0 / Td);
    // Var of e^2 under the uniform law is eps^4/180.
    r.z_variance[i] = (r.variance[i] - v0) / std::sqrt(eps4 / 180.0 / Td);
    r.z_lag1[i] = r.lag1_autocov[i] * std::sqrt(Td - 1.0) / v0;
    if (r.variance[i] < 1e-12 * v0) r.degenerate[static_cast<std::size_t>(i)] = true;
  }
  r.z_cross.setZero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i == j) continue;
      r.z_cross(i, j) =
          r.cross_cov(i, j) * std::sqrt(Td) / std::sqrt(r.theory_variance[i] * r.theory_variance[j]);
    }
  }
  return r;
}

MomentReport error_moment_report(const ErrorSampleSet& samples, double eps) {
  if (!(eps > 0.0)) throw ConfigError("error_moment_report: eps must be positive");
  return error_moment_report(samples,
                             Eigen::VectorXd::Constant(samples.errors.rows(), eps));
}

}  // namespace kqid
