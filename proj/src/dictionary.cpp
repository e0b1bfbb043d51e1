#include "kqid/dictionary.hpp"

#include <cmath>
#include <string>

#include "kqid/errors.hpp"

namespace kqid {

double tps_value(double r_squared) {
  // r^2 log r == (r^2 log r^2) / 2; the limit at r = 0 is 0.
  return r_squared > 0.0 ? 0.5 * r_squared * std::log(r_squared) : 0.0;
}

Eigen::VectorXd Dictionary::lift(const Eigen::VectorXd& x) const {
  if (x.size() != n) {
    throw ConfigError("lift: state has " + std::to_string(x.size()) + " coordinates, expected " +
                      std::to_string(n));
  }
  Eigen::VectorXd z(N);
  switch (kind) {
    case DictionaryKind::identity:
      z = x;
      break;
    case DictionaryKind::state_tps: {
      z.head(n) = x;
      for (Eigen::Index c = 0; c < centers.cols(); ++c) {
        z[n + c] = tps_value((x - centers.col(c)).squaredNorm());
      }
      break;
    }
    case DictionaryKind::kdv_poly: {
      z.segment(0, mesh) = x;
      z.segment(mesh, mesh) = x.array().square();
      for (int i = 0; i < mesh; ++i) z[2 * mesh + i] = x[i] * x[(i + 1) % mesh];
      z[3 * mesh] = 1.0;
      break;
    }
  }
  return z;
}

Eigen::MatrixXd Dictionary::lift_batch(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd Z(N, X.cols());
  for (Eigen::Index t = 0; t < X.cols(); ++t) Z.col(t) = lift(X.col(t));
  return Z;
}

Dictionary make_identity_dictionary(int n) {
  if (n < 1) throw ConfigError("make_identity_dictionary: state dimension must be positive");
  Dictionary d;
  d.kind = DictionaryKind::identity;
  d.n = n;
  d.N = n;
  return d;
}

Dictionary make_tps_dictionary(int n, const Eigen::MatrixXd& centers) {
  if (n < 1) throw ConfigError("make_tps_dictionary: state dimension must be positive");
  if (centers.rows() != n) {
    throw ConfigError("make_tps_dictionary: centers have " + std::to_string(centers.rows()) +
                      " rows, expected " + std::to_string(n));
  }
  Dictionary d;
  d.kind = DictionaryKind::state_tps;
  d.n = n;
  d.N = n + static_cast<int>(centers.cols());
  d.centers = centers;
  return d;
}

Dictionary make_kdv_dictionary(int mesh) {
  if (mesh < 2) throw ConfigError("make_kdv_dictionary: mesh must have at least 2 nodes");
  Dictionary d;
  d.kind = DictionaryKind::kdv_poly;
  d.n = mesh;
  d.mesh = mesh;
  d.N = 3 * mesh + 1;
  return d;
}

Eigen::MatrixXd draw_centers(int n, int count, double lo, double hi, std::uint64_t seed) {
  if (count < 1) throw ConfigError("draw_centers: need at least one center");
  if (!(lo < hi)) throw ConfigError("draw_centers: need lo < hi");
  RngStream rng(seed);
  Eigen::MatrixXd C(n, count);
  for (int c = 0; c < count; ++c) {
    for (int i = 0; i < n; ++i) C(i, c) = rng.next_uniform(lo, hi);
  }
  return C;
}

std::vector<QuantizerSpec> quantizers_from_rows(const Eigen::MatrixXd& rows, int b, double margin) {
  if (rows.cols() < 1) throw ConfigError("quantizers_from_rows: no samples");
  return quantizers_from_ranges(rows.rowwise().minCoeff(), rows.rowwise().maxCoeff(), b, margin);
}

std::vector<QuantizerSpec> quantizers_from_ranges(const Eigen::VectorXd& lo,
                                                  const Eigen::VectorXd& hi, int b, double margin) {
  if (lo.size() != hi.size()) throw ConfigError("quantizers_from_ranges: size mismatch");
  if (margin < 0.0) throw ConfigError("quantizers_from_ranges: margin must be nonnegative");
  std::vector<QuantizerSpec> specs;
  specs.reserve(static_cast<std::size_t>(lo.size()));
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    const double width = hi[i] - lo[i];
    if (width > 1e-12 * std::max(1.0, std::abs(hi[i]))) {
      specs.push_back(build_quantizer(lo[i] - margin * width, hi[i] + margin * width, b));
    } else {
      specs.push_back(build_quantizer(lo[i] - 0.5, hi[i] + 0.5, b));
    }
  }
  return specs;
}

Eigen::VectorXd lift_quantized_observables(const Dictionary& d, const Eigen::VectorXd& x,
                                           const std::vector<QuantizerSpec>& q, DitherStream& stream,
                                           SaturationCounter* sat) {
  return dither_quantize_vector(q, d.lift(x), stream, sat);
}

Eigen::VectorXd lift_quantized_observables(const Dictionary& d, const Eigen::VectorXd& x,
                                           const QuantizerSpec& q, DitherStream& stream,
                                           SaturationCounter* sat) {
  return dither_quantize_vector(q, d.lift(x), stream, sat);
}

}  // namespace kqid
