#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string_view>
#include <vector>

#include "kqid/rng.hpp"

namespace kqid {

// ============================================================================
// Uniform mid-point quantizer
// ============================================================================

/// Uniform quantizer over [x_min, x_max] with 2^b equal cells.
struct QuantizerSpec {
  double x_min = -1.0;
  double x_max = 1.0;
  int word_length_b = 8;
  double resolution_eps = 0.0;  ///< (x_max - x_min) / 2^b, exact in binary.
};

/// Requires x_min < x_max and 1 <= b <= 32.
[[nodiscard]] QuantizerSpec build_quantizer(double x_min, double x_max, int b);

/// Cell index of x. Cells are half-open on the right except the top cell,
/// which also contains x_max; inputs beyond the range clamp to the first or
/// last cell. The round-trip error decode(encode(x)) - x lies in
/// (-eps/2, eps/2] for in-range x.
[[nodiscard]] std::uint64_t encode(const QuantizerSpec& q, double x);

/// Mid-point of cell `level`.
[[nodiscard]] double decode(const QuantizerSpec& q, std::uint64_t level);

/// Counts inputs that fell strictly outside [x_min, x_max].
struct SaturationCounter {
  std::int64_t count = 0;
};

/// Subtractive dither: decode(encode(x + w)) - w. For in-range x + w the
/// error is the round-trip error of x + w, so it stays within (-eps/2, eps/2]
/// and, for dither uniform on [-eps/2, eps/2], is uniform and independent of
/// the input.
[[nodiscard]] double dither_quantize(const QuantizerSpec& q, double x, double w,
                                     SaturationCounter* sat = nullptr);

// ============================================================================
// Dither source
// ============================================================================

/// Seed-addressed source of dither samples. Substreams derived from the
/// stored seed are mutually independent and reproducible, so coordinates and
/// trajectories can each own a stream.
class DitherStream {
 public:
  explicit DitherStream(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  /// Uniform on [-eps/2, eps/2).
  double next(double eps) { return rng_.next_symmetric(eps / 2.0); }

  [[nodiscard]] DitherStream substream(std::string_view label, std::uint64_t index) const {
    return DitherStream(derive_seed(seed_, label, index));
  }

 private:
  std::uint64_t seed_;
  RngStream rng_;
};

/// Per-coordinate dither quantization, one fresh dither sample per coordinate
/// in order.
[[nodiscard]] Eigen::VectorXd dither_quantize_vector(const std::vector<QuantizerSpec>& q,
                                                     const Eigen::VectorXd& x, DitherStream& stream,
                                                     SaturationCounter* sat = nullptr);

/// All coordinates share one quantizer.
[[nodiscard]] Eigen::VectorXd dither_quantize_vector(const QuantizerSpec& q,
                                                     const Eigen::VectorXd& x, DitherStream& stream,
                                                     SaturationCounter* sat = nullptr);

// ============================================================================
// Error moment diagnostics
// ============================================================================

/// Quantization error samples, one row per coordinate, one column per draw.
struct ErrorSampleSet {
  Eigen::MatrixXd errors;
};

/// Empirical moments next to the moments of the uniform law on
/// [-eps/2, eps/2]: mean 0, variance eps^2/12, zero lag-1 and cross
/// covariance. Each z-score is the deviation in units of that estimator's
/// standard error under the law.
struct MomentReport {
  Eigen::VectorXd mean, variance, lag1_autocov;
  Eigen::VectorXd z_mean, z_variance, z_lag1;
  Eigen::MatrixXd cross_cov;  ///< off-diagonal entries only
  Eigen::MatrixXd z_cross;    ///< zero on the diagonal
  Eigen::VectorXd theory_variance;
  std::vector<bool> degenerate;  ///< true when a coordinate's variance is ~0
  std::int64_t samples = 0;

  [[nodiscard]] double max_abs_z() const;
};

[[nodiscard]] MomentReport error_moment_report(const ErrorSampleSet& samples, double eps);

/// Per-coordinate resolutions.
[[nodiscard]] MomentReport error_moment_report(const ErrorSampleSet& samples,
                                               const Eigen::VectorXd& eps_per_coord);

}  // namespace kqid
