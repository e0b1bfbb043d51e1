#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "kqid/quantization.hpp"

namespace kqid {

enum class DictionaryKind { identity, state_tps, kdv_poly };

// Observable dictionary. The raw state always occupies the leading rows of a
// lift, so the decoder that selects rows 0..n-1 is exact.
struct Dictionary {
  DictionaryKind kind = DictionaryKind::identity;
  int n = 0;                // state dimension
  int N = 0;                // observable count
  Eigen::MatrixXd centers;  // n x n_centers, state_tps only
  int mesh = 0;             // kdv_poly only

  [[nodiscard]] Eigen::VectorXd lift(const Eigen::VectorXd& x) const;
  [[nodiscard]] Eigen::MatrixXd lift_batch(const Eigen::MatrixXd& X) const;
};

[[nodiscard]] Dictionary make_identity_dictionary(int n);

// State plus one thin-plate observable r^2 log r per center; zero at the
// center itself.
[[nodiscard]] Dictionary make_tps_dictionary(int n, const Eigen::MatrixXd& centers);

// Per-node monomials x_i, x_i^2, x_i x_{i+1 (cyclic)} and the constant 1.
[[nodiscard]] Dictionary make_kdv_dictionary(int mesh);

// value of r^2 log r expressed through the squared radius
[[nodiscard]] double tps_value(double r_squared);

// Centers drawn coordinate-wise uniform from [lo, hi], one column per center.
[[nodiscard]] Eigen::MatrixXd draw_centers(int n, int count, double lo, double hi,
                                           std::uint64_t seed);

// One quantizer per row spanning that row's empirical range, widened on both
// sides by margin * (max - min). A constant row falls back to unit width
// around its value.
[[nodiscard]] std::vector<QuantizerSpec> quantizers_from_rows(const Eigen::MatrixXd& rows, int b,
                                                              double margin);

// Same construction from precomputed per-coordinate ranges.
[[nodiscard]] std::vector<QuantizerSpec> quantizers_from_ranges(const Eigen::VectorXd& lo,
                                                                const Eigen::VectorXd& hi, int b,
                                                                double margin);

// Lift, then dither-quantize every observable coordinate.
[[nodiscard]] Eigen::VectorXd lift_quantized_observables(const Dictionary& d,
                                                         const Eigen::VectorXd& x,
                                                         const std::vector<QuantizerSpec>& q,
                                                         DitherStream& stream,
                                                         SaturationCounter* sat = nullptr);
[[nodiscard]] Eigen::VectorXd lift_quantized_observables(const Dictionary& d,
                                                         const Eigen::VectorXd& x,
                                                         const QuantizerSpec& q,
                                                         DitherStream& stream,
                                                         SaturationCounter* sat = nullptr);

}  // namespace kqid
