#include "kqid/ident.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "kqid/errors.hpp"

namespace kqid {

namespace {

// Min-norm G minimizing ||target - G * regressor||_F through the SVD of the
// transposed regressor. Singular values below max(rows, cols) * machine
// epsilon * sigma_max are truncated.
Eigen::MatrixXd min_norm_fit(const Eigen::MatrixXd& regressor_t, const Eigen::MatrixXd& target,
                             FitReport* report) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(regressor_t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double sigma_max = (sv.size() > 0) ? sv[0] : 0.0;
  const double dim = static_cast<double>(std::max(regressor_t.rows(), regressor_t.cols()));
  const double tol = dim * std::numeric_limits<double>::epsilon() * sigma_max;

  int rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(target.rows(), regressor_t.cols());
  if (rank > 0) {
    Eigen::MatrixXd scaled = target * svd.matrixU().leftCols(rank);  // rows x rank
    for (int j = 0; j < rank; ++j) scaled.col(j) /= sv[j];
    G.noalias() = scaled * svd.matrixV().leftCols(rank).transpose();
  }
  if (report) {
    report->rank_used = rank;
    report->rank_tolerance = tol;
    report->condition_estimate = (rank > 0) ? sigma_max / sv[rank - 1] : 0.0;
  }
  return G;
}

double residual_rms_of(const Eigen::MatrixXd& G, const Eigen::MatrixXd& Phi,
                       const Eigen::MatrixXd& U, const Eigen::MatrixXd& PhiPlus) {
  const Eigen::Index N = Phi.rows();
  Eigen::MatrixXd R = PhiPlus;
  R.noalias() -= G.leftCols(N) * Phi;
  R.noalias() -= G.rightCols(G.cols() - N) * U;
  return std::sqrt(R.squaredNorm() / static_cast<double>(Phi.cols()));
}

void check_fit_inputs(const SnapshotSet& s) {
  if (s.Phi.cols() < 1) throw ConfigError("fit: empty snapshot set");
  if (s.PhiPlus.cols() != s.Phi.cols() || s.U.cols() != s.Phi.cols())
    throw ConfigError("fit: snapshot column counts differ");
  if (s.PhiPlus.rows() != s.Phi.rows()) throw ConfigError("fit: lifted row counts differ");
}

}  // namespace

Eigen::MatrixXd SnapshotSet::Psi() const {
  Eigen::MatrixXd psi(Phi.rows() + U.rows(), Phi.cols());
  psi.topRows(Phi.rows()) = Phi;
  psi.bottomRows(U.rows()) = U;
  return psi;
}

SnapshotSet assemble_snapshots(const TrajectorySet& data, const Dictionary& dict,
                               const QuantSetup& setup, std::uint64_t dither_seed) {
  if (data.trajectories.empty()) throw ConfigError("assemble_snapshots: no trajectories");
  const int n = dict.n;
  const int N = dict.N;
  Eigen::Index total_pairs = 0;
  int m = -1;
  for (const auto& tr : data.trajectories) {
    if (tr.X.rows() != n) throw ConfigError("assemble_snapshots: state dimension mismatch");
    if (tr.X.cols() < 2) throw ConfigError("assemble_snapshots: trajectory shorter than one pair");
    if (tr.U.cols() != tr.X.cols() - 1)
      throw ConfigError("assemble_snapshots: input/state column mismatch");
    if (m < 0) m = static_cast<int>(tr.U.rows());
    if (tr.U.rows() != m) throw ConfigError("assemble_snapshots: input dimension varies");
    total_pairs += tr.X.cols() - 1;
  }
  if (setup.has_shared_range && !(setup.shared_lo < setup.shared_hi))
    throw ConfigError("assemble_snapshots: shared range must have positive width");

  SnapshotSet s;
  s.mode = setup.mode;
  s.dither_seed = dither_seed;
  s.Phi.resize(N, total_pairs);
  s.PhiPlus.resize(N, total_pairs);
  s.U.resize(m, total_pairs);
  s.X.resize(n, total_pairs);
  s.XPlus.resize(n, total_pairs);

  // Quantizer ranges come from the pooled training data unless a shared
  // explicit range overrides them.
  if (setup.mode != QuantMode::none) {
    const int b = setup.word_length_b;
    if (setup.has_shared_range) {
      const QuantizerSpec shared = build_quantizer(setup.shared_lo, setup.shared_hi, b);
      const int n_data = (setup.mode == QuantMode::state_input) ? n : N;
      auto& data_q = (setup.mode == QuantMode::state_input) ? s.state_quantizers
                                                            : s.observable_quantizers;
      data_q.assign(static_cast<std::size_t>(n_data), shared);
      s.input_quantizers.assign(static_cast<std::size_t>(m), shared);
    } else {
      const int n_data = (setup.mode == QuantMode::state_input) ? n : N;
      Eigen::VectorXd lo = Eigen::VectorXd::Constant(n_data, std::numeric_limits<double>::max());
      Eigen::VectorXd hi = Eigen::VectorXd::Constant(n_data, std::numeric_limits<double>::lowest());
      Eigen::VectorXd ulo = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::max());
      Eigen::VectorXd uhi = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::lowest());
      for (const auto& tr : data.trajectories) {
        for (Eigen::Index t = 0; t < tr.X.cols(); ++t) {
          const Eigen::VectorXd v = (setup.mode == QuantMode::state_input)
                                        ? Eigen::VectorXd(tr.X.col(t))
                                        : dict.lift(tr.X.col(t));
          lo = lo.cwiseMin(v);
          hi = hi.cwiseMax(v);
        }
        ulo = ulo.cwiseMin(tr.U.rowwise().minCoeff());
        uhi = uhi.cwiseMax(tr.U.rowwise().maxCoeff());
      }
      auto& data_q = (setup.mode == QuantMode::state_input) ? s.state_quantizers
                                                            : s.observable_quantizers;
      data_q = quantizers_from_ranges(lo, hi, b, setup.margin);
      s.input_quantizers = quantizers_from_ranges(ulo, uhi, b, setup.margin);
    }
  }

  SaturationCounter sat;
  DitherStream root(dither_seed);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& tr = data.trajectories[i];
    const Eigen::Index K = tr.U.cols();
    DitherStream data_stream = root.substream("qdata", i);
    DitherStream next_stream = root.substream("qnext", i);
    DitherStream input_stream = root.substream("qinput", i);

    // Each state column is quantized once; the per-pair loops below reuse the
    // stored version wherever that column appears.
    Eigen::MatrixXd lifted(N, K + 1);
    Eigen::MatrixXd lifted_next;
    switch (setup.mode) {
      case QuantMode::none:
        lifted = dict.lift_batch(tr.X);
        break;
      case QuantMode::state_input:
        for (Eigen::Index t = 0; t <= K; ++t)
          lifted.col(t) =
              dict.lift(dither_quantize_vector(s.state_quantizers, tr.X.col(t), data_stream, &sat));
        if (setup.requantize_appearances) {
          lifted_next.resize(N, K + 1);
          for (Eigen::Index t = 0; t <= K; ++t)
            lifted_next.col(t) = dict.lift(
                dither_quantize_vector(s.state_quantizers, tr.X.col(t), next_stream, &sat));
        }
        break;
      case QuantMode::observable:
        for (Eigen::Index t = 0; t <= K; ++t)
          lifted.col(t) =
              lift_quantized_observables(dict, tr.X.col(t), s.observable_quantizers, data_stream,
                                         &sat);
        if (setup.requantize_appearances) {
          lifted_next.resize(N, K + 1);
          for (Eigen::Index t = 0; t <= K; ++t)
            lifted_next.col(t) = lift_quantized_observables(dict, tr.X.col(t),
                                                            s.observable_quantizers, next_stream,
                                                            &sat);
        }
        break;
    }
    const Eigen::MatrixXd& next_src = setup.requantize_appearances && setup.mode != QuantMode::none
                                          ? lifted_next
                                          : lifted;

    for (Eigen::Index t = 0; t < K; ++t, ++col) {
      s.Phi.col(col) = lifted.col(t);
      s.PhiPlus.col(col) = next_src.col(t + 1);
      s.X.col(col) = tr.X.col(t);
      s.XPlus.col(col) = tr.X.col(t + 1);
      if (setup.mode == QuantMode::none) {
        s.U.col(col) = tr.U.col(t);
      } else {
        s.U.col(col) = dither_quantize_vector(s.input_quantizers, tr.U.col(t), input_stream, &sat);
      }
    }
  }
  s.saturation_count = sat.count;
  return s;
}

std::pair<LinearPredictor, FitReport> edmd_fit(const SnapshotSet& s) {
  check_fit_inputs(s);
  const Eigen::Index N = s.Phi.rows();
  FitReport report;
  Eigen::MatrixXd psi_t = s.Psi().transpose();
  const Eigen::MatrixXd G = min_norm_fit(psi_t, s.PhiPlus, &report);
  if (!G.allFinite())
    throw NumericError("edmd_fit: non-finite solution, condition estimate " +
                       std::to_string(report.condition_estimate));
  LinearPredictor p;
  p.A = G.leftCols(N);
  p.B = G.rightCols(G.cols() - N);
  report.residual_rms = residual_rms_of(G, s.Phi, s.U, s.PhiPlus);
  return {std::move(p), report};
}

std::pair<LinearPredictor, FitReport> ridge_fit(const SnapshotSet& s, double lambda) {
  check_fit_inputs(s);
  if (lambda < 0.0) throw ConfigError("ridge_fit: lambda must be nonnegative");
  if (lambda == 0.0) return edmd_fit(s);
  const Eigen::Index N = s.Phi.rows();
  const double T = static_cast<double>(s.Phi.cols());
  const Eigen::MatrixXd psi = s.Psi();
  const Eigen::MatrixXd gram = psi * psi.transpose();
  const Eigen::MatrixXd cross = s.PhiPlus * psi.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success) throw NumericError("ridge_fit: eigendecomposition failed");
  const Eigen::VectorXd shifted = es.eigenvalues().array() + T * lambda;
  const Eigen::MatrixXd G =
      cross * es.eigenvectors() * shifted.cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();

  LinearPredictor p;
  p.A = G.leftCols(N);
  p.B = G.rightCols(G.cols() - N);
  FitReport report;
  report.residual_rms = residual_rms_of(G, s.Phi, s.U, s.PhiPlus);
  report.rank_used = static_cast<int>(gram.rows());
  report.regularizer_lambda = lambda;
  report.condition_estimate = shifted.maxCoeff() / shifted.minCoeff();
  return {std::move(p), report};
}

Eigen::MatrixXd fit_decoder(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Phi) {
  if (X.cols() != Phi.cols()) throw ConfigError("fit_decoder: column counts differ");
  if (X.cols() < 1) throw ConfigError("fit_decoder: empty data");
  return min_norm_fit(Phi.transpose(), X, nullptr);
}

Eigen::MatrixXd state_selector_decoder(int n, int N) {
  if (n < 1 || N < n) throw ConfigError("state_selector_decoder: need N >= n >= 1");
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, N);
  C.leftCols(n).setIdentity();
  return C;
}

LinearPredictor make_predictor(const Dictionary& dict, const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B) {
  if (A.rows() != dict.N || A.cols() != dict.N) throw ConfigError("make_predictor: A shape");
  if (B.rows() != dict.N) throw ConfigError("make_predictor: B shape");
  LinearPredictor p;
  p.A = A;
  p.B = B;
  p.C = state_selector_decoder(dict.n, dict.N);
  p.dict = dict;
  return p;
}

GramAccumulator::GramAccumulator(int N, int m) : N_(N), m_(m) {
  if (N < 1 || m < 1) throw ConfigError("GramAccumulator: dimensions must be positive");
  psi_gram_ = Eigen::MatrixXd::Zero(N + m, N + m);
  cross_ = Eigen::MatrixXd::Zero(N, N + m);
}

void GramAccumulator::add(const Eigen::VectorXd& phi, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& phi_plus) {
  if (phi.size() != N_ || u.size() != m_ || phi_plus.size() != N_)
    throw ConfigError("GramAccumulator: sample dimension mismatch");
  Eigen::VectorXd psi(N_ + m_);
  psi.head(N_) = phi;
  psi.tail(m_) = u;
  psi_gram_.noalias() += psi * psi.transpose();
  cross_.noalias() += phi_plus * psi.transpose();
  target_sq_ += phi_plus.squaredNorm();
  ++count_;
}

void GramAccumulator::add_block(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& U,
                                const Eigen::MatrixXd& PhiPlus) {
  if (Phi.rows() != N_ || U.rows() != m_ || PhiPlus.rows() != N_ ||
      Phi.cols() != U.cols() || Phi.cols() != PhiPlus.cols())
    throw ConfigError("GramAccumulator: block dimension mismatch");
  Eigen::MatrixXd psi(N_ + m_, Phi.cols());
  psi.topRows(N_) = Phi;
  psi.bottomRows(m_) = U;
  psi_gram_.noalias() += psi * psi.transpose();
  cross_.noalias() += PhiPlus * psi.transpose();
  target_sq_ += PhiPlus.squaredNorm();
  count_ += Phi.cols();
}

std::pair<LinearPredictor, FitReport> GramAccumulator::fit(double lambda) const {
  if (count_ < 1) throw ConfigError("GramAccumulator: no samples accumulated");
  if (lambda < 0.0) throw ConfigError("GramAccumulator: lambda must be nonnegative");
  const double T = static_cast<double>(count_);
  const Eigen::MatrixXd& gram = psi_gram_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success)
    throw NumericError("GramAccumulator: eigendecomposition failed");

  FitReport report;
  report.regularizer_lambda = lambda;
  Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(gram.rows());
  if (lambda > 0.0) {
    for (Eigen::Index i = 0; i < gram.rows(); ++i)
      inv_ev[i] = 1.0 / (es.eigenvalues()[i] + T * lambda);
    report.rank_used = static_cast<int>(gram.rows());
    const Eigen::VectorXd shifted = es.eigenvalues().array() + T * lambda;
    report.condition_estimate = shifted.maxCoeff() / shifted.minCoeff();
  } else {
    // Eigenvalues of the Gram matrix are squared singular values of Psi^T;
    // the truncation rule matches the factorization path.
    const double ev_max = std::max(es.eigenvalues().maxCoeff(), 0.0);
    const double dim = static_cast<double>(std::max<std::int64_t>(count_, gram.rows()));
    const double tol_sq = dim * dim * std::numeric_limits<double>::epsilon() *
                          std::numeric_limits<double>::epsilon() * ev_max;
    int rank = 0;
    double ev_min_kept = 0.0;
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
      const double ev = es.eigenvalues()[i];
      if (ev > tol_sq && ev > 0.0) {
        inv_ev[i] = 1.0 / ev;
        ev_min_kept = (rank == 0) ? ev : std::min(ev_min_kept, ev);
        ++rank;
      }
    }
    report.rank_used = rank;
    report.rank_tolerance = std::sqrt(tol_sq);
    report.condition_estimate = (rank > 0) ? std::sqrt(ev_max / ev_min_kept) : 0.0;
  }

  const Eigen::MatrixXd G =
      cross_ * es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
  const double quad = (G * gram).cwiseProduct(G).sum();
  const double lin = G.cwiseProduct(cross_).sum();
  report.residual_rms = std::sqrt(std::max(0.0, (target_sq_ - 2.0 * lin + quad) / T));

  LinearPredictor p;
  p.A = G.leftCols(N_);
  p.B = G.rightCols(m_);
  return {std::move(p), report};
}

GapReport estimate_gap(const LinearPredictor& ref, const LinearPredictor& other) {
  if (ref.A.rows() != other.A.rows() || ref.A.cols() != other.A.cols() ||
      ref.B.rows() != other.B.rows() || ref.B.cols() != other.B.cols())
    throw ConfigError("estimate_gap: shape mismatch");
  const double normA = ref.A.norm();
  const double normB = ref.B.norm();
  const double normG = std::sqrt(normA * normA + normB * normB);
  if (normA == 0.0 || normB == 0.0)
    throw NumericError("estimate_gap: reference block has zero norm");
  GapReport g;
  g.relA = (other.A - ref.A).norm() / normA;
  g.relB = (other.B - ref.B).norm() / normB;
  const double dA = (other.A - ref.A).squaredNorm();
  const double dB = (other.B - ref.B).squaredNorm();
  g.relG = std::sqrt(dA + dB) / normG;
  return g;
}

double mismatch_bound(const SnapshotSet& s, double eps) {
  const Eigen::MatrixXd psi = s.Psi();
  return mismatch_bound_from_gram(psi * psi.transpose(), s.T(), eps);
}

double mismatch_bound_from_gram(const Eigen::MatrixXd& psi_gram, std::int64_t T, double eps) {
  if (T < 1) throw ConfigError("mismatch_bound: need at least one sample");
  if (eps < 0.0) throw ConfigError("mismatch_bound: eps must be nonnegative");
  if (eps == 0.0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(psi_gram);
  if (es.info() != Eigen::Success)
    throw NumericError("mismatch_bound: eigendecomposition failed");
  const double reg = eps * eps / 12.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < psi_gram.rows(); ++i) {
    const double ev = std::max(es.eigenvalues()[i], 0.0) / static_cast<double>(T);
    const double inv = 1.0 / (ev + reg);
    sum += inv * inv;
  }
  return reg * std::sqrt(sum);
}

}  // namespace kqid
