#include "kqid/mpc.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <string>

#include "kqid/errors.hpp"

namespace kqid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Contract tolerances. A solve succeeds when score() <= 1.
constexpr double kStatTol = 1e-6;
constexpr double kPrimTol = 1e-8;
constexpr double kCompTol = 1e-6;

struct Residuals {
  double stat = 0.0, prim = 0.0, comp = 0.0;

  [[nodiscard]] double score() const {
    return std::max({stat / kStatTol, prim / kPrimTol, comp / kCompTol});
  }
};

Residuals kkt_residuals(const Eigen::MatrixXd& H, const Eigen::VectorXd& f,
                        const Eigen::MatrixXd& A, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y) {
  Residuals r;
  Eigen::VectorXd grad = H * x + f;
  if (A.rows() > 0) grad.noalias() += A.transpose() * y;
  r.stat = grad.lpNorm<Eigen::Infinity>();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double zi = A.row(i).dot(x);
    r.prim = std::max({r.prim, lo[i] - zi, zi - hi[i]});
    // Slacks are capped at 1 so an infinite bound still forces the matching
    // dual sign to zero.
    const double slack_lo = std::isfinite(lo[i]) ? std::max(zi - lo[i], 0.0) : 1.0;
    const double slack_hi = std::isfinite(hi[i]) ? std::max(hi[i] - zi, 0.0) : 1.0;
    r.comp = std::max(r.comp, -std::min(y[i], 0.0) * std::min(slack_lo, 1.0));
    r.comp = std::max(r.comp, std::max(y[i], 0.0) * std::min(slack_hi, 1.0));
  }
  r.prim = std::max(r.prim, 0.0);
  return r;
}

}  // namespace

QpSolver::QpSolver(Eigen::MatrixXd H, Eigen::MatrixXd A) : H_(std::move(H)), A_(std::move(A)) {
  if (H_.rows() != H_.cols()) throw ConfigError("QpSolver: H must be square");
  if (A_.rows() > 0 && A_.cols() != H_.rows())
    throw ConfigError("QpSolver: A column count must match H");
  if ((H_ - H_.transpose()).lpNorm<Eigen::Infinity>() >
      1e-10 * std::max(1.0, H_.lpNorm<Eigen::Infinity>()))
    throw ConfigError("QpSolver: H must be symmetric");
  equilibrate();
}

// Modified Ruiz passes on the stacked [H; A] columns and the A rows, bringing
// every row and column close to unit infinity norm. The cost scale is chosen
// at the first solve, when f is known.
void QpSolver::equilibrate() {
  const Eigen::Index nv = H_.rows();
  const Eigen::Index nc = A_.rows();
  D_ = Eigen::VectorXd::Ones(nv);
  E_ = Eigen::VectorXd::Ones(nc);
  Hs_ = H_;
  As_ = A_;
  for (int pass = 0; pass < 10; ++pass) {
    Eigen::VectorXd d(nv), e(nc);
    for (Eigen::Index i = 0; i < nv; ++i) {
      double m = Hs_.col(i).lpNorm<Eigen::Infinity>();
      if (nc > 0) m = std::max(m, As_.col(i).lpNorm<Eigen::Infinity>());
      d[i] = 1.0 / std::sqrt(std::max(m, 1e-12));
    }
    for (Eigen::Index j = 0; j < nc; ++j)
      e[j] = 1.0 / std::sqrt(std::max(As_.row(j).lpNorm<Eigen::Infinity>(), 1e-12));
    Hs_ = d.asDiagonal() * Hs_ * d.asDiagonal();
    if (nc > 0) As_ = e.asDiagonal() * As_ * d.asDiagonal();
    D_ = D_.cwiseProduct(d);
    E_ = E_.cwiseProduct(e);
  }
}

void QpSolver::factor() {
  Eigen::MatrixXd K = cost_scale_ * Hs_;
  K.diagonal().array() += sigma_;
  if (As_.rows() > 0) K.noalias() += rho_ * As_.transpose() * As_;
  kkt_.compute(K);
  if (kkt_.info() != Eigen::Success) throw NumericError("QpSolver: KKT factorization failed");
}

void QpSolver::reset_warm_start() {
  have_warm_ = false;
  have_polish_ = false;
  recent_sides_.clear();
}

void QpSolver::remember_side(const std::vector<int>& side) {
  for (std::size_t i = 0; i < recent_sides_.size(); ++i) {
    if (recent_sides_[i] == side) {
      recent_sides_.erase(recent_sides_.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  recent_sides_.insert(recent_sides_.begin(), side);
  if (recent_sides_.size() > 6) recent_sides_.resize(6);
}

// Active-set walk from a seeded working set: solve the equality problem,
// admit rows the candidate violates, expel rows whose multiplier has the
// wrong sign, repeat. Succeeds as soon as a candidate meets the KKT
// contract; otherwise returns the last finite candidate for the caller to
// judge. The regularized factorization is rebuilt only when the working set
// differs from the cached one, so receding-horizon steps that repeat a set
// pay a single back-substitution. A revisited working set means a cycle;
// the walk stops there.
bool QpSolver::polish_solve(const Eigen::VectorXd& f, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi, std::vector<int> side,
                            Eigen::VectorXd* x_out, Eigen::VectorXd* y_out) {
  const Eigen::Index nv = H_.rows();
  const Eigen::Index nc = A_.rows();
  constexpr double prim_tol = 1e-9;

  bool have_candidate = false;
  std::vector<std::vector<Eigen::Index>> visited;
  constexpr int max_passes = 40;
  for (int pass = 0; pass < max_passes; ++pass) {
    std::vector<Eigen::Index> act;
    std::vector<double> rhs_act;
    for (Eigen::Index i = 0; i < nc; ++i) {
      const int s = side[static_cast<std::size_t>(i)];
      if (s == 1) {
        act.push_back(i);
        rhs_act.push_back(hi[i]);
      } else if (s == -1) {
        act.push_back(i);
        rhs_act.push_back(lo[i]);
      }
    }
    const Eigen::Index k = static_cast<Eigen::Index>(act.size());
    if (!have_polish_ || act != polish_act_) {
      polish_kkt_ = Eigen::MatrixXd::Zero(nv + k, nv + k);
      polish_kkt_.topLeftCorner(nv, nv) = H_;
      for (Eigen::Index j = 0; j < k; ++j) {
        polish_kkt_.block(nv + j, 0, 1, nv) = A_.row(act[j]);
        polish_kkt_.block(0, nv + j, nv, 1) = A_.row(act[j]).transpose();
      }
      // The regularization must sit well below the contract's primal
      // tolerance divided by the KKT conditioning; refinement against the
      // unregularized matrix then recovers full accuracy.
      const double delta = 1e-10;
      Eigen::MatrixXd reg = polish_kkt_;
      reg.topLeftCorner(nv, nv).diagonal().array() += delta;
      reg.bottomRightCorner(k, k).diagonal().array() -= delta;
      polish_lu_.compute(reg);
      polish_act_ = act;
      have_polish_ = true;
    }

    Eigen::VectorXd rhs(nv + k);
    rhs.head(nv) = -f;
    for (Eigen::Index j = 0; j < k; ++j) rhs[nv + j] = rhs_act[static_cast<std::size_t>(j)];

    Eigen::VectorXd sol = polish_lu_.solve(rhs);
    // Residuals accumulate in extended precision: a constraint row whose
    // dual reaches the soft-penalty scale needs its equality held to the
    // complementarity tolerance divided by that dual, which sits below
    // what double-precision refinement can reach.
    Eigen::VectorXd resid(nv + k);
    for (int refine = 0; refine < 6; ++refine) {
      for (Eigen::Index i = 0; i < nv + k; ++i) {
        long double acc = rhs[i];
        for (Eigen::Index j = 0; j < nv + k; ++j)
          acc -= static_cast<long double>(polish_kkt_(i, j)) * static_cast<long double>(sol[j]);
        resid[i] = static_cast<double>(acc);
      }
      sol += polish_lu_.solve(resid);
    }
    if (!sol.allFinite()) break;

    *x_out = sol.head(nv);
    y_out->setZero(nc);
    for (Eigen::Index j = 0; j < k; ++j) (*y_out)[act[j]] = sol[nv + j];
    have_candidate = true;

    const Residuals r = kkt_residuals(H_, f, A_, lo, hi, *x_out, *y_out);
    if (r.score() <= 1.0) {
      remember_side(side);
      return true;
    }
    bool seen = false;
    for (const auto& v : visited)
      if (v == act) {
        seen = true;
        break;
      }
    if (seen) break;
    visited.push_back(std::move(act));

    const Eigen::VectorXd ax = A_ * (*x_out);
    const double nu_tol = 1e-9 * std::max(1.0, y_out->lpNorm<Eigen::Infinity>());
    bool changed = false;
    for (Eigen::Index i = 0; i < nc; ++i) {
      int& s = side[static_cast<std::size_t>(i)];
      if (s == 0) {
        if (std::isfinite(hi[i]) && ax[i] > hi[i] + prim_tol) {
          s = 1;
          changed = true;
        } else if (std::isfinite(lo[i]) && ax[i] < lo[i] - prim_tol) {
          s = -1;
          changed = true;
        }
      } else if ((s == 1 && (*y_out)[i] < -nu_tol) || (s == -1 && (*y_out)[i] > nu_tol)) {
        s = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return have_candidate;
}

QpSolution QpSolver::solve(const Eigen::VectorXd& f, const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi) {
  const Eigen::Index nv = H_.rows();
  const Eigen::Index nc = A_.rows();
  if (f.size() != nv || lo.size() != nc || hi.size() != nc)
    throw ConfigError("QpSolver: dimension mismatch");
  for (Eigen::Index i = 0; i < nc; ++i)
    if (!(lo[i] <= hi[i])) throw ConfigError("QpSolver: empty constraint interval");

  QpSolution out;

  if (nc == 0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H_);
    out.x = ldlt.solve(-f);
    out.y.resize(0);
    out.z.resize(0);
    const Residuals r = kkt_residuals(H_, f, A_, lo, hi, out.x, out.y);
    out.stat_residual = r.stat;
    if (!out.x.allFinite() || r.score() > 1.0)
      throw NumericError("QpSolver: unconstrained solve failed");
    out.objective = 0.5 * out.x.dot(H_ * out.x) + f.dot(out.x);
    return out;
  }

  // The cost scale balances the linear term against the equilibrated
  // quadratic. It is pinned at the first solve; later solves reuse it as long
  // as it stays within a factor of ten, so warm starts remain meaningful.
  double h_cols = 0.0;
  for (Eigen::Index i = 0; i < nv; ++i) h_cols += Hs_.col(i).lpNorm<Eigen::Infinity>();
  h_cols /= static_cast<double>(nv);
  const Eigen::VectorXd f_scaled_by_d = D_.cwiseProduct(f);
  const double c_now = 1.0 / std::max({h_cols, f_scaled_by_d.lpNorm<Eigen::Infinity>(), 1e-12});
  if (cost_scale_ == 0.0 || c_now > 10.0 * cost_scale_ || c_now < 0.1 * cost_scale_) {
    if (cost_scale_ != 0.0 && have_warm_) y_ *= c_now / cost_scale_;
    cost_scale_ = c_now;
    factor();
  }

  // Scaled problem data: min 1/2 x'(c Hs)x + (c D f)'x over E lo <= As x <= E hi.
  const Eigen::VectorXd fs = cost_scale_ * f_scaled_by_d;
  Eigen::VectorXd los(nc), his(nc);
  for (Eigen::Index i = 0; i < nc; ++i) {
    los[i] = std::isfinite(lo[i]) ? E_[i] * lo[i] : lo[i];
    his[i] = std::isfinite(hi[i]) ? E_[i] * hi[i] : hi[i];
  }

  if (!have_warm_ || x_.size() != nv) {
    x_ = Eigen::VectorXd::Zero(nv);
    y_ = Eigen::VectorXd::Zero(nc);
    z_ = Eigen::VectorXd::Zero(nc);
    have_warm_ = true;
  }
  // A previous solution can sit outside freshly tightened bounds.
  z_ = z_.cwiseMax(los).cwiseMin(his);

  constexpr double alpha = 1.6;
  constexpr int max_iter = 100000;
  constexpr int check_every = 25;

  auto finish = [&](Eigen::VectorXd x, Eigen::VectorXd y, const Residuals& r, int iters,
                    bool polished) {
    out.x = std::move(x);
    out.y = std::move(y);
    out.z = A_ * out.x;
    out.objective = 0.5 * out.x.dot(H_ * out.x) + f.dot(out.x);
    out.stat_residual = r.stat;
    out.primal_residual = r.prim;
    out.comp_residual = r.comp;
    out.iterations = iters;
    out.polished = polished;
  };

  // One polish attempt per distinct active-set guess; the guess changes as
  // the iterate settles, so failed attempts are retried exactly when there is
  // new information.
  std::vector<std::vector<int>> attempted_seeds;

  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd rhs = sigma_ * x_ - fs;
    rhs.noalias() += As_.transpose() * (rho_ * z_ - y_);
    const Eigen::VectorXd x_tilde = kkt_.solve(rhs);
    const Eigen::VectorXd z_tilde = As_ * x_tilde;

    x_ = alpha * x_tilde + (1.0 - alpha) * x_;
    const Eigen::VectorXd z_relaxed = alpha * z_tilde + (1.0 - alpha) * z_;
    const Eigen::VectorXd v = z_relaxed + y_ / rho_;
    const Eigen::VectorXd z_next = v.cwiseMax(los).cwiseMin(his);
    y_ += rho_ * (z_relaxed - z_next);
    z_ = z_next;

    if (iter % check_every != 0 && iter != max_iter) continue;

    // Contract residuals live on the original data.
    const Eigen::VectorXd x_un = D_.cwiseProduct(x_);
    const Eigen::VectorXd y_un = E_.cwiseProduct(y_) / cost_scale_;
    const Residuals r = kkt_residuals(H_, f, A_, lo, hi, x_un, y_un);
    if (r.score() <= 1.0) {
      std::vector<int> side(static_cast<std::size_t>(nc), 0);
      for (Eigen::Index i = 0; i < nc; ++i) {
        if (std::isfinite(hi[i]) && his[i] - z_[i] <= 1e-9 * std::max(1.0, std::abs(his[i])))
          side[static_cast<std::size_t>(i)] = 1;
        else if (std::isfinite(lo[i]) && z_[i] - los[i] <= 1e-9 * std::max(1.0, std::abs(los[i])))
          side[static_cast<std::size_t>(i)] = -1;
      }
      remember_side(side);
      finish(x_un, y_un, r, iter, false);
      return out;
    }

    // Candidate working-set seeds, best first: recently successful sets (the
    // walk crosses the few rows consecutive instances differ by), then the
    // primal parked pattern, which identifies the set long before the duals
    // settle. Each distinct seed is attempted once per solve.
    std::vector<std::vector<int>> seeds = recent_sides_;
    std::vector<int> prox(static_cast<std::size_t>(nc), 0);
    for (Eigen::Index i = 0; i < nc; ++i) {
      if (std::isfinite(hi[i]) && his[i] - z_[i] <= 1e-9 * std::max(1.0, std::abs(his[i])))
        prox[static_cast<std::size_t>(i)] = 1;
      else if (std::isfinite(lo[i]) && z_[i] - los[i] <= 1e-9 * std::max(1.0, std::abs(los[i])))
        prox[static_cast<std::size_t>(i)] = -1;
    }
    seeds.push_back(std::move(prox));
    for (auto& seed : seeds) {
      bool tried = false;
      for (const auto& s : attempted_seeds)
        if (s == seed) {
          tried = true;
          break;
        }
      if (tried) continue;
      Eigen::VectorXd xp, yp;
      const bool got = polish_solve(f, lo, hi, seed, &xp, &yp);
      attempted_seeds.push_back(std::move(seed));
      if (!got) continue;
      const Residuals rp = kkt_residuals(H_, f, A_, lo, hi, xp, yp);
      if (rp.score() <= 1.0) {
        // Adopt the polished point as the warm start so the next solve
        // starts at a converged optimum.
        x_ = xp.cwiseQuotient(D_);
        y_ = cost_scale_ * yp.cwiseQuotient(E_);
        z_ = (As_ * x_).cwiseMax(los).cwiseMin(his);
        finish(std::move(xp), std::move(yp), rp, iter, true);
        return out;
      }
    }

    if (iter % 100 == 0) {
      // Rebalance the penalty when primal and dual progress diverge, judged
      // on the scaled iterate.
      const Eigen::VectorXd as_x = As_ * x_;
      const double prim_res = (as_x - z_).lpNorm<Eigen::Infinity>();
      const double prim_scale =
          std::max({as_x.lpNorm<Eigen::Infinity>(), z_.lpNorm<Eigen::Infinity>(), 1e-8});
      const Eigen::VectorXd hs_x = cost_scale_ * (Hs_ * x_);
      const Eigen::VectorXd aty = As_.transpose() * y_;
      const double dual_res = (hs_x + fs + aty).lpNorm<Eigen::Infinity>();
      const double dual_scale =
          std::max({hs_x.lpNorm<Eigen::Infinity>(), aty.lpNorm<Eigen::Infinity>(),
                    fs.lpNorm<Eigen::Infinity>(), 1e-8});
      const double ratio = (prim_res / prim_scale) / std::max(dual_res / dual_scale, 1e-16);
      const double rho_new = std::clamp(rho_ * std::sqrt(ratio), 1e-6, 1e6);
      if (rho_new > 5.0 * rho_ || rho_new < 0.2 * rho_) {
        rho_ = rho_new;
        factor();
      }
    }
  }
  throw NumericError("QpSolver: no convergence within the iteration budget");
}

QpSolution QpSolver::solve_seeded(const Eigen::VectorXd& f, const Eigen::VectorXd& lo,
                                  const Eigen::VectorXd& hi, std::vector<int> side) {
  const Eigen::Index nc = A_.rows();
  if (static_cast<Eigen::Index>(side.size()) == nc) {
    Eigen::VectorXd xp, yp;
    if (polish_solve(f, lo, hi, std::move(side), &xp, &yp)) {
      const Residuals rp = kkt_residuals(H_, f, A_, lo, hi, xp, yp);
      if (rp.score() <= 1.0) {
        if (cost_scale_ != 0.0) {
          // Keep the splitting iterate at the optimum so a later fallback
          // solve starts converged.
          x_ = xp.cwiseQuotient(D_);
          y_ = cost_scale_ * yp.cwiseQuotient(E_);
          Eigen::VectorXd los(nc), his(nc);
          for (Eigen::Index i = 0; i < nc; ++i) {
            los[i] = std::isfinite(lo[i]) ? E_[i] * lo[i] : lo[i];
            his[i] = std::isfinite(hi[i]) ? E_[i] * hi[i] : hi[i];
          }
          z_ = (As_ * x_).cwiseMax(los).cwiseMin(his);
          have_warm_ = true;
        }
        QpSolution out;
        out.x = std::move(xp);
        out.y = std::move(yp);
        out.z = A_ * out.x;
        out.objective = 0.5 * out.x.dot(H_ * out.x) + f.dot(out.x);
        out.stat_residual = rp.stat;
        out.primal_residual = rp.prim;
        out.comp_residual = rp.comp;
        out.iterations = 0;
        out.polished = true;
        return out;
      }
    }
  }
  return solve(f, lo, hi);
}

QpSolution solve_qp(const QpProblem& qp) {
  QpSolver solver(qp.H, qp.A);
  return solver.solve(qp.f, qp.lo, qp.hi);
}

// ----------------------------------------------------------------------------
// Condensation
// ----------------------------------------------------------------------------

Eigen::VectorXd ReferenceSignal::value(double t) const {
  if (values.empty()) throw ConfigError("ReferenceSignal: no segments");
  if (start_times.size() != values.size())
    throw ConfigError("ReferenceSignal: segment count mismatch");
  std::size_t pick = 0;
  for (std::size_t i = 0; i < start_times.size(); ++i) {
    if (start_times[i] <= t) pick = i;
  }
  return values[pick];
}

namespace {

void validate_mpc_config(const LinearPredictor& p, const MpcConfig& cfg) {
  const Eigen::Index n = p.C.rows();
  const Eigen::Index m = p.B.cols();
  if (cfg.horizon < 1) throw ConfigError("mpc: horizon must be at least 1");
  if (cfg.Q.rows() != n || cfg.Q.cols() != n) throw ConfigError("mpc: Q shape mismatch");
  if (cfg.R.rows() != m || cfg.R.cols() != m) throw ConfigError("mpc: R shape mismatch");
  if (cfg.u_lo.size() != m || cfg.u_hi.size() != m) throw ConfigError("mpc: input bound size");
  for (Eigen::Index i = 0; i < m; ++i)
    if (!(cfg.u_lo[i] < cfg.u_hi[i])) throw ConfigError("mpc: empty input box");
  if (cfg.x_lo.size() != 0 && cfg.x_lo.size() != n) throw ConfigError("mpc: state bound size");
  if (cfg.x_hi.size() != cfg.x_lo.size()) throw ConfigError("mpc: state bound size");
  if (p.A.rows() != p.A.cols() || p.A.rows() != p.B.rows() || p.C.cols() != p.A.rows())
    throw ConfigError("mpc: predictor shape mismatch");
}

}  // namespace

Condensation build_condensation(const LinearPredictor& p, const MpcConfig& cfg) {
  validate_mpc_config(p, cfg);
  Condensation c;
  c.n = static_cast<int>(p.C.rows());
  c.m = static_cast<int>(p.B.cols());
  c.N = static_cast<int>(p.A.rows());
  c.Th = cfg.horizon;
  c.n_inputs = c.m * c.Th;

  // Free and forced response maps over the horizon. S_j = C A^j B fills the
  // block-Toeplitz Theta; Gamma stacks C A^t for t = 1..Th.
  std::vector<Eigen::MatrixXd> S(static_cast<std::size_t>(c.Th));
  c.Gamma.resize(c.n * c.Th, c.N);
  c.Theta = Eigen::MatrixXd::Zero(c.n * c.Th, c.n_inputs);
  Eigen::MatrixXd M = p.C;  // C A^j while marching
  for (int j = 0; j < c.Th; ++j) {
    S[static_cast<std::size_t>(j)].noalias() = M * p.B;
    M = M * p.A;
    c.Gamma.middleRows(j * c.n, c.n) = M;
  }
  for (int t = 1; t <= c.Th; ++t)
    for (int k = 0; k < t; ++k)
      c.Theta.block((t - 1) * c.n, k * c.m, c.n, c.m) = S[static_cast<std::size_t>(t - 1 - k)];

  // Qbar Theta through per-block products keeps Qbar implicit.
  Eigen::MatrixXd qbar_theta(c.n * c.Th, c.n_inputs);
  for (int t = 0; t < c.Th; ++t)
    qbar_theta.middleRows(t * c.n, c.n).noalias() = cfg.Q * c.Theta.middleRows(t * c.n, c.n);
  c.theta_t_qbar = qbar_theta.transpose();  // (m Th) x (n Th)

  // Slack layout: one per bounded output sample, shared by both sides of the
  // sample's box.
  const bool have_state_bounds = cfg.x_lo.size() == c.n;
  if (have_state_bounds) {
    for (int t = 1; t <= c.Th; ++t)
      for (int i = 0; i < c.n; ++i)
        if (std::isfinite(cfg.x_lo[i]) || std::isfinite(cfg.x_hi[i]))
          c.soft_output.push_back((t - 1) * c.n + i);
  }
  c.n_slacks = static_cast<int>(c.soft_output.size());

  double max_q = 0.0;
  for (int i = 0; i < c.n; ++i) max_q = std::max(max_q, cfg.Q(i, i));
  c.slack_weight = cfg.soft_penalty_scale * std::max(max_q, 1.0);

  // Decision vector [inputs; slacks]. The quadratic slack penalty sits on the
  // Hessian diagonal, so slack duals scale with the actual excursion instead
  // of a fixed penalty rail, and an engaged sample holds its slack strictly
  // positive, keeping the active rows independent.
  const int nv = c.n_inputs + c.n_slacks;
  c.H = Eigen::MatrixXd::Zero(nv, nv);
  c.H.topLeftCorner(c.n_inputs, c.n_inputs).noalias() = 2.0 * (c.Theta.transpose() * qbar_theta);
  for (int t = 0; t < c.Th; ++t)
    c.H.block(t * c.m, t * c.m, c.m, c.m) += 2.0 * cfg.R;
  for (int j = 0; j < c.n_slacks; ++j)
    c.H(c.n_inputs + j, c.n_inputs + j) = 2.0 * c.slack_weight;
  c.H.diagonal().array() += cfg.tikhonov;

  // Constraint rows: input box, slack nonnegativity, then the soft pairs
  // (theta_row . u) - s <= hi - c  and  (theta_row . u) + s >= lo - c.
  int n_soft_rows = 0;
  c.soft_row_hi.assign(static_cast<std::size_t>(c.n_slacks), -1);
  c.soft_row_lo.assign(static_cast<std::size_t>(c.n_slacks), -1);
  for (int j = 0; j < c.n_slacks; ++j) {
    const int coord = c.soft_output[static_cast<std::size_t>(j)] % c.n;
    if (std::isfinite(cfg.x_hi[coord])) ++n_soft_rows;
    if (std::isfinite(cfg.x_lo[coord])) ++n_soft_rows;
  }
  const int nc = nv + n_soft_rows;
  c.A = Eigen::MatrixXd::Zero(nc, nv);
  c.lo = Eigen::VectorXd::Constant(nc, -kInf);
  c.hi = Eigen::VectorXd::Constant(nc, kInf);
  c.A.topLeftCorner(nv, nv).setIdentity();
  for (int t = 0; t < c.Th; ++t) {
    c.lo.segment(t * c.m, c.m) = cfg.u_lo;
    c.hi.segment(t * c.m, c.m) = cfg.u_hi;
  }
  for (int j = 0; j < c.n_slacks; ++j) c.lo[c.n_inputs + j] = 0.0;

  int row = nv;
  for (int j = 0; j < c.n_slacks; ++j) {
    const int out_idx = c.soft_output[static_cast<std::size_t>(j)];
    const int coord = out_idx % c.n;
    if (std::isfinite(cfg.x_hi[coord])) {
      c.A.block(row, 0, 1, c.n_inputs) = c.Theta.row(out_idx);
      c.A(row, c.n_inputs + j) = -1.0;
      c.soft_row_hi[static_cast<std::size_t>(j)] = row;
      ++row;
    }
    if (std::isfinite(cfg.x_lo[coord])) {
      c.A.block(row, 0, 1, c.n_inputs) = c.Theta.row(out_idx);
      c.A(row, c.n_inputs + j) = 1.0;
      c.soft_row_lo[static_cast<std::size_t>(j)] = row;
      ++row;
    }
  }
  return c;
}

namespace {

// Linear term and per-solve bounds from the current lifted state and the
// reference window starting one sample after t0.
void fill_solve_terms(const Condensation& c, const MpcConfig& cfg, const Eigen::VectorXd& z0,
                      double dt, double t0, Eigen::VectorXd* f, Eigen::VectorXd* lo,
                      Eigen::VectorXd* hi) {
  const Eigen::VectorXd free_resp = c.Gamma * z0;
  Eigen::VectorXd offset(c.n * c.Th);
  for (int t = 1; t <= c.Th; ++t) {
    const Eigen::VectorXd r = cfg.reference.value(t0 + t * dt);
    if (r.size() != c.n) throw ConfigError("mpc: reference dimension mismatch");
    offset.segment((t - 1) * c.n, c.n) = free_resp.segment((t - 1) * c.n, c.n) - r;
  }
  f->setZero(c.n_inputs + c.n_slacks);
  f->head(c.n_inputs).noalias() = 2.0 * (c.theta_t_qbar * offset);

  *lo = c.lo;
  *hi = c.hi;
  for (int j = 0; j < c.n_slacks; ++j) {
    const int out_idx = c.soft_output[static_cast<std::size_t>(j)];
    const int coord = out_idx % c.n;
    const int rh = c.soft_row_hi[static_cast<std::size_t>(j)];
    const int rl = c.soft_row_lo[static_cast<std::size_t>(j)];
    if (rh >= 0) (*hi)[rh] = cfg.x_hi[coord] - free_resp[out_idx];
    if (rl >= 0) (*lo)[rl] = cfg.x_lo[coord] - free_resp[out_idx];
  }
}

}  // namespace
namespace {

// Working-set identification for the slack-structured problem. For fixed
// inputs the optimal slack of a sample equals its box violation, so the
// condensed problem reduces to a strictly convex piecewise-quadratic over
// the input box. A primal active-set walk minimizes it exactly: the working
// set (inputs pinned to bounds, samples engaged past a bound) is discrete
// state advanced by ratio tests, so the terminal state names the active
// rows without any geometric tolerance, however far the previous step's
// set is. Returns an empty vector when the pivot budget runs out.
std::vector<int> structured_seed(const Condensation& c, const Eigen::VectorXd& f,
                                 const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                 Eigen::VectorXd* warm_u) {
  const int nu = c.n_inputs;
  const int ns = c.n_slacks;
  const double w = c.slack_weight;
  const auto Hu = c.H.topLeftCorner(nu, nu);
  const Eigen::VectorXd fu = f.head(nu);
  const Eigen::VectorXd ulo = c.lo.head(nu);
  const Eigen::VectorXd uhi = c.hi.head(nu);

  Eigen::MatrixXd Ts(ns, nu);
  Eigen::VectorXd bh(ns), bl(ns);
  for (int j = 0; j < ns; ++j) {
    const auto js = static_cast<std::size_t>(j);
    Ts.row(j) = c.Theta.row(c.soft_output[js]);
    bh[j] = c.soft_row_hi[js] >= 0 ? hi[c.soft_row_hi[js]] : kInf;
    bl[j] = c.soft_row_lo[js] >= 0 ? lo[c.soft_row_lo[js]] : -kInf;
  }

  Eigen::VectorXd u = (warm_u->size() == nu) ? *warm_u : Eigen::VectorXd::Zero(nu);
  u = u.cwiseMax(ulo).cwiseMin(uhi);
  Eigen::VectorXd r = Ts * u;

  Eigen::VectorXi bside = Eigen::VectorXi::Zero(nu);
  Eigen::VectorXi eside = Eigen::VectorXi::Zero(ns);
  for (int i = 0; i < nu; ++i) {
    if (u[i] >= uhi[i]) bside[i] = 1;
    else if (u[i] <= ulo[i]) bside[i] = -1;
  }
  for (int j = 0; j < ns; ++j) {
    if (r[j] > bh[j]) eside[j] = 1;
    else if (r[j] < bl[j]) eside[j] = -1;
  }

  const int max_pivots = 2000;
  bool converged = false;
  Eigen::MatrixXd M(nu, nu);
  Eigen::VectorXd c_lin(nu), ut(nu), d(nu), dr(ns), g(nu);
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    M = Hu;
    c_lin = fu;
    for (int j = 0; j < ns; ++j) {
      if (eside[j] == 0) continue;
      const double tgt = eside[j] > 0 ? bh[j] : bl[j];
      M.noalias() += (2.0 * w) * (Ts.row(j).transpose() * Ts.row(j));
      c_lin.noalias() -= (2.0 * w * tgt) * Ts.row(j).transpose();
    }

    std::vector<int> free_idx;
    free_idx.reserve(static_cast<std::size_t>(nu));
    for (int i = 0; i < nu; ++i) {
      if (bside[i] > 0) ut[i] = uhi[i];
      else if (bside[i] < 0) ut[i] = ulo[i];
      else free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
      Eigen::MatrixXd Mf(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        const int ia = free_idx[static_cast<std::size_t>(a)];
        double s = c_lin[ia];
        for (int i = 0; i < nu; ++i)
          if (bside[i] != 0) s += M(ia, i) * ut[i];
        rhs[a] = -s;
        for (int b = 0; b < nf; ++b) Mf(a, b) = M(ia, free_idx[static_cast<std::size_t>(b)]);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(Mf);
      if (llt.info() != Eigen::Success) return {};
      const Eigen::VectorXd uf = llt.solve(rhs);
      for (int a = 0; a < nf; ++a) ut[free_idx[static_cast<std::size_t>(a)]] = uf[a];
    }

    d = ut - u;
    if (d.lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, u.lpNorm<Eigen::Infinity>())) {
      // Face minimum. A pinned input stays only while pushing it into the
      // box would not lower the objective.
      g.noalias() = M * u;
      g += c_lin;
      int worst = -1;
      double worst_v = 0.0;
      for (int i = 0; i < nu; ++i) {
        const double v = bside[i] > 0 ? g[i] : (bside[i] < 0 ? -g[i] : 0.0);
        if (v > worst_v) {
          worst_v = v;
          worst = i;
        }
      }
      if (worst < 0 || worst_v <= 1e-10 * std::max(1.0, g.lpNorm<Eigen::Infinity>())) {
        converged = true;
        break;
      }
      bside[worst] = 0;
      continue;
    }

    dr.noalias() = Ts * d;
    double alpha = 1.0;
    int ev_kind = 0, ev_idx = -1, ev_side = 0;
    for (int i = 0; i < nu; ++i) {
      if (bside[i] != 0 || d[i] == 0.0) continue;
      if (d[i] > 0.0 && std::isfinite(uhi[i])) {
        const double a = (uhi[i] - u[i]) / d[i];
        if (a < alpha) { alpha = a; ev_kind = 1; ev_idx = i; ev_side = 1; }
      } else if (d[i] < 0.0 && std::isfinite(ulo[i])) {
        const double a = (ulo[i] - u[i]) / d[i];
        if (a < alpha) { alpha = a; ev_kind = 1; ev_idx = i; ev_side = -1; }
      }
    }
    for (int j = 0; j < ns; ++j) {
      if (dr[j] == 0.0) continue;
      if (eside[j] == 0) {
        if (dr[j] > 0.0 && std::isfinite(bh[j])) {
          const double a = (bh[j] - r[j]) / dr[j];
          if (a >= 0.0 && a < alpha) { alpha = a; ev_kind = 2; ev_idx = j; ev_side = 1; }
        } else if (dr[j] < 0.0 && std::isfinite(bl[j])) {
          const double a = (bl[j] - r[j]) / dr[j];
          if (a >= 0.0 && a < alpha) { alpha = a; ev_kind = 2; ev_idx = j; ev_side = -1; }
        }
      } else if (eside[j] > 0 && dr[j] < 0.0) {
        const double a = (bh[j] - r[j]) / dr[j];
        if (a >= 0.0 && a < alpha) { alpha = a; ev_kind = 3; ev_idx = j; ev_side = 0; }
      } else if (eside[j] < 0 && dr[j] > 0.0) {
        const double a = (bl[j] - r[j]) / dr[j];
        if (a >= 0.0 && a < alpha) { alpha = a; ev_kind = 3; ev_idx = j; ev_side = 0; }
      }
    }

    if (ev_kind == 0) {
      u = ut;
    } else {
      u += std::max(alpha, 0.0) * d;
      u = u.cwiseMax(ulo).cwiseMin(uhi);
      if (ev_kind == 1) {
        bside[ev_idx] = ev_side;
        u[ev_idx] = ev_side > 0 ? uhi[ev_idx] : ulo[ev_idx];
      } else if (ev_kind == 2) {
        eside[ev_idx] = ev_side;
      } else {
        eside[ev_idx] = 0;
      }
    }
    r.noalias() = Ts * u;
  }
  if (!converged) return {};

  std::vector<int> side(static_cast<std::size_t>(c.A.rows()), 0);
  for (int i = 0; i < nu; ++i) side[static_cast<std::size_t>(i)] = bside[i];
  for (int j = 0; j < ns; ++j) {
    const auto js = static_cast<std::size_t>(j);
    if (eside[j] > 0)
      side[static_cast<std::size_t>(c.soft_row_hi[js])] = 1;
    else if (eside[j] < 0)
      side[static_cast<std::size_t>(c.soft_row_lo[js])] = -1;
    else
      side[static_cast<std::size_t>(nu + j)] = -1;
  }
  *warm_u = u;
  return side;
}

}  // namespace

QpProblem condense(const LinearPredictor& p, const MpcConfig& cfg, const Eigen::VectorXd& z0,
                   double dt, double t0) {
  if (z0.size() != p.A.rows()) throw ConfigError("condense: z0 size mismatch");
  const Condensation c = build_condensation(p, cfg);
  QpProblem qp;
  qp.H = c.H;
  qp.A = c.A;
  fill_solve_terms(c, cfg, z0, dt, t0, &qp.f, &qp.lo, &qp.hi);
  return qp;
}

CondensedController::CondensedController(const LinearPredictor& p, const MpcConfig& cfg, double dt)
    : p_(p), cfg_(cfg), dt_(dt), cond_(build_condensation(p, cfg)),
      solver_(cond_.H, cond_.A) {
  if (!(dt > 0.0)) throw ConfigError("CondensedController: dt must be positive");
}

Eigen::VectorXd CondensedController::step(const Eigen::VectorXd& x, double t) {
  const Eigen::VectorXd z0 = p_.dict.lift(x);
  Eigen::VectorXd f, lo, hi;
  fill_solve_terms(cond_, cfg_, z0, dt_, t, &f, &lo, &hi);
  if (cond_.n_slacks > 0) {
    std::vector<int> seed = structured_seed(cond_, f, lo, hi, &warm_u_);
    last_ = solver_.solve_seeded(f, lo, hi, std::move(seed));
  } else {
    last_ = solver_.solve(f, lo, hi);
  }
  warm_u_ = last_.x.head(cond_.n_inputs);
  last_violation_ =
      (cond_.n_slacks > 0) ? last_.x.tail(cond_.n_slacks).cwiseMax(0.0).maxCoeff() : 0.0;
  Eigen::VectorXd u = last_.x.head(cond_.m);
  return u.cwiseMax(cfg_.u_lo).cwiseMin(cfg_.u_hi);
}

// ----------------------------------------------------------------------------
// Closed loop
// ----------------------------------------------------------------------------

ClosedLoopResult run_closed_loop(const PlantStepFn& plant_step_fn, double dt,
                                 const LinearPredictor& p, const MpcConfig& cfg,
                                 const Eigen::VectorXd& x0, double duration) {
  if (!(duration > 0.0)) throw ConfigError("run_closed_loop: duration must be positive");
  const int S = std::max(1, static_cast<int>(std::llround(duration / dt)));
  const Eigen::Index n = x0.size();
  const Eigen::Index m = cfg.u_lo.size();

  CondensedController controller(p, cfg, dt);
  DitherStream meas_stream(derive_seed(cfg.measurement_dither_seed, "measurement", 0));
  const bool quantize_meas = !cfg.measurement_quantizers.empty();

  ClosedLoopResult out;
  out.X.resize(n, S + 1);
  out.U.resize(m, S);
  out.Ref.resize(n, S + 1);
  out.stage_cost.resize(S + 1);
  out.X.col(0) = x0;

  for (int t = 0; t < S; ++t) {
    const double now = t * dt;
    Eigen::VectorXd measured = out.X.col(t);
    if (quantize_meas)
      measured = dither_quantize_vector(cfg.measurement_quantizers, measured, meas_stream);
    const Eigen::VectorXd u = controller.step(measured, now);
    out.max_violation = std::max(out.max_violation, controller.last_violation());

    const Eigen::VectorXd ref = cfg.reference.value(now);
    const Eigen::VectorXd err = out.X.col(t) - ref;
    out.Ref.col(t) = ref;
    out.U.col(t) = u;
    out.stage_cost[t] = err.dot(cfg.Q * err) + u.dot(cfg.R * u);

    Eigen::VectorXd next = plant_step_fn(out.X.col(t), u);
    if (!next.allFinite() || next.lpNorm<Eigen::Infinity>() > 1e6)
      throw NumericError("closed loop diverged at step " + std::to_string(t + 1));
    out.X.col(t + 1) = next;
  }
  const Eigen::VectorXd ref_end = cfg.reference.value(S * dt);
  const Eigen::VectorXd err_end = out.X.col(S) - ref_end;
  out.Ref.col(S) = ref_end;
  out.stage_cost[S] = err_end.dot(cfg.Q * err_end);
  out.J = out.stage_cost.sum();
  return out;
}

ClosedLoopResult run_closed_loop(const PlantModel& plant, const LinearPredictor& p,
                                 const MpcConfig& cfg, const Eigen::VectorXd& x0,
                                 double duration) {
  return run_closed_loop(
      [&plant](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        return plant_step(plant, x, u);
      },
      plant.dt, p, cfg, x0, duration);
}

// ----------------------------------------------------------------------------
// Scenarios
// ----------------------------------------------------------------------------

Scenario default_scenario(const PlantModel& plant) {
  Scenario sc;
  MpcConfig& cfg = sc.cfg;
  const int n = plant.n;
  const int m = plant.m;
  cfg.Q = Eigen::MatrixXd::Zero(n, n);
  cfg.R = Eigen::MatrixXd::Zero(m, m);
  cfg.x_lo = Eigen::VectorXd::Constant(n, -kInf);
  cfg.x_hi = Eigen::VectorXd::Constant(n, kInf);
  sc.duration = 6.0;
  const double t_switch = sc.duration / 2.0;

  auto two_level = [&](int coord, double first, double second) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n), b = Eigen::VectorXd::Zero(n);
    a[coord] = first;
    b[coord] = second;
    cfg.reference.start_times = {0.0, t_switch};
    cfg.reference.values = {a, b};
  };

  switch (plant.kind) {
    case PlantKind::pendulum:
      cfg.Q(0, 0) = 1.0;
      cfg.R(0, 0) = 0.01;
      cfg.horizon = 100;
      cfg.u_lo = Eigen::VectorXd::Constant(1, -4.0);
      cfg.u_hi = Eigen::VectorXd::Constant(1, 4.0);
      cfg.x_lo[0] = -0.6;
      cfg.x_hi[0] = 0.6;
      two_level(0, 0.4, -0.4);
      sc.x0 = Eigen::VectorXd::Zero(2);
      break;
    case PlantKind::vanderpol:
      cfg.Q(0, 0) = 1.0;
      cfg.R(0, 0) = 0.01;
      cfg.horizon = 100;
      cfg.u_lo = Eigen::VectorXd::Constant(1, -4.0);
      cfg.u_hi = Eigen::VectorXd::Constant(1, 4.0);
      cfg.x_lo[0] = -1.0;
      cfg.x_hi[0] = 1.0;
      two_level(0, 0.5, -0.5);
      sc.x0 = Eigen::VectorXd::Zero(2);
      break;
    case PlantKind::motor:
      cfg.Q(1, 1) = 1.0;
      cfg.R(0, 0) = 0.01;
      cfg.horizon = 100;
      cfg.u_lo = Eigen::VectorXd::Constant(1, -2.0);
      cfg.u_hi = Eigen::VectorXd::Constant(1, 2.0);
      cfg.x_lo[1] = -1.0;
      cfg.x_hi[1] = 1.0;
      two_level(1, 0.4, -0.4);
      // Armature current at its unforced equilibrium, shaft at rest: torque
      // authority is immediately available there.
      sc.x0 = Eigen::VectorXd::Zero(2);
      sc.x0[0] = plant.params.at("ua") / plant.params.at("Ra");
      break;
    case PlantKind::kdv: {
      cfg.Q = Eigen::MatrixXd::Identity(n, n);
      cfg.horizon = 10;
      cfg.u_lo = Eigen::VectorXd::Constant(3, -1.0);
      cfg.u_hi = Eigen::VectorXd::Constant(3, 1.0);
      Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 0.2);
      Eigen::VectorXd b = Eigen::VectorXd::Constant(n, 0.4);
      cfg.reference.start_times = {0.0, t_switch};
      cfg.reference.values = {a, b};
      sc.x0 = Eigen::VectorXd::Zero(n);
      break;
    }
  }
  return sc;
}

}  // namespace kqid
