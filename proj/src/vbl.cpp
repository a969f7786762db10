#include "sparsevb/vbl.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <numbers>

namespace sparsevb {

namespace {

double logdet_psd(const MatrixXd& C) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C);
  double ld = 0.0;
  for (Eigen::Index i = 0; i < C.rows(); ++i)
    ld += std::log(std::max(eig.eigenvalues()(i), 1e-300));
  return ld;
}

// log normalizer of the prior GIG(nu, delta, lambda); 0 when improper
// (only additive constants are lost).
double prior_log_normalizer(const HyperParams& hp) {
  const GigParams g = gig_from_hyper(hp);
  try {
    return log_gig_normalizer(g.nu, g.delta, g.lambda);
  } catch (const std::domain_error&) {
    return 0.0;
  }
}

double em_log_joint_from_misfit(double misfit_sq, long n, const HyperParams& hp,
                                const VectorXd& mu) {
  const GigParams g = gig_from_hyper(hp);
  double sum_logz = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double chi = std::sqrt(g.delta * g.delta + mu(j) * mu(j));
    sum_logz += log_gig_normalizer(g.nu - 0.5, chi, g.lambda);
  }
  const double p = double(mu.size());
  return -0.5 * double(n) * std::log(2.0 * std::numbers::pi * hp.gamma_sq) -
         0.5 * misfit_sq / hp.gamma_sq - 0.5 * p * std::log(2.0 * std::numbers::pi) +
         sum_logz - p * prior_log_normalizer(hp);
}

}  // namespace

VectorXd em_theta_update(const VectorXd& mu, const HyperParams& hp) {
  const GigParams g = gig_from_hyper(hp);
  VectorXd inv_theta(mu.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j)
    inv_theta(j) = cond_inv_theta(g, mu(j) * mu(j), hp.kind);
  return inv_theta;
}

VectorXd vbem_theta_update(const VectorXd& m, const VectorXd& C_diag, const HyperParams& hp) {
  if (m.size() != C_diag.size())
    throw std::invalid_argument("vbem_theta_update: size mismatch");
  if ((C_diag.array() < 0.0).any())
    throw std::domain_error("vbem_theta_update: C_diag must be >= 0");
  const GigParams g = gig_from_hyper(hp);
  VectorXd inv_theta(m.size());
  for (Eigen::Index j = 0; j < m.size(); ++j)
    inv_theta(j) = cond_inv_theta(g, C_diag(j) + m(j) * m(j), hp.kind);
  return inv_theta;
}

PosteriorTriple default_init(Eigen::Index p) {
  return PosteriorTriple{VectorXd::Zero(p), VectorXd::Zero(p),
                         MatrixXd::Identity(p, p)};
}

namespace {

// One VBEM (or EM) solve given theta, in the requested form.
// For EM callers only m is used and C is left empty.
void gain_solve(const DesignBlock* block, const SufficientStats* stats,
                const VectorXd& theta, double gamma_sq, bool want_C, bool primal,
                VectorXd& m, MatrixXd& C) {
  if (primal) {
    const SufficientStats st = stats ? *stats : stats_from_block(*block);
    const Eigen::Index p = st.p();
    MatrixXd H = st.A / gamma_sq;
    H.diagonal() += theta.cwiseInverse();
    MatrixXd rhs(p, want_C ? p + 1 : 1);
    if (want_C) rhs.leftCols(p) = MatrixXd::Identity(p, p);
    rhs.col(rhs.cols() - 1) = st.v / gamma_sq;
    MatrixXd sol;
    ldlt_solve_with_jitter(H, rhs, sol);
    m = sol.col(rhs.cols() - 1);
    if (want_C) {
      C = sol.leftCols(p);
      symmetrize(C);
    }
    return;
  }
  // dual / gain form: K = D(theta) X^T (X D(theta) X^T + gamma^2 I)^{-1}
  const MatrixXd& X = block->X;
  const Eigen::Index n = X.rows();
  MatrixXd B = X * theta.asDiagonal();  // X D(theta), n x p
  MatrixXd S = B * X.transpose();
  symmetrize(S);
  S.diagonal().array() += gamma_sq;
  MatrixXd rhs(n, want_C ? Eigen::Index(B.cols() + 1) : 1);
  if (want_C) rhs.leftCols(B.cols()) = B;
  rhs.col(rhs.cols() - 1) = block->Y;
  MatrixXd sol;
  ldlt_solve_with_jitter(S, rhs, sol);
  m = B.transpose() * sol.col(rhs.cols() - 1);
  if (want_C) {
    C = MatrixXd(theta.asDiagonal());
    C.noalias() -= B.transpose() * sol.leftCols(B.cols());
    symmetrize(C);
  }
}

PosteriorTriple step_impl(const DesignBlock* block, const SufficientStats* stats,
                          const HyperParams& hp, const PosteriorTriple& cur,
                          const VblOptions& opts) {
  const Eigen::Index p = stats ? stats->p() : block->p();
  const bool primal = stats != nullptr ||
                      (opts.form == PosteriorForm::automatic ? block->p() <= block->n()
                                                             : opts.form == PosteriorForm::primal);
  VectorXd theta_vbem, theta_em;
  if (hp.kind == PriorKind::frozen_gaussian) {
    theta_vbem = opts.frozen_theta.size() ? opts.frozen_theta : VectorXd(cur.C.diagonal());
    theta_em = theta_vbem;
  } else {
    const VectorXd c_for_update =
        opts.point_mass_q_beta ? VectorXd::Zero(p).eval() : cur.C.diagonal().eval();
    theta_vbem = vbem_theta_update(cur.m, c_for_update, hp).cwiseInverse();
    theta_em = em_theta_update(cur.mu, hp).cwiseInverse();
  }
  PosteriorTriple next;
  gain_solve(block, stats, theta_vbem, hp.gamma_sq, true, primal, next.m, next.C);
  MatrixXd unused;
  gain_solve(block, stats, theta_em, hp.gamma_sq, false, primal, next.mu, unused);
  return next;
}

VblResult vbl_core(const DesignBlock* block, const SufficientStats* stats,
                   const HyperParams& hp, const PosteriorTriple& init,
                   const StoppingRule& stop, const VblOptions& opts) {
  hp.validate();
  const Eigen::Index p = stats ? stats->p() : block->p();

  VblResult res;
  PosteriorTriple cur = init;
  if (cur.mu.size() != p || cur.m.size() != p || cur.C.rows() != p)
    throw std::invalid_argument("vbl_iterate: init has wrong dimensions");
  VblOptions step_opts = opts;
  if (hp.kind == PriorKind::frozen_gaussian && step_opts.frozen_theta.size() == 0)
    step_opts.frozen_theta = cur.C.diagonal();
  res.best_misfit = std::numeric_limits<double>::infinity();

  auto misfit_of = [&](const VectorXd& w) {
    if (block) return (block->X * w - block->Y).norm();
    double sq = stats->s - 2.0 * stats->v.dot(w) + w.dot(stats->A * w);
    return std::sqrt(std::max(sq, 0.0));
  };

  for (int t = 0; t < stop.max_iter; ++t) {
    PosteriorTriple next;
    try {
      next = step_impl(block, stats, hp, cur, step_opts);
    } catch (const IllConditionedError& e) {
      throw IllConditionedError(std::string(e.what()) + " at iteration " + std::to_string(t),
                                e.rcond);
    }

    const double misfit_m = misfit_of(next.m);
    const double misfit_mu = misfit_of(next.mu);
    const double delta_m = (next.m - cur.m).norm();
    const double delta_mu = (next.mu - cur.mu).norm();
    const double delta_C = (next.C - cur.C).norm();

    if (opts.record_trace) {
      TraceRow row;
      row.iter = t;
      row.misfit = misfit_m;
      row.elbo = stats ? elbo_stats(*stats, hp, next.m, next.C)
                       : elbo(*block, hp, next.m, next.C);
      const long n_obs = stats ? stats->count : long(block->n());
      row.em_logjoint =
          em_log_joint_from_misfit(misfit_mu * misfit_mu, n_obs, hp, next.mu);
      row.delta_m = delta_m;
      row.delta_mu = delta_mu;
      res.trace.push_back(row);
    }
    if (misfit_m < res.best_misfit) {
      res.best_misfit = misfit_m;
      res.best = next;
      res.best_iter = t;
    }
    if (opts.observer) opts.observer(t, next);

    cur = std::move(next);
    res.iterations = t + 1;

    bool done = false;
    if (stop.metric == StopMetric::misfit)
      done = misfit_m <= stop.eps && misfit_mu <= stop.eps;
    else
      done = std::max({delta_m, delta_mu, delta_C}) <= stop.eps;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.triple = std::move(cur);
  return res;
}

}  // namespace

PosteriorTriple vbl_step(const DesignBlock& block, const HyperParams& hp,
                         const PosteriorTriple& cur, const VblOptions& opts) {
  return step_impl(&block, nullptr, hp, cur, opts);
}

PosteriorTriple vbl_step_stats(const SufficientStats& stats, const HyperParams& hp,
                               const PosteriorTriple& cur, const VblOptions& opts) {
  return step_impl(nullptr, &stats, hp, cur, opts);
}

VblResult vbl_iterate(const DesignBlock& block, const HyperParams& hp,
                      const PosteriorTriple& init, const StoppingRule& stop,
                      const VblOptions& opts) {
  return vbl_core(&block, nullptr, hp, init, stop, opts);
}

VblResult vbl_iterate_stats(const SufficientStats& stats, const HyperParams& hp,
                            const PosteriorTriple& init, const StoppingRule& stop,
                            const VblOptions& opts) {
  return vbl_core(nullptr, &stats, hp, init, stop, opts);
}

namespace {

double elbo_core(double misfit_sq, double tr_AC, Eigen::Index n, const HyperParams& hp,
                 const VectorXd& m, const MatrixXd& C) {
  const Eigen::Index p = m.size();
  const GigParams g = gig_from_hyper(hp);
  double sum_logz = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double chi = std::sqrt(g.delta * g.delta + C(j, j) + m(j) * m(j));
    sum_logz += log_gig_normalizer(g.nu - 0.5, chi, g.lambda);
  }
  return -0.5 * double(n) * std::log(2.0 * std::numbers::pi * hp.gamma_sq) -
         0.5 * (misfit_sq + tr_AC) / hp.gamma_sq + sum_logz -
         double(p) * prior_log_normalizer(hp) + 0.5 * double(p) + 0.5 * logdet_psd(C);
}

}  // namespace

double elbo(const DesignBlock& block, const HyperParams& hp, const VectorXd& m,
            const MatrixXd& C) {
  const double misfit_sq = (block.X * m - block.Y).squaredNorm();
  const double tr_AC = (block.X * C).cwiseProduct(block.X).sum();
  return elbo_core(misfit_sq, tr_AC, block.n(), hp, m, C);
}

double elbo_stats(const SufficientStats& stats, const HyperParams& hp, const VectorXd& m,
                  const MatrixXd& C) {
  const double misfit_sq =
      std::max(stats.s - 2.0 * stats.v.dot(m) + m.dot(stats.A * m), 0.0);
  const double tr_AC = stats.A.cwiseProduct(C).sum();
  return elbo_core(misfit_sq, tr_AC, stats.count, hp, m, C);
}

double em_log_joint(const DesignBlock& block, const HyperParams& hp, const VectorXd& mu) {
  const double misfit_sq = (block.X * mu - block.Y).squaredNorm();
  return em_log_joint_from_misfit(misfit_sq, long(block.n()), hp, mu);
}

std::vector<CredibleReport> credible_flags(const PosteriorTriple& triple) {
  std::vector<CredibleReport> out;
  out.reserve(triple.m.size());
  for (Eigen::Index j = 0; j < triple.m.size(); ++j) {
    const double sd = std::sqrt(std::max(triple.C(j, j), 0.0));
    CredibleReport r;
    r.lo = triple.m(j) - 2.0 * sd;
    r.hi = triple.m(j) + 2.0 * sd;
    r.zero_inside = r.lo < 0.0 && 0.0 < r.hi;
    r.flagged = triple.mu(j) < r.lo || triple.mu(j) > r.hi;
    out.push_back(r);
  }
  return out;
}

VectorXd threshold(const VectorXd& v, double eps) {
  if (eps <= 0.0) throw std::domain_error("threshold: eps must be > 0");
  return (v.array().abs() > eps).select(v, VectorXd::Zero(v.size()));
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "iter,misfit,elbo,em_logjoint,delta_m,delta_mu\n";
  out.precision(17);
  for (const auto& r : trace)
    out << r.iter << ',' << r.misfit << ',' << r.elbo << ',' << r.em_logjoint << ','
        << r.delta_m << ',' << r.delta_mu << '\n';
}

}  // namespace sparsevb
