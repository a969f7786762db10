#include "sparsevb/gaussian.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

namespace sparsevb {

void HyperParams::validate() const {
  if (gamma_sq <= 0.0) throw std::domain_error("hyper: gamma_sq must be > 0");
  if (lambda < 0.0) throw std::domain_error("hyper: lambda must be >= 0");
  if (delta < 0.0) throw std::domain_error("hyper: delta must be >= 0");
}

DesignBlock::DesignBlock(MatrixXd X_, VectorXd Y_) : X(std::move(X_)), Y(std::move(Y_)) {
  if (X.rows() != Y.size())
    throw std::invalid_argument("DesignBlock: row count of X must equal length of Y");
  if (!X.allFinite() || !Y.allFinite())
    throw std::invalid_argument("DesignBlock: entries must be finite");
}

SufficientStats& SufficientStats::merge(const SufficientStats& other) {
  A += other.A;
  v += other.v;
  s += other.s;
  count += other.count;
  return *this;
}

PosteriorTriple PosteriorTriple::zero(Eigen::Index p) {
  return PosteriorTriple{VectorXd::Zero(p), VectorXd::Zero(p), MatrixXd::Zero(p, p)};
}

StoppingRule default_stopping(double gamma, Eigen::Index n, int max_iter) {
  return StoppingRule{max_iter, 0.9 * gamma * std::sqrt(double(n)), StopMetric::misfit};
}

void symmetrize(MatrixXd& C) {
  C = 0.5 * (C + C.transpose()).eval();
}

double ldlt_solve_with_jitter(const MatrixXd& A, const MatrixXd& rhs, MatrixXd& out) {
  const Eigen::Index p = A.rows();
  const double scale = A.trace() / double(p);
  double jitter = 0.0;
  for (int level = 0; level <= 7; ++level) {
    MatrixXd Aj = A;
    if (level > 0) {
      jitter = scale * 1e-12 * std::pow(10.0, level - 1);
      Aj.diagonal().array() += jitter;
    }
    Eigen::LLT<MatrixXd> llt(Aj);
    if (llt.info() == Eigen::Success) {
      out = llt.solve(rhs);
      if (out.allFinite()) return jitter;
    }
  }
  throw IllConditionedError("gaussian: system singular beyond jitter tolerance",
                            scale > 0.0 ? 1e-6 : 0.0);
}

SufficientStats stats_from_block(const DesignBlock& block) {
  SufficientStats st(block.p());
  st.A.noalias() = block.X.transpose() * block.X;
  st.v.noalias() = block.X.transpose() * block.Y;
  st.s = block.Y.squaredNorm();
  st.count = block.n();
  return st;
}

GaussianPosterior posterior_primal(const SufficientStats& stats, const VectorXd& prior_mean,
                                   const VectorXd& prior_precision_diag, double gamma_sq) {
  MatrixXd P0 = prior_precision_diag.asDiagonal();
  return posterior_primal(stats, prior_mean, P0, gamma_sq);
}

GaussianPosterior posterior_primal(const SufficientStats& stats, const VectorXd& prior_mean,
                                   const MatrixXd& prior_precision, double gamma_sq) {
  if (gamma_sq <= 0.0) throw std::domain_error("posterior_primal: gamma_sq must be > 0");
  const Eigen::Index p = stats.p();
  MatrixXd H = stats.A / gamma_sq + prior_precision;
  MatrixXd rhs(p, p + 1);
  rhs.leftCols(p) = MatrixXd::Identity(p, p);
  rhs.col(p) = stats.v / gamma_sq + prior_precision * prior_mean;
  MatrixXd sol;
  ldlt_solve_with_jitter(H, rhs, sol);
  GaussianPosterior post;
  post.C = sol.leftCols(p);
  symmetrize(post.C);
  post.m = sol.col(p);
  return post;
}

GaussianPosterior posterior_dual(const DesignBlock& block, const VectorXd& prior_mean,
                                 const MatrixXd& prior_cov, double gamma_sq) {
  if (gamma_sq <= 0.0) throw std::domain_error("posterior_dual: gamma_sq must be > 0");
  const Eigen::Index n = block.n(), p = block.p();
  MatrixXd C0Xt = prior_cov * block.X.transpose();           // p x n
  MatrixXd S = block.X * C0Xt;                               // n x n
  S.diagonal().array() += gamma_sq;
  MatrixXd rhs(n, p + 1);
  rhs.leftCols(p) = C0Xt.transpose();                        // X C0
  rhs.col(p) = block.Y - block.X * prior_mean;
  MatrixXd sol;
  ldlt_solve_with_jitter(S, rhs, sol);
  GaussianPosterior post;
  post.m = prior_mean + C0Xt * sol.col(p);
  post.C = prior_cov - C0Xt * sol.leftCols(p);
  symmetrize(post.C);
  return post;
}

GaussianPosterior posterior_auto(const DesignBlock& block, const VectorXd& prior_mean,
                                 const MatrixXd& prior_cov, double gamma_sq,
                                 PosteriorForm form) {
  bool primal = block.p() <= block.n();
  if (form == PosteriorForm::primal) primal = true;
  if (form == PosteriorForm::dual) primal = false;
  if (primal) {
    MatrixXd P0;
    ldlt_solve_with_jitter(prior_cov, MatrixXd::Identity(prior_cov.rows(), prior_cov.cols()), P0);
    symmetrize(P0);
    return posterior_primal(stats_from_block(block), prior_mean, P0, gamma_sq);
  }
  return posterior_dual(block, prior_mean, prior_cov, gamma_sq);
}

GaussianPosterior kalman_step(const GaussianPosterior& prev, const VectorXd& x, double y,
                              double gamma_sq) {
  VectorXd Cx = prev.C * x;
  const double denom = gamma_sq + x.dot(Cx);
  GaussianPosterior next;
  next.m = prev.m + Cx * ((y - x.dot(prev.m)) / denom);
  next.C = prev.C - (Cx / denom) * Cx.transpose();
  symmetrize(next.C);
  return next;
}

VectorXd recursive_rewrite_update(const VectorXd& prev_mean, const MatrixXd& prior_cov,
                                  const MatrixXd& carried, const DesignBlock& fresh,
                                  double gamma_sq) {
  const Eigen::Index n1 = carried.rows(), n2 = fresh.n();
  MatrixXd X(n1 + n2, prev_mean.size());
  X.topRows(n1) = carried;
  X.bottomRows(n2) = fresh.X;
  VectorXd Yhat(n1 + n2);
  Yhat.head(n1) = carried * prev_mean;  // pseudo-observations of the carried rows
  Yhat.tail(n2) = fresh.Y;
  MatrixXd C0Xt = prior_cov * X.transpose();
  MatrixXd S = X * C0Xt;
  S.diagonal().array() += gamma_sq;
  VectorXd resid = Yhat - X * prev_mean;
  MatrixXd sol;
  ldlt_solve_with_jitter(S, resid, sol);
  return prev_mean + C0Xt * sol.col(0);
}

ReducedRankEig reduced_rank_eig(const MatrixXd& S, Eigen::Index M) {
  const Eigen::Index r = S.rows();
  if (M > r) throw std::invalid_argument("reduced_rank_eig: M exceeds row count");
  MatrixXd G = S * S.transpose();
  symmetrize(G);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("reduced_rank_eig: eigendecomposition failed");
  // eigenvalues ascending; take the top M in descending order
  ReducedRankEig out;
  out.U.resize(r, M);
  out.sigma.resize(M);
  double tail = 0.0;
  for (Eigen::Index i = 0; i < r - M; ++i) tail += std::max(eig.eigenvalues()(i), 0.0);
  for (Eigen::Index j = 0; j < M; ++j) {
    const Eigen::Index src = r - 1 - j;
    VectorXd u = eig.eigenvectors().col(src);
    // fix sign: largest-magnitude entry positive
    Eigen::Index imax;
    u.cwiseAbs().maxCoeff(&imax);
    if (u(imax) < 0.0) u = -u;
    out.U.col(j) = u;
    out.sigma(j) = std::sqrt(std::max(eig.eigenvalues()(src), 0.0));
  }
  out.tail = tail;
  out.X_hat.noalias() = out.U.transpose() * S;
  return out;
}

CgResult cg_solve(const std::function<VectorXd(const VectorXd&)>& apply_A, const VectorXd& b,
                  double tol, int max_iter) {
  CgResult res;
  res.x = VectorXd::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  VectorXd r = b;
  VectorXd p = r;
  double rs = r.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    VectorXd Ap = apply_A(p);
    const double alpha = rs / p.dot(Ap);
    res.x += alpha * p;
    r -= alpha * Ap;
    const double rs_new = r.squaredNorm();
    res.iterations = it + 1;
    if (std::sqrt(rs_new) <= tol * bnorm) {
      res.converged = true;
      res.residual_norm = std::sqrt(rs_new);
      return res;
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  res.residual_norm = std::sqrt(rs);
  return res;
}

}  // namespace sparsevb
