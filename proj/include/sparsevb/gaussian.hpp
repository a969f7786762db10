#ifndef SPARSEVB_GAUSSIAN_HPP
#define SPARSEVB_GAUSSIAN_HPP

#include <functional>

#include "sparsevb/types.hpp"

namespace sparsevb {

// C <- (C + C^T)/2, applied after every covariance update.
void symmetrize(MatrixXd& C);

// Cholesky with a jitter ladder: on failure adds jitter starting at
// 1e-12 * trace/p, growing by 10x up to 1e-6 * trace/p, then throws
// IllConditionedError. Returns the jitter that was applied.
double ldlt_solve_with_jitter(const MatrixXd& A, const MatrixXd& rhs, MatrixXd& out);

SufficientStats stats_from_block(const DesignBlock& block);

// Posterior in precision (primal) form:
//   C = (A/gamma^2 + P0)^{-1},  m = C (v/gamma^2 + P0 m0)
// where P0 is the prior precision (diagonal given as a vector, or full).
GaussianPosterior posterior_primal(const SufficientStats& stats, const VectorXd& prior_mean,
                                   const VectorXd& prior_precision_diag, double gamma_sq);
GaussianPosterior posterior_primal(const SufficientStats& stats, const VectorXd& prior_mean,
                                   const MatrixXd& prior_precision, double gamma_sq);

// Woodbury (dual) form, n x n inversion:
//   m = m0 + C0 X^T (gamma^2 I + X C0 X^T)^{-1} (Y - X m0)
//   C = C0 - C0 X^T (gamma^2 I + X C0 X^T)^{-1} X C0
GaussianPosterior posterior_dual(const DesignBlock& block, const VectorXd& prior_mean,
                                 const MatrixXd& prior_cov, double gamma_sq);

// Picks primal vs dual by min(p, n); override with force_primal/force_dual.
enum class PosteriorForm { automatic, primal, dual };
GaussianPosterior posterior_auto(const DesignBlock& block, const VectorXd& prior_mean,
                                 const MatrixXd& prior_cov, double gamma_sq,
                                 PosteriorForm form = PosteriorForm::automatic);

// Rank-one Kalman update, O(p^2).
GaussianPosterior kalman_step(const GaussianPosterior& prev, const VectorXd& x, double y,
                              double gamma_sq);

// Recursive mean rewrite: stacks carried rows (with pseudo-labels
// carried * prev_mean) over the fresh block and applies one Woodbury
// correction to prev_mean.
VectorXd recursive_rewrite_update(const VectorXd& prev_mean, const MatrixXd& prior_cov,
                                  const MatrixXd& carried, const DesignBlock& fresh,
                                  double gamma_sq);

struct ReducedRankEig {
  MatrixXd U;        // rows(S) x M, orthonormal columns
  VectorXd sigma;    // M singular values (sqrt of eigenvalues of S S^T)
  MatrixXd X_hat;    // M x p, U^T S
  double tail;       // sum of dropped eigenvalues of S S^T
};

// Best rank-M approximation of S S^T; X_hat^T X_hat approximates S^T S.
// Deterministic ordering and sign convention for reproducibility.
ReducedRankEig reduced_rank_eig(const MatrixXd& S, Eigen::Index M);

struct CgResult {
  VectorXd x;
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
};

// Conjugate gradients on a matrix-free SPD operator. Never throws on
// non-convergence; the flag reports it.
CgResult cg_solve(const std::function<VectorXd(const VectorXd&)>& apply_A, const VectorXd& b,
                  double tol, int max_iter);

}  // namespace sparsevb

#endif
