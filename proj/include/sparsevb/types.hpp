#ifndef SPARSEVB_TYPES_HPP
#define SPARSEVB_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sparsevb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Scale-mixture prior family. The improper branches have restricted moment
// domains and must be selected explicitly; stable_bridge is a placeholder.
enum class PriorKind {
  laplace_nu1,      // GIG(nu=1, delta, lambda): Laplace marginal when delta=0
  inv_gauss_nu0,    // GIG(nu=0, delta, lambda)
  general_nu,       // GIG(nu, delta, lambda), Bessel-ratio moments
  jeffreys_improper,// p(theta) ~ 1/theta  (nu=0, delta=lambda=0)
  power_improper,   // p(theta) ~ theta^{nu-1}, nu < 1/2, delta>=0, lambda=0
  frozen_gaussian,  // theta never updated: plain Gaussian prior D(theta0)
  stable_bridge     // placeholder, moments not implemented
};

std::string to_string(PriorKind k);

struct HyperParams {
  double gamma_sq = 1.0;   // noise variance
  double lambda = 1.0;     // sparsity scale
  double delta = 1e-3;     // smoothing, held fixed by the tuners
  double nu = 1.0;         // shape, used by general_nu / power_improper
  PriorKind kind = PriorKind::laplace_nu1;

  void validate() const;
};

struct DesignBlock {
  MatrixXd X;  // n x p, rows are inputs
  VectorXd Y;  // n

  DesignBlock() = default;
  DesignBlock(MatrixXd X_, VectorXd Y_);
  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
};

struct GaussianPosterior {
  VectorXd m;
  MatrixXd C;
};

// Exact online state: A = X^T X, v = X^T Y, s = Y^T Y.
struct SufficientStats {
  MatrixXd A;
  VectorXd v;
  double s = 0.0;
  long count = 0;

  explicit SufficientStats(Eigen::Index p)
      : A(MatrixXd::Zero(p, p)), v(VectorXd::Zero(p)) {}
  SufficientStats() = default;
  Eigen::Index p() const { return A.rows(); }
  SufficientStats& merge(const SufficientStats& other);
};

struct PosteriorTriple {
  VectorXd mu;  // MAP path iterate
  VectorXd m;   // variational mean
  MatrixXd C;   // variational covariance

  static PosteriorTriple zero(Eigen::Index p);
};

enum class StopMetric { misfit, iterate_delta };

struct StoppingRule {
  int max_iter = 1000;
  double eps = 1e-8;
  StopMetric metric = StopMetric::iterate_delta;
};

// Default from the misfit heuristic: eps = rho * gamma * sqrt(n), rho = 0.9.
StoppingRule default_stopping(double gamma, Eigen::Index n, int max_iter = 1000);

class IllConditionedError : public std::runtime_error {
 public:
  IllConditionedError(const std::string& what, double rcond_estimate)
      : std::runtime_error(what), rcond(rcond_estimate) {}
  double rcond;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sparsevb

#endif
