#ifndef SPARSEVB_ONLINE_HPP
#define SPARSEVB_ONLINE_HPP

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsevb/vbl.hpp"

namespace sparsevb {

enum class BatchStrategy { sequential, random_without_replacement, strided };

struct BatchPlan {
  Eigen::Index batch_size = 1;
  BatchStrategy strategy = BatchStrategy::sequential;
  std::uint64_t seed = 0;
};

// Disjoint index sets covering 0..n_total-1. Strided uses stride
// b = ceil(n/M): batch i is {i, i+b, i+2b, ...}.
std::vector<std::vector<Eigen::Index>> make_batches(Eigen::Index n_total, const BatchPlan& plan);

SufficientStats& stats_accumulate(SufficientStats& stats, const DesignBlock& batch);

// Exact online path: sufficient statistics plus warm-started VBL sweeps
// after every batch. Affordable for moderate p only.
class OnlineExactVbl {
 public:
  OnlineExactVbl(Eigen::Index p, HyperParams hp, StoppingRule stop);

  void assimilate(const DesignBlock& batch);
  const PosteriorTriple& triple() const { return cur_; }
  const SufficientStats& stats() const { return stats_; }
  long batches_seen() const { return batches_; }

 private:
  SufficientStats stats_;
  HyperParams hp_;
  StoppingRule stop_;
  PosteriorTriple cur_;
  VectorXd theta0_;
  long batches_ = 0;
};

// Mean/diagonal view of the rank-M + diagonal state. Off-diagonal
// covariance entries are not representable and not offered.
struct LowRankPosterior {
  VectorXd mu;
  VectorXd m;
  VectorXd C_diag;
};

struct LowRankOptions {
  int inner_max_iter = 4;
  double inner_eps = 1e-3;      // relative iterate change
  int first_batch_max_iter = 12;
  bool em_path = true;          // the EM path never feeds the VBEM one
};

// Rank-M + diagonal online recursion. Scalar float is supported for the
// large-p runs; factorizations are always done in double.
template <typename Scalar>
class LowRankVbl {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  LowRankVbl(Eigen::Index p, Eigen::Index M, HyperParams hp, LowRankOptions opts = {});

  // rows: up to M design rows; short batches are zero-padded. labels sized
  // like rows.rows().
  void assimilate(const Mat& rows, const Vec& labels);

  LowRankPosterior posterior() const;
  long batch_index() const { return batch_index_; }
  double compression_tail() const { return compression_tail_; }
  const Mat& x_hat() const { return X_hat_; }

  void save_checkpoint(const std::string& path) const;
  static LowRankVbl load_checkpoint(const std::string& path);

 private:
  void first_batch(const Mat& rows, const Vec& labels);
  void step_batch(const Mat& rows, const Vec& labels);
  void compress(const Mat& stacked);

  Eigen::Index p_, M_;
  HyperParams hp_;
  LowRankOptions opts_;
  Mat X_hat_;          // M x p
  Vec mu_star_, m_star_, C_diag_;
  Eigen::VectorXd sigma_sq_;  // eigenvalues of the carried Gram, diag(X_hat X_hat^T)
  bool have_sigma_ = false;
  long batch_index_ = 0;
  double compression_tail_ = 0.0;
};

extern template class LowRankVbl<double>;
extern template class LowRankVbl<float>;

}  // namespace sparsevb

#endif
