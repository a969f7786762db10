#include "sparsevb/online.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace sparsevb {

std::vector<std::vector<Eigen::Index>> make_batches(Eigen::Index n_total,
                                                    const BatchPlan& plan) {
  if (plan.batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  const Eigen::Index M = plan.batch_size;
  std::vector<std::vector<Eigen::Index>> out;
  switch (plan.strategy) {
    case BatchStrategy::sequential: {
      for (Eigen::Index start = 0; start < n_total; start += M) {
        std::vector<Eigen::Index> b;
        for (Eigen::Index i = start; i < std::min(start + M, n_total); ++i) b.push_back(i);
        out.push_back(std::move(b));
      }
      break;
    }
    case BatchStrategy::random_without_replacement: {
      std::vector<Eigen::Index> idx(n_total);
      for (Eigen::Index i = 0; i < n_total; ++i) idx[i] = i;
      std::mt19937_64 rng(plan.seed);
      for (Eigen::Index i = n_total - 1; i > 0; --i) {
        std::uniform_int_distribution<Eigen::Index> u(0, i);
        std::swap(idx[i], idx[u(rng)]);
      }
      for (Eigen::Index start = 0; start < n_total; start += M) {
        out.emplace_back(idx.begin() + start, idx.begin() + std::min(start + M, n_total));
      }
      break;
    }
    case BatchStrategy::strided: {
      const Eigen::Index b = (n_total + M - 1) / M;  // stride
      for (Eigen::Index i = 0; i < b; ++i) {
        std::vector<Eigen::Index> batch;
        for (Eigen::Index j = i; j < n_total; j += b) batch.push_back(j);
        if (!batch.empty()) out.push_back(std::move(batch));
      }
      break;
    }
  }
  return out;
}

SufficientStats& stats_accumulate(SufficientStats& stats, const DesignBlock& batch) {
  if (batch.n() == 0) return stats;
  if (batch.p() != stats.p())
    throw std::invalid_argument("stats_accumulate: dimension mismatch");
  stats.A.selfadjointView<Eigen::Lower>().rankUpdate(batch.X.transpose());
  stats.A.triangularView<Eigen::StrictlyUpper>() = stats.A.transpose();
  stats.v.noalias() += batch.X.transpose() * batch.Y;
  stats.s += batch.Y.squaredNorm();
  stats.count += batch.n();
  return stats;
}

OnlineExactVbl::OnlineExactVbl(Eigen::Index p, HyperParams hp, StoppingRule stop)
    : stats_(p), hp_(hp), stop_(stop), cur_(default_init(p)), theta0_(cur_.C.diagonal()) {}

void OnlineExactVbl::assimilate(const DesignBlock& batch) {
  stats_accumulate(stats_, batch);
  ++batches_;
  VblOptions opts;
  opts.record_trace = false;
  if (hp_.kind == PriorKind::frozen_gaussian) opts.frozen_theta = theta0_;
  VblResult res = vbl_iterate_stats(stats_, hp_, cur_, stop_, opts);
  cur_ = res.triple;
}

namespace {

template <typename Mat>
void pad_rows(const Mat& rows, const typename Mat::Scalar* labels, Eigen::Index M, Mat& out_rows,
              Eigen::Matrix<typename Mat::Scalar, Eigen::Dynamic, 1>& out_labels) {
  out_rows.setZero(M, rows.cols());
  out_rows.topRows(rows.rows()) = rows;
  out_labels.setZero(M);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out_labels(i) = labels[i];
}

}  // namespace

template <typename Scalar>
LowRankVbl<Scalar>::LowRankVbl(Eigen::Index p, Eigen::Index M, HyperParams hp,
                               LowRankOptions opts)
    : p_(p), M_(M), hp_(hp), opts_(opts) {
  hp_.validate();
  mu_star_ = Vec::Zero(p);
  m_star_ = Vec::Zero(p);
  C_diag_ = Vec::Ones(p);
}

template <typename Scalar>
void LowRankVbl<Scalar>::assimilate(const Mat& rows, const Vec& labels) {
  if (rows.rows() != labels.size())
    throw std::invalid_argument("LowRankVbl: rows/labels mismatch");
  if (rows.cols() != p_ || rows.rows() > M_)
    throw std::invalid_argument("LowRankVbl: bad batch shape");
  Mat padded;
  Vec ylab;
  pad_rows(rows, labels.data(), M_, padded, ylab);
  if (batch_index_ == 0)
    first_batch(padded, ylab);
  else
    step_batch(padded, ylab);
  ++batch_index_;
}

namespace {

// theta (scales, not precisions) for one path. The frozen kind keeps the
// unit prior scales of the default initialization.
template <typename Vec>
Eigen::VectorXd theta_from(const Vec& m, const Eigen::VectorXd* c_diag, const HyperParams& hp) {
  if (hp.kind == PriorKind::frozen_gaussian) return Eigen::VectorXd::Ones(m.size());
  const GigParams g = gig_from_hyper(hp);
  Eigen::VectorXd th(m.size());
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const double mj = double(m(j));
    const double b = mj * mj + (c_diag ? (*c_diag)(j) : 0.0);
    th(j) = 1.0 / cond_inv_theta(g, b, hp.kind);
  }
  return th;
}

}  // namespace

template <typename Scalar>
void LowRankVbl<Scalar>::first_batch(const Mat& rows, const Vec& labels) {
  // Algorithm-1 sweep against the first batch alone; X_hat starts as the
  // raw rows, no compression yet.
  using VecD = Eigen::VectorXd;
  const Eigen::Index M = M_;
  VecD mu = mu_star_.template cast<double>(), m = m_star_.template cast<double>();
  VecD c_diag = C_diag_.template cast<double>();
  Mat scratch(M, p_), prod(M, p_), Ssc(M, M);
  Eigen::MatrixXd S(M, M);
  auto build_S = [&](const VecD& th) {
    scratch.noalias() = rows;
    scratch.array().rowwise() *= th.array().sqrt().transpose().template cast<Scalar>();
    Ssc.setZero();
    Ssc.template selfadjointView<Eigen::Lower>().rankUpdate(scratch);
    S = Ssc.template cast<double>();
    S.template triangularView<Eigen::StrictlyUpper>() = S.transpose();
    S.diagonal().array() += hp_.gamma_sq;
  };
  for (int t = 0; t < opts_.first_batch_max_iter; ++t) {
    VecD th_v = theta_from(m, &c_diag, hp_);
    build_S(th_v);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
      throw IllConditionedError("LowRankVbl: first-batch gain solve failed", 0.0);
    VecD w = llt.solve(labels.template cast<double>());
    VecD m_new = th_v.asDiagonal() *
                 (rows.transpose() * w.template cast<Scalar>().eval()).template cast<double>().eval();
    // diag C = theta - theta^2 diag(X^T S^{-1} X) = theta (1 - diag(Z^T S^{-1} Z))
    Eigen::MatrixXd Sinv = llt.solve(Eigen::MatrixXd::Identity(M, M));
    prod.noalias() = Sinv.template cast<Scalar>().eval() * scratch;
    VecD zdiag = prod.cwiseProduct(scratch).colwise().sum().template cast<double>();
    VecD c_new = (th_v.array() * (1.0 - zdiag.array())).cwiseMax(0.0);

    VecD mu_new = mu;
    if (opts_.em_path) {
      VecD th_e = theta_from(mu, nullptr, hp_);
      build_S(th_e);
      Eigen::LLT<Eigen::MatrixXd> llt_e(S);
      VecD we = llt_e.solve(labels.template cast<double>());
      mu_new = th_e.asDiagonal() *
               (rows.transpose() * we.template cast<Scalar>().eval()).template cast<double>().eval();
    }
    const double dm = (m_new - m).norm() / std::max(1.0, m_new.norm());
    m = m_new;
    c_diag = c_new;
    mu = mu_new;
    if (dm < opts_.inner_eps) break;
  }
  m_star_ = m.template cast<Scalar>();
  mu_star_ = opts_.em_path ? mu.template cast<Scalar>() : m_star_;
  C_diag_ = c_diag.template cast<Scalar>();
  X_hat_ = rows;
  have_sigma_ = false;
}

template <typename Scalar>
void LowRankVbl<Scalar>::step_batch(const Mat& rows, const Vec& labels) {
  using VecD = Eigen::VectorXd;
  const Eigen::Index M = M_, twoM = 2 * M_;
  Mat stacked(twoM, p_);
  stacked.topRows(M) = X_hat_;
  stacked.bottomRows(M) = rows;

  const VecD m_carry = m_star_.template cast<double>();
  const VecD mu_carry = mu_star_.template cast<double>();
  VecD yhat_vbem(twoM), yhat_em(twoM);
  yhat_vbem.head(M) = (X_hat_ * m_star_).template cast<double>();
  yhat_vbem.tail(M) = labels.template cast<double>();
  if (opts_.em_path) {
    yhat_em.head(M) = (X_hat_ * mu_star_).template cast<double>();
    yhat_em.tail(M) = labels.template cast<double>();
  }
  const VecD resid_anchor_vbem = yhat_vbem - (stacked * m_star_).template cast<double>();
  VecD resid_anchor_em;
  if (opts_.em_path)
    resid_anchor_em = yhat_em - (stacked * mu_star_).template cast<double>();

  VecD mu = mu_carry, m = m_carry;
  VecD c_diag = C_diag_.template cast<double>();
  Mat scratch(twoM, p_), prod(twoM, p_), Ssc(twoM, twoM);
  Eigen::MatrixXd S(twoM, twoM);

  auto build_S = [&](const VecD& th) {
    scratch.noalias() = stacked;
    scratch.array().rowwise() *= th.array().sqrt().transpose().template cast<Scalar>();
    Ssc.setZero();
    Ssc.template selfadjointView<Eigen::Lower>().rankUpdate(scratch);
    S = Ssc.template cast<double>();
    S.template triangularView<Eigen::StrictlyUpper>() = S.transpose();
    S.diagonal().array() += hp_.gamma_sq;
  };

  for (int t = 0; t < opts_.inner_max_iter; ++t) {
    VecD th_v = theta_from(m, &c_diag, hp_);
    build_S(th_v);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
      throw IllConditionedError("LowRankVbl: gain solve failed at batch " +
                                    std::to_string(batch_index_),
                                0.0);
    VecD w = llt.solve(resid_anchor_vbem);
    VecD m_new = m_carry +
                 th_v.asDiagonal() *
                     (stacked.transpose() * w.template cast<Scalar>().eval())
                         .template cast<double>()
                         .eval();
    Eigen::MatrixXd Sinv = llt.solve(Eigen::MatrixXd::Identity(twoM, twoM));
    prod.noalias() = Sinv.template cast<Scalar>().eval() * scratch;
    VecD zdiag = prod.cwiseProduct(scratch).colwise().sum().template cast<double>();
    VecD c_new = (th_v.array() * (1.0 - zdiag.array())).cwiseMax(0.0);

    VecD mu_new = mu;
    if (opts_.em_path) {
      VecD th_e = theta_from(mu, nullptr, hp_);
      build_S(th_e);
      Eigen::LLT<Eigen::MatrixXd> llt_e(S);
      VecD we = llt_e.solve(resid_anchor_em);
      mu_new = mu_carry +
               th_e.asDiagonal() *
                   (stacked.transpose() * we.template cast<Scalar>().eval())
                       .template cast<double>()
                       .eval();
    }
    const double dm = (m_new - m).norm() / std::max(1.0, m_new.norm());
    m = m_new;
    c_diag = c_new;
    mu = mu_new;
    if (dm < opts_.inner_eps) break;
  }
  m_star_ = m.template cast<Scalar>();
  mu_star_ = opts_.em_path ? mu.template cast<Scalar>() : m_star_;
  C_diag_ = c_diag.template cast<Scalar>();
  compress(stacked);
}

template <typename Scalar>
void LowRankVbl<Scalar>::compress(const Mat& stacked) {
  const Eigen::Index M = M_, twoM = 2 * M_;
  // Gram in blocks; the carried block is diagonal after a compression.
  Eigen::MatrixXd G(twoM, twoM);
  if (have_sigma_) {
    G.topLeftCorner(M, M) = sigma_sq_.asDiagonal();
  } else {
    Mat top(M, M);
    top.setZero();
    top.template selfadjointView<Eigen::Lower>().rankUpdate(stacked.topRows(M));
    G.topLeftCorner(M, M) = top.template cast<double>();
    G.topLeftCorner(M, M).template triangularView<Eigen::StrictlyUpper>() =
        G.topLeftCorner(M, M).transpose();
  }
  G.topRightCorner(M, M) =
      (stacked.topRows(M) * stacked.bottomRows(M).transpose()).template cast<double>();
  G.bottomLeftCorner(M, M) = G.topRightCorner(M, M).transpose();
  Mat bot(M, M);
  bot.setZero();
  bot.template selfadjointView<Eigen::Lower>().rankUpdate(stacked.bottomRows(M));
  G.bottomRightCorner(M, M) = bot.template cast<double>();
  G.bottomRightCorner(M, M).template triangularView<Eigen::StrictlyUpper>() =
      G.bottomRightCorner(M, M).transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("LowRankVbl: eigendecomposition failed at batch " +
                             std::to_string(batch_index_));
  double tail = 0.0;
  for (Eigen::Index i = 0; i < M; ++i) tail += std::max(eig.eigenvalues()(i), 0.0);
  compression_tail_ = tail;
  sigma_sq_.resize(M);
  Mat U(twoM, M);
  for (Eigen::Index j = 0; j < M; ++j) {
    const Eigen::Index src = twoM - 1 - j;
    Eigen::VectorXd u = eig.eigenvectors().col(src);
    Eigen::Index imax;
    u.cwiseAbs().maxCoeff(&imax);
    if (u(imax) < 0.0) u = -u;
    U.col(j) = u.template cast<Scalar>();
    sigma_sq_(j) = std::max(eig.eigenvalues()(src), 0.0);
  }
  X_hat_.noalias() = U.transpose() * stacked;
  have_sigma_ = true;
}

template <typename Scalar>
LowRankPosterior LowRankVbl<Scalar>::posterior() const {
  return LowRankPosterior{mu_star_.template cast<double>(), m_star_.template cast<double>(),
                          C_diag_.template cast<double>()};
}

namespace {
constexpr char kCkptMagic[8] = {'S', 'V', 'B', 'L', 'R', 'K', '0', '1'};

template <typename T>
void put(std::ofstream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void get(std::ifstream& i, T& v) {
  i.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

template <typename Scalar>
void LowRankVbl<Scalar>::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(kCkptMagic, 8);
  put(out, std::int32_t(sizeof(Scalar)));
  put(out, std::int64_t(p_));
  put(out, std::int64_t(M_));
  put(out, std::int64_t(batch_index_));
  put(out, compression_tail_);
  put(out, hp_.gamma_sq);
  put(out, hp_.lambda);
  put(out, hp_.delta);
  put(out, hp_.nu);
  put(out, std::int32_t(hp_.kind));
  put(out, std::int32_t(have_sigma_ ? 1 : 0));
  put(out, std::int32_t(opts_.em_path ? 1 : 0));
  auto dump = [&](const char* ptr, std::size_t bytes) { out.write(ptr, std::streamsize(bytes)); };
  dump(reinterpret_cast<const char*>(mu_star_.data()), sizeof(Scalar) * std::size_t(p_));
  dump(reinterpret_cast<const char*>(m_star_.data()), sizeof(Scalar) * std::size_t(p_));
  dump(reinterpret_cast<const char*>(C_diag_.data()), sizeof(Scalar) * std::size_t(p_));
  const std::int64_t xr = X_hat_.rows();
  put(out, xr);
  dump(reinterpret_cast<const char*>(X_hat_.data()),
       sizeof(Scalar) * std::size_t(X_hat_.size()));
  if (have_sigma_)
    dump(reinterpret_cast<const char*>(sigma_sq_.data()), sizeof(double) * std::size_t(M_));
}

template <typename Scalar>
LowRankVbl<Scalar> LowRankVbl<Scalar>::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::int32_t ssize;
  get(in, ssize);
  if (ssize != std::int32_t(sizeof(Scalar)))
    throw std::runtime_error("checkpoint: scalar width mismatch");
  std::int64_t p, M, bidx;
  get(in, p);
  get(in, M);
  get(in, bidx);
  HyperParams hp;
  double tail;
  get(in, tail);
  get(in, hp.gamma_sq);
  get(in, hp.lambda);
  get(in, hp.delta);
  get(in, hp.nu);
  std::int32_t kind, have_sigma, em_path;
  get(in, kind);
  hp.kind = PriorKind(kind);
  get(in, have_sigma);
  get(in, em_path);
  LowRankOptions opts;
  opts.em_path = em_path != 0;
  LowRankVbl obj(p, M, hp, opts);
  obj.batch_index_ = bidx;
  obj.compression_tail_ = tail;
  obj.have_sigma_ = have_sigma != 0;
  obj.mu_star_.resize(p);
  obj.m_star_.resize(p);
  obj.C_diag_.resize(p);
  auto slurp = [&](char* ptr, std::size_t bytes) { in.read(ptr, std::streamsize(bytes)); };
  slurp(reinterpret_cast<char*>(obj.mu_star_.data()), sizeof(Scalar) * std::size_t(p));
  slurp(reinterpret_cast<char*>(obj.m_star_.data()), sizeof(Scalar) * std::size_t(p));
  slurp(reinterpret_cast<char*>(obj.C_diag_.data()), sizeof(Scalar) * std::size_t(p));
  std::int64_t xr;
  get(in, xr);
  obj.X_hat_.resize(xr, p);
  slurp(reinterpret_cast<char*>(obj.X_hat_.data()),
        sizeof(Scalar) * std::size_t(obj.X_hat_.size()));
  if (obj.have_sigma_) {
    obj.sigma_sq_.resize(M);
    slurp(reinterpret_cast<char*>(obj.sigma_sq_.data()), sizeof(double) * std::size_t(M));
  }
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return obj;
}

template class LowRankVbl<double>;
template class LowRankVbl<float>;

}  // namespace sparsevb
