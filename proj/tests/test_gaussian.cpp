#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "oracles.hpp"
#include "sparsevb/gaussian.hpp"

using namespace sparsevb;

namespace {
MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = g(rng);
  return M;
}
}  // namespace

TEST_CASE("posterior_primal diagonal algebra") {
  DesignBlock block(MatrixXd::Identity(2, 2), (VectorXd(2) << 2.0, 4.0).finished());
  const auto post = posterior_primal(stats_from_block(block), VectorXd::Zero(2),
                                     VectorXd(VectorXd::Ones(2)), 1.0);
  CHECK(post.m(0) == doctest::Approx(1.0));
  CHECK(post.m(1) == doctest::Approx(2.0));
  CHECK((post.C - 0.5 * MatrixXd::Identity(2, 2)).norm() == doctest::Approx(0.0));
}

TEST_CASE("posterior_primal with empty stats returns the prior") {
  SufficientStats stats(3);
  VectorXd m0(3);
  m0 << 1.0, -2.0, 0.5;
  const auto post = posterior_primal(stats, m0, VectorXd(VectorXd::Constant(3, 2.0)), 1.0);
  CHECK((post.m - m0).norm() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK((post.C - 0.5 * MatrixXd::Identity(3, 3)).norm() == doctest::Approx(0.0));
}

TEST_CASE("posterior_dual small Woodbury case") {
  MatrixXd X(1, 2);
  X << 1.0, 0.0;
  const DesignBlock block(X, VectorXd::Ones(1));
  const auto post = posterior_dual(block, VectorXd::Zero(2), MatrixXd::Identity(2, 2), 1.0);
  CHECK(post.m(0) == doctest::Approx(0.5));
  CHECK(post.m(1) == doctest::Approx(0.0));
  CHECK(post.C(0, 0) == doctest::Approx(0.5));
  CHECK(post.C(1, 1) == doctest::Approx(1.0));
  CHECK(post.C(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("degenerate prior covariance returns the prior mean") {
  std::mt19937_64 rng(3);
  const MatrixXd X = random_matrix(rng, 4, 3);
  const DesignBlock block(X, random_matrix(rng, 4, 1));
  VectorXd m0(3);
  m0 << 0.3, -1.0, 2.0;
  const auto post = posterior_dual(block, m0, MatrixXd::Zero(3, 3), 1.0);
  CHECK((post.m - m0).norm() == doctest::Approx(0.0));
  CHECK(post.C.norm() == doctest::Approx(0.0));
}

TEST_CASE("primal and dual forms agree on random instances") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + Eigen::Index(rng() % 8), p = 2 + Eigen::Index(rng() % 6);
    const MatrixXd X = random_matrix(rng, n, p);
    const VectorXd Y = random_matrix(rng, n, 1);
    const MatrixXd R = random_matrix(rng, p, p);
    MatrixXd C0 = R * R.transpose() + 0.3 * MatrixXd::Identity(p, p);
    const VectorXd m0 = random_matrix(rng, p, 1);
    const double g2 = 0.2 + 0.01 * double(rng() % 100);
    const DesignBlock block(X, Y);

    MatrixXd P0;
    ldlt_solve_with_jitter(C0, MatrixXd::Identity(p, p), P0);
    const auto primal = posterior_primal(stats_from_block(block), m0, P0, g2);
    const auto dual = posterior_dual(block, m0, C0, g2);
    CHECK((primal.m - dual.m).norm() / dual.m.norm() < 1e-10);
    CHECK((primal.C - dual.C).norm() / dual.C.norm() < 1e-10);

    // the posterior mean minimizes the quadratic objective
    const VectorXd grad =
        X.transpose() * (X * dual.m - Y) / g2 + P0 * (dual.m - m0);
    CHECK(grad.norm() < 1e-8);
  }
}

TEST_CASE("kalman_step") {
  SUBCASE("zero row leaves the posterior unchanged") {
    GaussianPosterior prev{(VectorXd(2) << 1.0, 2.0).finished(), MatrixXd::Identity(2, 2)};
    const auto next = kalman_step(prev, VectorXd::Zero(2), 123.0, 0.5);
    CHECK((next.m - prev.m).norm() == doctest::Approx(0.0));
    CHECK((next.C - prev.C).norm() == doctest::Approx(0.0));
  }
  SUBCASE("scalar case") {
    GaussianPosterior prev{VectorXd::Zero(1), MatrixXd::Identity(1, 1)};
    const auto next = kalman_step(prev, VectorXd::Ones(1), 0.0, 1.0);
    CHECK(next.m(0) == doctest::Approx(0.0));
    CHECK(next.C(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("sequence of 50 rows equals the batch posterior") {
    std::mt19937_64 rng(5);
    const Eigen::Index n = 50, p = 6;
    const MatrixXd X = random_matrix(rng, n, p);
    const VectorXd Y = random_matrix(rng, n, 1);
    const double g2 = 0.7;
    GaussianPosterior cur{VectorXd::Zero(p), MatrixXd::Identity(p, p)};
    for (Eigen::Index i = 0; i < n; ++i)
      cur = kalman_step(cur, X.row(i).transpose(), Y(i), g2);
    const auto batch = posterior_dual(DesignBlock(X, Y), VectorXd::Zero(p),
                                      MatrixXd::Identity(p, p), g2);
    CHECK((cur.m - batch.m).norm() / batch.m.norm() < 1e-9);
    CHECK((cur.C - batch.C).norm() / batch.C.norm() < 1e-9);
  }
}

TEST_CASE("recursive rewrite of the posterior mean") {
  std::mt19937_64 rng(9);
  const MatrixXd X = random_matrix(rng, 6, 3);
  const VectorXd Y = random_matrix(rng, 6, 1);
  const MatrixXd C0 = MatrixXd::Identity(3, 3);
  const double g2 = 0.4;
  const auto full = posterior_dual(DesignBlock(X, Y), VectorXd::Zero(3), C0, g2);

  SUBCASE("full-data mean is a fixed point") {
    const VectorXd out = recursive_rewrite_update(full.m, C0, X, DesignBlock(MatrixXd(0, 3), VectorXd(0)), g2);
    CHECK((out - full.m).norm() < 1e-12);
  }
  SUBCASE("two-batch split with full carried rows reproduces the monolithic mean") {
    const auto first = posterior_dual(DesignBlock(X.topRows(3), Y.head(3)),
                                      VectorXd::Zero(3), C0, g2);
    const VectorXd out = recursive_rewrite_update(
        first.m, C0, X.topRows(3), DesignBlock(X.bottomRows(3), Y.tail(3)), g2);
    CHECK((out - full.m).norm() / full.m.norm() < 1e-9);
  }
  SUBCASE("uninformative likelihood returns the previous mean") {
    VectorXd prev(3);
    prev << 0.5, -0.2, 1.0;
    const VectorXd out =
        recursive_rewrite_update(prev, C0, X.topRows(3),
                                 DesignBlock(X.bottomRows(3), Y.tail(3)), 1e14);
    CHECK((out - prev).norm() < 1e-10);
  }
}

TEST_CASE("reduced_rank_eig") {
  std::mt19937_64 rng(21);
  SUBCASE("rank <= M is lossless") {
    const MatrixXd S = random_matrix(rng, 8, 3) * random_matrix(rng, 3, 30);
    const auto rr = reduced_rank_eig(S, 4);
    CHECK((rr.X_hat.transpose() * rr.X_hat - S.transpose() * S).norm() < 1e-10);
    CHECK(rr.tail < 1e-10);
  }
  SUBCASE("M equals the row count keeps the Gram matrix") {
    const MatrixXd S = random_matrix(rng, 5, 12);
    const auto rr = reduced_rank_eig(S, 5);
    CHECK((rr.X_hat.transpose() * rr.X_hat - S.transpose() * S).norm() < 1e-10);
    CHECK((rr.U.transpose() * rr.U - MatrixXd::Identity(5, 5)).norm() < 1e-10);
  }
  SUBCASE("Frobenius error equals the dropped eigenvalue tail") {
    const MatrixXd S = random_matrix(rng, 10, 40);
    const Eigen::Index M = 5;
    const auto rr = reduced_rank_eig(S, M);
    // full eigendecomposition oracle
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S * S.transpose());
    double tail = 0.0;
    for (Eigen::Index i = 0; i < S.rows() - M; ++i) tail += eig.eigenvalues()(i);
    const double err_sq = (S - rr.U * rr.X_hat).squaredNorm();
    CHECK(err_sq == doctest::Approx(tail).epsilon(1e-8));
    CHECK(rr.tail == doctest::Approx(tail).epsilon(1e-8));
    CHECK((rr.U.transpose() * rr.U - MatrixXd::Identity(M, M)).norm() < 1e-10);
  }
}

TEST_CASE("conjugate gradients") {
  SUBCASE("identity converges in one iteration") {
    VectorXd b(4);
    b << 1.0, -2.0, 3.0, 0.5;
    const auto res = cg_solve([](const VectorXd& v) { return v; }, b, 1e-12, 10);
    CHECK(res.converged);
    CHECK(res.iterations == 1);
    CHECK((res.x - b).norm() < 1e-12);
  }
  SUBCASE("diagonal system matches the direct solve") {
    VectorXd d(10);
    for (int i = 0; i < 10; ++i) d(i) = i + 1.0;
    const VectorXd b = VectorXd::Ones(10);
    const auto res = cg_solve([&](const VectorXd& v) { return VectorXd(d.asDiagonal() * v); },
                              b, 1e-12, 100);
    CHECK(res.converged);
    CHECK((res.x - b.cwiseQuotient(d)).norm() < 1e-10);
  }
  SUBCASE("zero rhs") {
    const auto res = cg_solve([](const VectorXd& v) { return v; }, VectorXd::Zero(3), 1e-12, 10);
    CHECK(res.converged);
    CHECK(res.x.norm() == 0.0);
  }
  SUBCASE("non-convergence is reported, not thrown") {
    std::mt19937_64 rng(2);
    const MatrixXd R = random_matrix(rng, 20, 20);
    const MatrixXd A = R * R.transpose() + 1e-8 * MatrixXd::Identity(20, 20);
    const auto res = cg_solve([&](const VectorXd& v) { return VectorXd(A * v); },
                              VectorXd::Ones(20), 1e-14, 2);
    CHECK_FALSE(res.converged);
    CHECK(res.residual_norm > 0.0);
  }
}

TEST_CASE("stats accumulation is order independent") {
  std::mt19937_64 rng(33);
  const MatrixXd X = random_matrix(rng, 12, 4);
  const VectorXd Y = random_matrix(rng, 12, 1);
  SufficientStats a(4), b(4);
  a.merge(stats_from_block(DesignBlock(X.topRows(7), Y.head(7))));
  a.merge(stats_from_block(DesignBlock(X.bottomRows(5), Y.tail(5))));
  b.merge(stats_from_block(DesignBlock(X.bottomRows(5), Y.tail(5))));
  b.merge(stats_from_block(DesignBlock(X.topRows(7), Y.head(7))));
  const SufficientStats whole = stats_from_block(DesignBlock(X, Y));
  CHECK((a.A - whole.A).norm() < 1e-12 * whole.A.norm());
  CHECK((a.A - b.A).norm() < 1e-12 * whole.A.norm());
  CHECK((a.v - whole.v).norm() < 1e-12 * whole.v.norm());
  CHECK(a.s == doctest::Approx(whole.s));
  CHECK(a.count == whole.count);
}

TEST_CASE("systems that stay indefinite through the jitter ladder raise") {
  SufficientStats stats(2);
  stats.A << 1.0, 0.0, 0.0, 1.0;
  stats.v = VectorXd::Ones(2);
  stats.count = 2;
  CHECK_THROWS_AS(
      posterior_primal(stats, VectorXd(VectorXd::Zero(2)), VectorXd(VectorXd::Constant(2, -10.0)), 1.0),
      IllConditionedError);
}
