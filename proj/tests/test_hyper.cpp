#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sparsevb/hyper.hpp"
#include "sparsevb/rng.hpp"

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

TEST_CASE("gamma_sq_update closed cases") {
  std::mt19937_64 rng(1);
  const MatrixXd X = random_matrix(rng, 12, 3);
  const VectorXd beta = random_matrix(rng, 3, 1);
  SUBCASE("least squares residual with a point posterior") {
    const VectorXd Y = X * beta + 0.3 * random_matrix(rng, 12, 1);
    const VectorXd ols = (X.transpose() * X).ldlt().solve(X.transpose() * Y);
    const auto up = gamma_sq_update(stats_from_block(DesignBlock(X, Y)), ols,
                                    MatrixXd::Zero(3, 3));
    CHECK_FALSE(up.clamped);
    CHECK(up.value == doctest::Approx((Y - X * ols).squaredNorm() / 12.0));
  }
  SUBCASE("exact fit clamps at the floor") {
    const VectorXd Y = X * beta;
    const auto up =
        gamma_sq_update(stats_from_block(DesignBlock(X, Y)), beta, MatrixXd::Zero(3, 3));
    CHECK(up.clamped);
    CHECK(up.value == doctest::Approx(1e-12));
  }
  SUBCASE("wide-data identity matches the stats form") {
    const MatrixXd Xw = random_matrix(rng, 4, 9);
    const VectorXd Yw = random_matrix(rng, 4, 1);
    const VectorXd m = random_matrix(rng, 9, 1);
    MatrixXd R = random_matrix(rng, 9, 9);
    const MatrixXd C = R * R.transpose() / 9.0;
    const DesignBlock block(Xw, Yw);
    CHECK(gamma_sq_update(block, m, C).value ==
          doctest::Approx(gamma_sq_update(stats_from_block(block), m, C).value)
              .epsilon(1e-12));
  }
  SUBCASE("agrees with a Monte Carlo estimate of the expected residual") {
    const VectorXd Y = X * beta + 0.5 * random_matrix(rng, 12, 1);
    const VectorXd m = random_matrix(rng, 3, 1);
    MatrixXd R = random_matrix(rng, 3, 3);
    const MatrixXd C = R * R.transpose() / 3.0;
    const Eigen::LLT<MatrixXd> llt(C);
    const auto up = gamma_sq_update(stats_from_block(DesignBlock(X, Y)), m, C);
    NormalSampler normal(99);
    const int N = 1000000;
    double acc = 0.0, acc2 = 0.0;
    for (int s = 0; s < N; ++s) {
      VectorXd z(3);
      for (int j = 0; j < 3; ++j) z(j) = normal();
      const VectorXd b = m + llt.matrixL() * z;
      const double r = (Y - X * b).squaredNorm() / 12.0;
      acc += r;
      acc2 += r * r;
    }
    const double mean = acc / N;
    const double se = std::sqrt((acc2 / N - mean * mean) / N);
    CHECK(std::abs(up.value - mean) < 3.0 * se);
  }
}

TEST_CASE("lambda_update closed forms") {
  std::mt19937_64 rng(3);
  SUBCASE("nu=1 with delta=0 reduces to the mean root") {
    const VectorXd m = random_matrix(rng, 6, 1);
    const VectorXd c = random_matrix(rng, 6, 1).cwiseAbs();
    HyperParams hp;
    hp.delta = 0.0;
    hp.kind = PriorKind::laplace_nu1;
    const auto up = lambda_update(m, c, hp);
    const double expect =
        1.0 / ((c.array() + m.array().square()).sqrt().mean());
    CHECK(up.value == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("power-improper with delta=0 is identically one") {
    const VectorXd m = random_matrix(rng, 5, 1);
    HyperParams hp;
    hp.delta = 0.0;
    hp.nu = -0.7;
    hp.kind = PriorKind::power_improper;
    const auto up = lambda_update(m, VectorXd::Zero(5), hp);
    CHECK(up.value == doctest::Approx(1.0));
  }
  SUBCASE("nu=1 maximizes its one-dimensional objective") {
    HyperParams hp;
    hp.delta = 1e-3;
    hp.kind = PriorKind::laplace_nu1;
    for (int trial = 0; trial < 50; ++trial) {
      const VectorXd m = random_matrix(rng, 8, 1);
      const VectorXd c = random_matrix(rng, 8, 1).cwiseAbs();
      const auto up = lambda_update(m, c, hp);
      auto objective = [&](double lam) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < 8; ++j) {
          const double b = c(j) + m(j) * m(j);
          const double it = lam / std::sqrt(hp.delta * hp.delta + b);
          acc += b * it - std::log(it);
        }
        return acc;
      };
      const double lam_star =
          oracles::golden_section_min(objective, 1e-6, 1e3, 1e-12);
      CHECK(up.value == doctest::Approx(lam_star).epsilon(1e-6));
    }
  }
  SUBCASE("nu=0 degenerate denominator keeps the previous value") {
    HyperParams hp;
    hp.delta = 0.0;  // fractions degenerate to 1, denominator hits zero
    hp.lambda = 0.77;
    hp.kind = PriorKind::inv_gauss_nu0;
    const VectorXd m = random_matrix(rng, 4, 1);
    const auto up = lambda_update(m, VectorXd::Zero(4), hp);
    CHECK(up.degenerate);
    CHECK(up.value == doctest::Approx(0.77));
  }
}

TEST_CASE("product log solves w e^w = z on both branches") {
  for (double z : {-0.367, -0.2, -0.05, -1e-4, 1e-4, 0.5, 3.0, 100.0}) {
    if (z < 0) {
      const double wm = product_log(z, -1);
      CHECK(std::abs(wm * std::exp(wm) - z) <= 1e-12);
      CHECK(wm <= -1.0);
    }
    const double w0 = product_log(z, 0);
    CHECK(std::abs(w0 * std::exp(w0) - z) <= 1e-12);
    if (z < 0) CHECK(w0 >= -1.0);
  }
  CHECK_THROWS_AS(product_log(-1.0, -1), std::domain_error);
  CHECK_THROWS_AS(product_log(0.5, -1), std::domain_error);
}

namespace {

DesignBlock synthetic_sparse(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p,
                             double noise) {
  MatrixXd X = random_matrix(rng, n, p);
  VectorXd beta = VectorXd::Zero(p);
  beta(0) = 2.0;
  beta(1) = -1.5;
  const VectorXd Y = X * beta + noise * random_matrix(rng, n, 1);
  return DesignBlock(X, Y);
}

// The lambda/gamma objective of the outer EM step at fixed moments; used to
// verify that the closed-form updates actually improve it.
double outer_q(const SufficientStats& st, const VectorXd& m, const MatrixXd& C,
               const HyperParams& hp) {
  const double resid =
      st.s - 2.0 * st.v.dot(m) + st.A.cwiseProduct(C).sum() + m.dot(st.A * m);
  double acc = 0.0;
  const GigParams g = gig_from_hyper(hp);
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const double b = C(j, j) + m(j) * m(j);
    const double it = cond_inv_theta(g, b, hp.kind);
    acc += 0.5 * b * it - 0.5 * std::log(it);
  }
  return 0.5 * double(st.count) * std::log(hp.gamma_sq) + 0.5 * resid / hp.gamma_sq + acc;
}

}  // namespace

TEST_CASE("each nested hyper update improves the outer objective") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    const auto block = synthetic_sparse(rng, 25, 6, 0.4);
    const SufficientStats st = stats_from_block(block);
    HyperParams hp;
    hp.gamma_sq = 0.5 + 0.1 * double(trial);
    hp.lambda = 0.2 + 0.15 * double(trial % 5);
    const StoppingRule stop{200, 1e-10, StopMetric::iterate_delta};
    const auto fit = vbl_iterate(block, hp, default_init(6), stop);

    HyperParams next = hp;
    next.gamma_sq = gamma_sq_update(st, fit.triple.m, fit.triple.C).value;
    const auto lu = lambda_update(fit.triple.m, fit.triple.C.diagonal(), hp);
    if (!lu.degenerate) next.lambda = lu.value;
    CHECK(outer_q(st, fit.triple.m, fit.triple.C, next) <=
          outer_q(st, fit.triple.m, fit.triple.C, hp) + 1e-10);

    const double g2 = next.gamma_sq;
    const double h = 1e-6 * g2;
    HyperParams lo = next, hi = next;
    lo.gamma_sq = g2 - h;
    hi.gamma_sq = g2 + h;
    const double deriv = (outer_q(st, fit.triple.m, fit.triple.C, hi) -
                          outer_q(st, fit.triple.m, fit.triple.C, lo)) /
                         (2.0 * h);
    CHECK(std::abs(deriv) * g2 < 1e-6);  // scaled stationarity
  }
}

TEST_CASE("tuners run and converge on synthetic sparse data") {
  std::mt19937_64 rng(9);
  const auto block = synthetic_sparse(rng, 60, 8, 0.3);
  HyperParams hp0;
  hp0.gamma_sq = 1.0;
  hp0.lambda = 1.0;
  const StoppingRule stop{400, 1e-10, StopMetric::iterate_delta};

  const auto inter = tune_interleaved(block, hp0, stop);
  CHECK(inter.hp.gamma_sq > 0.0);
  CHECK(inter.hp.lambda > 0.0);
  CHECK(std::sqrt(inter.hp.gamma_sq) > 0.1);
  CHECK(std::sqrt(inter.hp.gamma_sq) < 1.0);

  const auto nested = tune_nested(block, hp0, stop);
  CHECK(std::abs(std::sqrt(nested.hp.gamma_sq) - std::sqrt(inter.hp.gamma_sq)) /
            std::sqrt(inter.hp.gamma_sq) <
        0.2);
  CHECK(!nested.trace.empty());

  const auto dirac = tune_dirac_em(block, hp0, stop, DiracPath::em);
  CHECK(dirac.hp.gamma_sq > 0.0);
  CHECK(std::isfinite(dirac.hp.lambda));
}

TEST_CASE("dirac tuner with hyper updates disabled keeps lambda") {
  std::mt19937_64 rng(11);
  const auto block = synthetic_sparse(rng, 20, 4, 0.2);
  HyperParams hp0;
  hp0.lambda = 0.9;
  hp0.delta = 1e-3;
  TuneOptions topts;
  topts.tune_gamma = false;
  StoppingRule one{3, 0.0, StopMetric::iterate_delta};
  topts.hyper_warmup = 3;  // warmup covers the whole run
  const auto r = tune_dirac_em(block, hp0, one, DiracPath::em, topts);
  CHECK(r.hp.lambda == doctest::Approx(0.9));
}

TEST_CASE("dirac nu=0 product-log step tracks the true minimizer") {
  // objective p log K0(lambda delta) + F/2 lambda^2; the closed form drops
  // higher-order terms in lambda*delta, so compare against golden section
  // on the exact Bessel objective
  const double delta = 1e-3;
  const Eigen::Index p = 10;
  for (double f_scale : {5.0, 50.0, 500.0}) {
    const double F = f_scale * double(p);
    auto exact = [&](double lam) {
      return double(p) * std::log(std::cyl_bessel_k(0.0, lam * delta)) + 0.5 * F * lam * lam;
    };
    const double lam_star = oracles::golden_section_min(exact, 1e-8, 10.0, 1e-13);
    const double g2 = std::exp(2.0 * 0.57721566490153286060);
    const double arg = -(delta * delta * g2) / (2.0 * F / double(p));
    const double w = product_log(arg, -1);
    const double lam_formula = 2.0 / delta * std::exp(-0.57721566490153286060 + 0.5 * w);
    // tolerance covers the dropped O(lambda*delta) terms and the standard
    // library's K0 accuracy at tiny arguments; a missing p-normalization
    // would be off by ~70 percent
    CHECK(lam_formula == doctest::Approx(lam_star).epsilon(1e-3));
  }
}
