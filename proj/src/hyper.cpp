#include "sparsevb/hyper.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace sparsevb {

namespace {
constexpr double kEulerMascheroni = 0.57721566490153286060;
constexpr double kGammaFloor = 1e-12;
}  // namespace

GammaSqUpdate gamma_sq_update(const SufficientStats& stats, const VectorXd& m,
                              const MatrixXd& C) {
  if (stats.count < 1) throw std::domain_error("gamma_sq_update: empty statistics");
  const double quad = stats.A.cwiseProduct(C).sum() + m.dot(stats.A * m);
  const double val = (stats.s - 2.0 * stats.v.dot(m) + quad) / double(stats.count);
  if (val <= 0.0) return {kGammaFloor, true};
  return {val, false};
}

GammaSqUpdate gamma_sq_update(const DesignBlock& block, const VectorXd& m,
                              const MatrixXd& C) {
  if (block.n() < 1) throw std::domain_error("gamma_sq_update: empty block");
  // tr[A(C + m m^T)] = tr[X C X^T] + |X m|^2, cheaper when n < p
  const double tr = (block.X * C).cwiseProduct(block.X).sum();
  const double val =
      ((block.Y - block.X * m).squaredNorm() + tr) / double(block.n());
  if (val <= 0.0) return {kGammaFloor, true};
  return {val, false};
}

LambdaUpdate lambda_update(const VectorXd& m, const VectorXd& C_diag, const HyperParams& hp) {
  if (m.size() != C_diag.size()) throw std::invalid_argument("lambda_update: size mismatch");
  const Eigen::Index p = m.size();
  const double d2 = hp.delta * hp.delta;
  switch (hp.kind) {
    case PriorKind::laplace_nu1: {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double b = C_diag(j) + m(j) * m(j);
        acc += b / std::sqrt(d2 + b);
      }
      if (acc <= 0.0) return {hp.lambda, true};
      return {double(p) / acc, false};
    }
    case PriorKind::inv_gauss_nu0: {
      double acc = 0.0, frac = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double b = C_diag(j) + m(j) * m(j);
        acc += b / std::sqrt(d2 + b);
        frac += b / (d2 + b);
      }
      const double denom = double(p) - frac;
      if (denom <= 0.0 || acc <= 0.0) return {hp.lambda, true};
      return {denom / acc, false};
    }
    case PriorKind::power_improper: {
      // lambda here is the renamed 1 - 2 nu
      double acc = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double b = C_diag(j) + m(j) * m(j);
        acc += b / (d2 + b);
      }
      if (acc <= 0.0) return {1.0 - 2.0 * hp.nu, true};
      return {double(p) / acc, false};
    }
    default:
      throw std::domain_error("lambda_update: no closed form for kind " + to_string(hp.kind));
  }
}

double product_log(double z, int branch) {
  if (branch != 0 && branch != -1)
    throw std::domain_error("product_log: branch must be 0 or -1");
  const double zmin = -std::exp(-1.0);
  if (z < zmin) throw std::domain_error("product_log: argument below -1/e");
  if (branch == -1 && z >= 0.0)
    throw std::domain_error("product_log: lower branch needs z in (-1/e, 0)");
  double w;
  if (branch == 0) {
    w = (z > 1.0) ? std::log(z) - std::log(std::log(z)) : z / (1.0 + z * 0.6);
    if (z > -0.3 && z <= 1.0) w = z * (1.0 - z + 1.5 * z * z) / (1.0 + 0.5 * z);
  } else {
    const double l1 = std::log(-z);
    w = l1 - std::log(-l1);
  }
  for (int it = 0; it < 100; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - z;
    if (std::abs(f) <= 1e-12) return w;
    const double fp = ew * (1.0 + w);
    // Halley step, robust near the branch point w = -1
    const double step = f / (fp - f * (w + 2.0) / (2.0 * (w + 1.0)));
    w -= step;
  }
  throw std::runtime_error("product_log: Newton iteration failed to converge");
}

namespace {

// lambda step of the Dirac-constrained variational extension.
LambdaUpdate dirac_lambda_step(const VectorXd& beta_sq, const HyperParams& hp) {
  const Eigen::Index p = beta_sq.size();
  const double d2 = hp.delta * hp.delta;
  if (hp.kind == PriorKind::laplace_nu1) {
    double tr_dinv = 0.0;  // tr(D^{-1}) = sum sqrt(delta^2 + beta_j^2) / lambda
    for (Eigen::Index j = 0; j < p; ++j) tr_dinv += std::sqrt(d2 + beta_sq(j));
    tr_dinv /= hp.lambda;
    const double next =
        hp.lambda / std::sqrt(1.0 + hp.lambda * hp.lambda * tr_dinv / double(p));
    return {next, false};
  }
  if (hp.kind == PriorKind::inv_gauss_nu0) {
    if (hp.delta <= 0.0) return {hp.lambda, true};
    double f = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) f += std::sqrt(d2 + beta_sq(j));
    f /= hp.lambda;
    // stationarity of p log K0(lambda delta) + (F/2) lambda^2 under the
    // small-argument expansion of K0; requires the per-coordinate mean F/p
    const double g2 = std::exp(2.0 * kEulerMascheroni);
    const double arg = -(d2 * g2) / (2.0 * f / double(p));
    if (arg <= -std::exp(-1.0) || arg >= 0.0) return {hp.lambda, true};
    const double w = product_log(arg, -1);
    return {2.0 / hp.delta * std::exp(-kEulerMascheroni + 0.5 * w), false};
  }
  throw std::domain_error("tune_dirac_em: prior kind must be laplace_nu1 or inv_gauss_nu0");
}

// Eq.-style outer objective at the current moments: n log gamma + expected
// residual / (2 gamma^2) plus the lambda part. Used only for the trace.
double outer_objective(const SufficientStats& stats, const VectorXd& m, const MatrixXd& C,
                       const HyperParams& hp) {
  const double resid =
      stats.s - 2.0 * stats.v.dot(m) + stats.A.cwiseProduct(C).sum() + m.dot(stats.A * m);
  double lam_part = 0.0;
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const double b = C(j, j) + m(j) * m(j);
    const double it = cond_inv_theta(gig_from_hyper(hp), b, hp.kind);
    lam_part += 0.5 * b * it - 0.5 * std::log(it);
  }
  return double(stats.count) * 0.5 * std::log(hp.gamma_sq) +
         0.5 * resid / hp.gamma_sq + lam_part;
}

double rel_change(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace

TuneResult tune_nested(const DesignBlock& block, const HyperParams& hp0,
                       const StoppingRule& inner_stop, const TuneOptions& opts) {
  TuneResult out;
  out.hp = hp0;
  const SufficientStats stats = stats_from_block(block);
  PosteriorTriple cur = default_init(block.p());
  VblOptions vopts;
  vopts.record_trace = false;
  for (int tau = 0; tau < opts.outer_max_iter; ++tau) {
    VblResult fit = vbl_iterate(block, out.hp, cur, inner_stop, vopts);
    cur = fit.triple;
    HyperParams prev = out.hp;
    if (opts.tune_gamma) out.hp.gamma_sq = gamma_sq_update(stats, cur.m, cur.C).value;
    if (opts.tune_lambda) {
      LambdaUpdate lu = lambda_update(cur.m, cur.C.diagonal(), prev);
      if (out.hp.kind == PriorKind::power_improper)
        out.hp.nu = 0.5 * (1.0 - lu.value);
      else if (!lu.degenerate)
        out.hp.lambda = lu.value;
    }
    out.trace.push_back({tau, std::sqrt(out.hp.gamma_sq), out.hp.lambda,
                         outer_objective(stats, cur.m, cur.C, out.hp)});
    if (tau > 0 && rel_change(prev.gamma_sq, out.hp.gamma_sq) < opts.outer_tol &&
        rel_change(prev.lambda, out.hp.lambda) < opts.outer_tol) {
      out.fit = vbl_iterate(block, out.hp, cur, inner_stop, vopts);
      return out;
    }
  }
  out.fit = vbl_iterate(block, out.hp, cur, inner_stop, vopts);
  return out;
}

TuneResult tune_interleaved(const DesignBlock& block, const HyperParams& hp0,
                            const StoppingRule& stop, const TuneOptions& opts) {
  TuneResult out;
  out.hp = hp0;
  const SufficientStats stats = stats_from_block(block);
  PosteriorTriple cur = default_init(block.p());
  VblOptions vopts;
  for (int t = 0; t < stop.max_iter; ++t) {
    PosteriorTriple next = vbl_step(block, out.hp, cur, vopts);
    const double dm = (next.m - cur.m).norm();
    HyperParams prev = out.hp;
    if (t >= opts.hyper_warmup) {
      if (opts.tune_gamma) out.hp.gamma_sq = gamma_sq_update(stats, next.m, next.C).value;
      if (opts.tune_lambda) {
        LambdaUpdate lu = lambda_update(next.m, next.C.diagonal(), prev);
        if (out.hp.kind == PriorKind::power_improper)
          out.hp.nu = 0.5 * (1.0 - lu.value);
        else if (!lu.degenerate)
          out.hp.lambda = lu.value;
      }
      out.trace.push_back({t, std::sqrt(out.hp.gamma_sq), out.hp.lambda,
                           outer_objective(stats, next.m, next.C, out.hp)});
    }
    cur = std::move(next);
    if (t > opts.hyper_warmup + 1 && dm <= stop.eps &&
        rel_change(prev.gamma_sq, out.hp.gamma_sq) < opts.outer_tol &&
        rel_change(prev.lambda, out.hp.lambda) < opts.outer_tol)
      break;
  }
  VblOptions fopts;
  fopts.record_trace = false;
  out.fit = vbl_iterate(block, out.hp, cur, stop, fopts);
  return out;
}

TuneResult tune_dirac_em(const DesignBlock& block, const HyperParams& hp0,
                         const StoppingRule& stop, DiracPath path, const TuneOptions& opts) {
  if (hp0.kind != PriorKind::laplace_nu1 && hp0.kind != PriorKind::inv_gauss_nu0)
    throw std::domain_error("tune_dirac_em: prior kind must be laplace_nu1 or inv_gauss_nu0");
  TuneResult out;
  out.hp = hp0;
  const SufficientStats stats = stats_from_block(block);
  const Eigen::Index p = block.p();
  PosteriorTriple cur = default_init(p);
  VblOptions vopts;
  const MatrixXd zeroC = MatrixXd::Zero(p, p);
  for (int t = 0; t < stop.max_iter; ++t) {
    PosteriorTriple next = vbl_step(block, out.hp, cur, vopts);
    const double dpath =
        path == DiracPath::em ? (next.mu - cur.mu).norm() : (next.m - cur.m).norm();
    HyperParams prev = out.hp;
    if (t >= opts.hyper_warmup) {
      VectorXd beta_sq =
          path == DiracPath::em
              ? VectorXd(next.mu.array().square())
              : VectorXd(next.C.diagonal().array() + next.m.array().square());
      if (opts.tune_gamma) {
        out.hp.gamma_sq = path == DiracPath::em
                              ? gamma_sq_update(stats, next.mu, zeroC).value
                              : gamma_sq_update(stats, next.m, next.C).value;
      }
      if (opts.tune_lambda) {
        LambdaUpdate lu = dirac_lambda_step(beta_sq, prev);
        if (!lu.degenerate) out.hp.lambda = lu.value;
      }
      out.trace.push_back({t, std::sqrt(out.hp.gamma_sq), out.hp.lambda,
                           outer_objective(stats, next.m, next.C, out.hp)});
    }
    cur = std::move(next);
    if (t > opts.hyper_warmup + 1 && dpath <= stop.eps &&
        rel_change(prev.gamma_sq, out.hp.gamma_sq) < opts.outer_tol &&
        rel_change(prev.lambda, out.hp.lambda) < opts.outer_tol)
      break;
  }
  VblOptions fopts;
  fopts.record_trace = false;
  out.fit = vbl_iterate(block, out.hp, cur, stop, fopts);
  return out;
}

void write_hyper_trace_csv(const std::string& path, const std::vector<HyperTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "tau,gamma,lambda,objective\n";
  out.precision(17);
  for (const auto& r : trace)
    out << r.tau << ',' << r.gamma << ',' << r.lambda << ',' << r.objective << '\n';
}

}  // namespace sparsevb
