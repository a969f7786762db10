#include "sparsevb/gig.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace sparsevb {

std::string to_string(PriorKind k) {
  switch (k) {
    case PriorKind::laplace_nu1: return "laplace_nu1";
    case PriorKind::inv_gauss_nu0: return "inv_gauss_nu0";
    case PriorKind::general_nu: return "general_nu";
    case PriorKind::jeffreys_improper: return "jeffreys_improper";
    case PriorKind::power_improper: return "power_improper";
    case PriorKind::frozen_gaussian: return "frozen_gaussian";
    case PriorKind::stable_bridge: return "stable_bridge";
  }
  return "unknown";
}

void GigParams::validate(PriorKind kind) const {
  if (delta < 0.0) throw std::domain_error("gig: delta must be >= 0");
  if (lambda < 0.0) throw std::domain_error("gig: lambda must be >= 0");
  switch (kind) {
    case PriorKind::laplace_nu1:
    case PriorKind::inv_gauss_nu0:
    case PriorKind::general_nu:
      if (lambda == 0.0)
        throw std::domain_error("gig: lambda must be > 0 for proper branches");
      break;
    case PriorKind::jeffreys_improper:
      if (lambda != 0.0)
        throw std::domain_error("gig: jeffreys branch requires lambda = 0");
      break;
    case PriorKind::power_improper:
      if (lambda != 0.0)
        throw std::domain_error("gig: power-improper branch requires lambda = 0");
      if (nu >= 0.5)
        throw std::domain_error("gig: power-improper branch requires nu < 1/2");
      break;
    case PriorKind::frozen_gaussian:
      break;
    case PriorKind::stable_bridge:
      throw std::logic_error("gig: stable_bridge moments are not implemented");
  }
}

double bessel_ratio_half(int order_index, double z) {
  if (z <= 0.0) throw std::domain_error("bessel_ratio_half: z must be > 0");
  if (order_index == 1) return (z + 1.0) / z;  // K_{3/2}/K_{1/2}
  if (order_index == 0) return 1.0;            // K_{1/2}/K_{-1/2}
  throw std::domain_error("bessel_ratio_half: order_index must be 0 or 1");
}

namespace {

// Adaptive Simpson, relative tolerance against the running whole-interval
// estimate. f must be smooth on [a,b].
template <typename F>
double simpson_segment(const F& f, double a, double fa, double b, double fb,
                       double m, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double fa, double b, double fb,
                            double m, double fm, double whole, double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson_segment(f, a, fa, m, fm, lm, flm);
  double right = simpson_segment(f, m, fm, b, fb, rm, frm);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, tol * 0.5, depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, tol * 0.5, depth - 1);
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double rel_tol) {
  double m = 0.5 * (a + b);
  double fa = f(a), fb = f(b), fm = f(m);
  double whole = simpson_segment(f, a, fa, b, fb, m, fm);
  double tol = std::max(std::abs(whole), 1e-300) * rel_tol;
  return adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, 20);
}

// log( e^z K_a(z) ), a >= 0, via K_a(z) = int_0^inf e^{-z cosh t} cosh(a t) dt.
double log_scaled_bessel_k(double a, double z) {
  if (z <= 0.0) throw std::domain_error("scaled_bessel_k: z must be > 0");
  a = std::abs(a);
  // exponent of the dominant half: phi(t) = a t - z (cosh t - 1)
  const double tstar = (a > 0.0) ? std::asinh(a / z) : 0.0;
  const double peak = a * tstar - z * (std::cosh(tstar) - 1.0);
  double hi = tstar + 1.0;
  while (a * hi - z * (std::cosh(hi) - 1.0) > peak - 46.0) hi += 1.0;
  auto g = [&](double t) {
    double base = -z * (std::cosh(t) - 1.0) - peak;
    return 0.5 * (std::exp(base + a * t) + std::exp(base - a * t));
  };
  double integral = adaptive_simpson(g, 0.0, hi, 1e-12);
  return peak + std::log(integral);
}

}  // namespace

double scaled_bessel_k(double a, double z) {
  return std::exp(log_scaled_bessel_k(a, z));
}

double log_bessel_k(double a, double z) {
  return log_scaled_bessel_k(a, z) - z;
}

double bessel_ratio(double nu, double z) {
  if (z <= 0.0) throw std::domain_error("bessel_ratio: z must be > 0");
  if (nu == 1.0) return (z + 1.0) / z;
  if (nu == 0.0) return 1.0;
  return std::exp(log_scaled_bessel_k(nu + 0.5, z) - log_scaled_bessel_k(nu - 0.5, z));
}

namespace {

double chi_sq_of(const GigParams& p, double beta_sq) {
  if (beta_sq < 0.0) throw std::domain_error("gig: beta_sq must be >= 0");
  return p.delta * p.delta + beta_sq;
}

}  // namespace

double cond_inv_theta(const GigParams& params, double beta_sq, PriorKind kind) {
  params.validate(kind);
  const double chi_sq = chi_sq_of(params, beta_sq);
  const double chi = std::sqrt(chi_sq);
  switch (kind) {
    case PriorKind::laplace_nu1:
      if (chi == 0.0) throw std::domain_error("gig: singular moment, chi = 0");
      return params.lambda / chi;
    case PriorKind::inv_gauss_nu0:
      if (chi == 0.0) throw std::domain_error("gig: singular moment, chi = 0");
      return params.lambda / chi + 1.0 / chi_sq;
    case PriorKind::general_nu: {
      if (chi == 0.0) throw std::domain_error("gig: singular moment, chi = 0");
      const double r = bessel_ratio(params.nu, params.lambda * chi);
      return params.lambda / chi * r - (2.0 * params.nu - 1.0) / chi_sq;
    }
    case PriorKind::jeffreys_improper:
      if (chi_sq == 0.0) throw std::domain_error("gig: singular moment, beta = 0");
      return 1.0 / chi_sq;
    case PriorKind::power_improper:
      if (chi_sq == 0.0) throw std::domain_error("gig: singular moment, beta = 0");
      return (1.0 - 2.0 * params.nu) / chi_sq;
    default:
      throw std::domain_error("gig: no conditional moments for kind " + to_string(kind));
  }
}

double cond_theta(const GigParams& params, double beta_sq, PriorKind kind) {
  params.validate(kind);
  const double chi_sq = chi_sq_of(params, beta_sq);
  const double chi = std::sqrt(chi_sq);
  switch (kind) {
    case PriorKind::laplace_nu1:
      return (params.lambda * chi + 1.0) / (params.lambda * params.lambda);
    case PriorKind::inv_gauss_nu0:
      if (chi == 0.0) throw std::domain_error("gig: singular moment, chi = 0");
      return chi / params.lambda;
    case PriorKind::general_nu: {
      if (chi == 0.0) throw std::domain_error("gig: singular moment, chi = 0");
      const double r = bessel_ratio(params.nu, params.lambda * chi);
      return chi / params.lambda * r;
    }
    case PriorKind::jeffreys_improper:
      throw std::domain_error("gig: E[theta] undefined for the Jeffreys branch");
    case PriorKind::power_improper:
      if (params.nu >= -0.5)
        throw std::domain_error("gig: E[theta] requires nu < -1/2 on the improper branch");
      return -chi_sq / (2.0 * params.nu + 1.0);
    default:
      throw std::domain_error("gig: no conditional moments for kind " + to_string(kind));
  }
}

ConditionalMoments cond_moments(const GigParams& params, double beta_sq, PriorKind kind) {
  return ConditionalMoments{cond_theta(params, beta_sq, kind),
                            cond_inv_theta(params, beta_sq, kind)};
}

double log_gig_normalizer(double a, double chi, double lambda) {
  if (chi < 0.0 || lambda < 0.0)
    throw std::domain_error("log_gig_normalizer: chi, lambda must be >= 0");
  if (lambda > 0.0 && chi > 0.0)
    return std::numbers::ln2 + a * (std::log(chi) - std::log(lambda)) +
           log_bessel_k(a, lambda * chi);
  if (lambda == 0.0 && a < 0.0 && chi > 0.0)
    return std::lgamma(-a) + a * std::log(chi * chi / 2.0);
  if (chi == 0.0 && a > 0.0 && lambda > 0.0)
    return std::lgamma(a) - a * std::log(lambda * lambda / 2.0);
  throw std::domain_error("log_gig_normalizer: non-normalizable parameter combination");
}

GigParams gig_from_hyper(const HyperParams& hp) {
  double nu = hp.nu;
  if (hp.kind == PriorKind::laplace_nu1) nu = 1.0;
  if (hp.kind == PriorKind::inv_gauss_nu0 || hp.kind == PriorKind::jeffreys_improper)
    nu = 0.0;
  double lambda = hp.lambda;
  if (hp.kind == PriorKind::jeffreys_improper || hp.kind == PriorKind::power_improper)
    lambda = 0.0;
  return GigParams{nu, hp.delta, lambda};
}

}  // namespace sparsevb
