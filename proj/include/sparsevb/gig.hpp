#ifndef SPARSEVB_GIG_HPP
#define SPARSEVB_GIG_HPP

#include "sparsevb/types.hpp"

namespace sparsevb {

// Parameters of the generalized inverse Gaussian mixing law
//   p(theta) ~ theta^{nu-1} exp(-(delta^2/theta + lambda^2 theta)/2).
// The conditional of theta_j given beta_j is GIG(nu-1/2, sqrt(delta^2+beta_j^2), lambda).
struct GigParams {
  double nu;
  double delta;
  double lambda;

  void validate(PriorKind kind) const;
};

struct ConditionalMoments {
  double e_theta;      // E[theta | beta]
  double e_inv_theta;  // E[1/theta | beta]
};

// K_{3/2}/K_{1/2} (order_index=1) and K_{1/2}/K_{-1/2} (order_index=0),
// the closed-form special cases.
double bessel_ratio_half(int order_index, double z);

// exp(z) * K_a(z) for real order a, z > 0. Stable for large z where K_a
// itself underflows; evaluated by adaptive quadrature of the cosh integral
// representation.
double scaled_bessel_k(double a, double z);

// log K_a(z), via the scaled form.
double log_bessel_k(double a, double z);

// Ratio K_{nu+1/2}(z) / K_{nu-1/2}(z) computed from scaled Bessel values so
// it never overflows or returns infinity.
double bessel_ratio(double nu, double z);

// E[1/theta_j | beta_j^2] for the conditional GIG. beta_sq is accepted
// pre-squared; VBEM callers pass C_jj + m_j^2.
double cond_inv_theta(const GigParams& params, double beta_sq, PriorKind kind);

// E[theta_j | beta_j^2]. The power-improper branch requires nu < -1/2.
double cond_theta(const GigParams& params, double beta_sq, PriorKind kind);

ConditionalMoments cond_moments(const GigParams& params, double beta_sq, PriorKind kind);

// log of the normalizing constant of GIG(a, chi, lambda), i.e.
//   Z = integral theta^{a-1} exp(-(chi^2/theta + lambda^2 theta)/2) dtheta
//     = 2 (chi/lambda)^a K_a(lambda chi)     (proper case)
// For lambda = 0, a < 0:  Z = Gamma(-a) (chi^2/2)^a.
// Used by the ELBO; additive constants in (nu, lambda) are kept.
double log_gig_normalizer(double a, double chi, double lambda);

GigParams gig_from_hyper(const HyperParams& hp);

}  // namespace sparsevb

#endif
