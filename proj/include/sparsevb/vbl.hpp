#ifndef SPARSEVB_VBL_HPP
#define SPARSEVB_VBL_HPP

#include <functional>
#include <string>
#include <vector>

#include "sparsevb/gaussian.hpp"
#include "sparsevb/gig.hpp"
#include "sparsevb/types.hpp"

namespace sparsevb {

// Element-wise mixing precisions 1/theta. The EM path conditions on the
// current MAP iterate, the VBEM path on the variational moments; the only
// difference is the squared argument.
VectorXd em_theta_update(const VectorXd& mu, const HyperParams& hp);
VectorXd vbem_theta_update(const VectorXd& m, const VectorXd& C_diag, const HyperParams& hp);

struct TraceRow {
  int iter;
  double misfit;       // ||X m - Y||
  double elbo;
  double em_logjoint;
  double delta_m;
  double delta_mu;
};

struct VblOptions {
  PosteriorForm form = PosteriorForm::automatic;
  // Constrain q(beta) to a point mass (C = 0 in the theta update); the
  // m-path then reproduces the EM path exactly.
  bool point_mass_q_beta = false;
  bool record_trace = true;
  std::function<void(int, const PosteriorTriple&)> observer;
  // Scales used by the frozen_gaussian kind; empty means diag of the
  // current C at entry.
  VectorXd frozen_theta;
};

struct VblResult {
  PosteriorTriple triple;
  std::vector<TraceRow> trace;
  PosteriorTriple best;      // iterate with the smallest VBEM misfit
  double best_misfit = 0.0;
  int best_iter = 0;
  int iterations = 0;
  bool converged = false;
};

// theta0 = 1, mu0 = m0 = 0, C0 = I.
PosteriorTriple default_init(Eigen::Index p);

// One coupled EM/VBEM iteration (both theta updates plus gain solves).
PosteriorTriple vbl_step(const DesignBlock& block, const HyperParams& hp,
                         const PosteriorTriple& cur, const VblOptions& opts = {});
PosteriorTriple vbl_step_stats(const SufficientStats& stats, const HyperParams& hp,
                               const PosteriorTriple& cur, const VblOptions& opts = {});

// Monolithic coupled EM/VBEM loop; both paths run in lockstep and share
// nothing except the data. Stops when both paths satisfy the rule.
VblResult vbl_iterate(const DesignBlock& block, const HyperParams& hp,
                      const PosteriorTriple& init, const StoppingRule& stop,
                      const VblOptions& opts = {});

// Same loop driven by accumulated sufficient statistics (primal form only).
VblResult vbl_iterate_stats(const SufficientStats& stats, const HyperParams& hp,
                            const PosteriorTriple& init, const StoppingRule& stop,
                            const VblOptions& opts = {});

// Variational lower bound with the theta factor at its conditional optimum.
// Exact for proper priors; up to an additive constant for improper ones.
double elbo(const DesignBlock& block, const HyperParams& hp, const VectorXd& m,
            const MatrixXd& C);
double elbo_stats(const SufficientStats& stats, const HyperParams& hp, const VectorXd& m,
                  const MatrixXd& C);

// log P(Y, mu) under the marginal scale-mixture prior; the EM ascent target.
double em_log_joint(const DesignBlock& block, const HyperParams& hp, const VectorXd& mu);

struct CredibleReport {
  double lo, hi;       // m_j -/+ 2 sqrt(C_jj)
  bool zero_inside;
  bool flagged;        // mu_j outside the interval
};

std::vector<CredibleReport> credible_flags(const PosteriorTriple& triple);

VectorXd threshold(const VectorXd& v, double eps);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace sparsevb

#endif
