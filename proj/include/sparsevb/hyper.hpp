#ifndef SPARSEVB_HYPER_HPP
#define SPARSEVB_HYPER_HPP

#include <string>
#include <vector>

#include "sparsevb/vbl.hpp"

namespace sparsevb {

struct GammaSqUpdate {
  double value;
  bool clamped;  // negative numerics clamped to 1e-12
};

// gamma^2 = (1/n) (s - 2 v^T m + tr[A (C + m m^T)]).
GammaSqUpdate gamma_sq_update(const SufficientStats& stats, const VectorXd& m,
                              const MatrixXd& C);
// n < p route via tr[X C X^T] + |X m|^2.
GammaSqUpdate gamma_sq_update(const DesignBlock& block, const VectorXd& m,
                              const MatrixXd& C);

struct LambdaUpdate {
  double value;
  bool degenerate;  // update undefined; previous lambda retained in value
};

// Maximizer of the nested-EM lambda objective given the variational moments.
// prior_kind selects the nu=1, nu=0 or power-improper closed form.
LambdaUpdate lambda_update(const VectorXd& m, const VectorXd& C_diag, const HyperParams& hp);

struct HyperTraceRow {
  int tau;
  double gamma;   // sqrt(gamma_sq)
  double lambda;
  double objective;
};

struct TuneResult {
  HyperParams hp;
  std::vector<HyperTraceRow> trace;
  VblResult fit;  // run at the final hyper-parameters
};

struct TuneOptions {
  int outer_max_iter = 200;
  double outer_tol = 1e-8;     // relative change in (gamma^2, lambda)
  int hyper_warmup = 2;        // no hyper updates during the first iterations
  bool tune_lambda = true;
  bool tune_gamma = true;
};

// Approach 1: full VBL convergence between hyper updates.
TuneResult tune_nested(const DesignBlock& block, const HyperParams& hp0,
                       const StoppingRule& inner_stop, const TuneOptions& opts = {});

// Approach 2 (default): one hyper update per VBEM iteration.
TuneResult tune_interleaved(const DesignBlock& block, const HyperParams& hp0,
                            const StoppingRule& stop, const TuneOptions& opts = {});

enum class DiracPath { em, vbem };

// Approach 3: Dirac-constrained hyper factor inside the iteration.
// nu=1 uses lambda / sqrt(1 + lambda^2 tr(D^{-1})/p); nu=0 uses the
// product-log closed form.
TuneResult tune_dirac_em(const DesignBlock& block, const HyperParams& hp0,
                         const StoppingRule& stop, DiracPath path = DiracPath::em,
                         const TuneOptions& opts = {});

// Lambert W on the real branches, solved by Newton to |w e^w - z| <= 1e-12.
// branch 0 is the principal branch, -1 the lower branch (z in (-1/e, 0)).
double product_log(double z, int branch = 0);

void write_hyper_trace_csv(const std::string& path, const std::vector<HyperTraceRow>& trace);

}  // namespace sparsevb

#endif
