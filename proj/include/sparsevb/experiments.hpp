#ifndef SPARSEVB_EXPERIMENTS_HPP
#define SPARSEVB_EXPERIMENTS_HPP

#include <optional>
#include <string>
#include <vector>

#include "sparsevb/dataset.hpp"
#include "sparsevb/hyper.hpp"
#include "sparsevb/online.hpp"
#include "sparsevb/tv.hpp"

namespace sparsevb {

struct ExperimentConfig {
  std::string experiment;  // fit | vbl-2d | tv-toy | tv-mono | tv-online
  std::string out_dir = ".";

  // tabular
  std::string data_path;
  std::string label_column;
  std::string tuner = "none";  // none | nested | interleaved | dirac

  // model
  HyperParams hp;
  StoppingRule stop{200, 1e-8, StopMetric::iterate_delta};

  // tv
  int p0 = 0;                   // used when image_path is empty
  std::string image_path;      // PGM or grid CSV
  double omega = 0.01;
  double rho = 0.0;            // threshold truncation when > 0
  Eigen::Index n_tilde_cap = 0;  // dominant-mode truncation when > 0
  Eigen::Index batch_2m = 0;   // online: stacked system size 2M
  BatchStrategy strategy = BatchStrategy::random_without_replacement;
  bool em_path = true;
  int inner_max_iter = 2;

  std::uint64_t seed = 0;
  int timing_reps = 1;
  int folds = 0;  // when > 0, also run cross-validation
};

std::uint64_t config_hash(const ExperimentConfig& cfg);

struct FitSummary {
  HyperParams hp;
  PosteriorTriple triple;
  int iterations = 0;
  double cv_rmse = -1.0;
  double fit_ms_median = 0.0;
  double fit_ms_iqr = 0.0;
  long n = 0;
};

struct Vbl2dSummary {
  VectorXd mu, m;
  MatrixXd C;
  double grid_cell = 0.0;
  double argmax_dist = 0.0;       // |mu - grid argmax|_inf
  double fixed_point_delta = 0.0; // max entry change after one extra sweep
};

struct TvToySummary {
  double err_m = 0.0, err_mu = 0.0, err_tikhonov = 0.0;
  double err_mu_best = 0.0;
  int best_iter = 0;
  double misfit_final = 0.0;
  double noise_level = 0.0;  // gamma sqrt(n)
  std::vector<double> misfit_trace, err_m_trace, err_mu_trace;
};

struct TvMonoSummary {
  Eigen::Index n_tilde = 0;
  double trunc_obs_error = 0.0;
  double err_m = 0.0, err_mu = 0.0;
  int iterations = 0;
};

struct TvOnlineSummary {
  double err_after_pair = 0.0;  // after the second batch (2M observations)
  double err_final = 0.0;
  std::vector<double> err_per_batch;
  long batches = 0;
};

FitSummary run_fit(const ExperimentConfig& cfg);
Vbl2dSummary run_vbl_2d(const ExperimentConfig& cfg);
TvToySummary run_tv_toy(const ExperimentConfig& cfg);
TvMonoSummary run_tv_mono(const ExperimentConfig& cfg);
TvOnlineSummary run_tv_online(const ExperimentConfig& cfg);

// Dispatch on cfg.experiment; writes the artifact bundle into cfg.out_dir.
void run_experiment(const ExperimentConfig& cfg);

}  // namespace sparsevb

#endif
