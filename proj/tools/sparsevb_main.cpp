#include <CLI11.hpp>

#include <Eigen/Core>
#include <cstdlib>
#include <iostream>

#include "sparsevb/experiments.hpp"

using namespace sparsevb;

namespace {

PriorKind kind_from_nu(const std::string& nu) {
  if (nu == "1") return PriorKind::laplace_nu1;
  if (nu == "0") return PriorKind::inv_gauss_nu0;
  if (nu == "improper") return PriorKind::power_improper;
  throw CLI::ValidationError("--nu must be one of 0, 1, improper");
}

void apply_thread_cap() {
  if (const char* env = std::getenv("SPARSEVB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();
  CLI::App app{"sparsevb: variational Bayesian inference for sparsity priors"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  double gamma = 1.0, lambda = 1.0, delta = 1e-3;
  std::string nu = "1";
  double nu_value = -1.0;

  auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--nu", nu, "prior shape: 0, 1 or improper");
    c->add_option("--nu-value", nu_value, "explicit nu for the improper branch");
    c->add_option("--lambda", lambda, "sparsity scale");
    c->add_option("--gamma", gamma, "noise std");
    c->add_option("--delta", delta, "smoothing parameter");
    c->add_option("--max-iter", cfg.stop.max_iter, "iteration cap");
    c->add_option("--eps", cfg.stop.eps, "stopping tolerance");
    c->add_option("--seed", cfg.seed, "rng seed");
    c->add_option("--out", cfg.out_dir, "output directory")->required();
  };

  CLI::App* fit = app.add_subcommand("fit", "fit a tabular dataset");
  fit->add_option("--data", cfg.data_path, "CSV file")->required();
  fit->add_option("--label", cfg.label_column, "label column (name or index)")->required();
  fit->add_option("--tuner", cfg.tuner, "none|nested|interleaved|dirac");
  fit->add_option("--timing-reps", cfg.timing_reps, "timing repetitions");
  fit->add_option("--folds", cfg.folds, "also run k-fold cross-validation");
  add_model_flags(fit);

  CLI::App* tv = app.add_subcommand("tv", "total-variation deconvolution");
  tv->add_option("--image", cfg.image_path, "input image (PGM or grid CSV)");
  tv->add_option("--p0", cfg.p0, "generated image side length");
  tv->add_option("--omega", cfg.omega, "blur strength");
  tv->add_option("--rho", cfg.rho, "Fourier truncation threshold factor");
  tv->add_option("--modes", cfg.n_tilde_cap, "dominant-mode count (n_tilde)");
  bool online = false;
  tv->add_flag("--online", online, "use the rank-M + diagonal recursion");
  tv->add_option("--batch", cfg.batch_2m, "online stacked system size 2M");
  tv->add_flag("--toy", [&cfg](std::int64_t) { cfg.experiment = "tv-toy"; },
               "small dense toy run");
  tv->add_option("--inner-iter", cfg.inner_max_iter, "online inner iteration cap");
  bool no_em = false;
  tv->add_flag("--no-em", no_em, "skip the MAP path");
  add_model_flags(tv);

  CLI::App* cv = app.add_subcommand("cv", "k-fold cross-validation");
  cv->add_option("--data", cfg.data_path, "CSV file")->required();
  cv->add_option("--label", cfg.label_column, "label column (name or index)")->required();
  cv->add_option("--folds", cfg.folds, "fold count")->required();
  add_model_flags(cv);

  CLI::App* demo = app.add_subcommand("vbl-2d", "two-dimensional illustration run");
  add_model_flags(demo);

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.hp.gamma_sq = gamma * gamma;
    cfg.hp.lambda = lambda;
    cfg.hp.delta = delta;
    cfg.hp.kind = kind_from_nu(nu);
    if (cfg.hp.kind == PriorKind::power_improper)
      cfg.hp.nu = nu_value >= 0.5 ? 0.0 : nu_value;  // nu < 1/2 required
    cfg.em_path = !no_em;

    if (fit->parsed()) {
      cfg.experiment = "fit";
      const FitSummary s = run_fit(cfg);
      std::cout << "gamma_hat=" << std::sqrt(s.hp.gamma_sq) << " lambda_hat=" << s.hp.lambda
                << " iterations=" << s.iterations;
      if (s.cv_rmse >= 0) std::cout << " cv_rmse=" << s.cv_rmse;
      std::cout << " fit_ms=" << s.fit_ms_median << "\n";
    } else if (tv->parsed()) {
      if (cfg.experiment != "tv-toy") cfg.experiment = online ? "tv-online" : "tv-mono";
      if (cfg.experiment == "tv-online") {
        const TvOnlineSummary s = run_tv_online(cfg);
        std::cout << "batches=" << s.batches << " err_after_pair=" << s.err_after_pair
                  << " err_final=" << s.err_final << "\n";
      } else if (cfg.experiment == "tv-toy") {
        const TvToySummary s = run_tv_toy(cfg);
        std::cout << "err_m=" << s.err_m << " err_mu=" << s.err_mu
                  << " err_mu_best=" << s.err_mu_best << " err_tikhonov=" << s.err_tikhonov
                  << "\n";
      } else {
        const TvMonoSummary s = run_tv_mono(cfg);
        std::cout << "n_tilde=" << s.n_tilde << " trunc_obs_error=" << s.trunc_obs_error
                  << " err_m=" << s.err_m << " err_mu=" << s.err_mu << "\n";
      }
    } else if (cv->parsed()) {
      TabularDataset data = load_csv(cfg.data_path, cfg.label_column);
      const double rmse = kfold_rmse(data, cfg.hp, cfg.folds, cfg.seed);
      std::cout << "cv_rmse=" << rmse << "\n";
    } else if (demo->parsed()) {
      cfg.experiment = "vbl-2d";
      const Vbl2dSummary s = run_vbl_2d(cfg);
      std::cout << "argmax_dist=" << s.argmax_dist
                << " fixed_point_delta=" << s.fixed_point_delta << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
