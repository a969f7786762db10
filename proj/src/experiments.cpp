#include "sparsevb/experiments.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sparsevb/image_io.hpp"
#include "sparsevb/vbl.hpp"

namespace sparsevb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string canonical_config(const ExperimentConfig& c) {
  std::ostringstream ss;
  ss.precision(17);
  ss << c.experiment << '|' << c.data_path << '|' << c.label_column << '|' << c.tuner << '|'
     << c.hp.gamma_sq << '|' << c.hp.lambda << '|' << c.hp.delta << '|' << c.hp.nu << '|'
     << int(c.hp.kind) << '|' << c.stop.max_iter << '|' << c.stop.eps << '|'
     << int(c.stop.metric) << '|' << c.p0 << '|' << c.image_path << '|' << c.omega << '|'
     << c.rho << '|' << c.n_tilde_cap << '|' << c.batch_2m << '|' << int(c.strategy) << '|'
     << c.em_path << '|' << c.inner_max_iter << '|' << c.seed << '|' << c.folds;
  return ss.str();
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double iqr_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto q = [&](double f) {
    const double pos = f * double(v.size() - 1);
    const std::size_t lo = std::size_t(pos);
    const double frac = pos - double(lo);
    return lo + 1 < v.size() ? v[lo] * (1.0 - frac) + v[lo + 1] * frac : v[lo];
  };
  return q(0.75) - q(0.25);
}

template <typename F>
std::pair<double, double> time_ms(F&& fn, int reps) {
  std::vector<double> samples;
  for (int r = 0; r < std::max(reps, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    samples.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count());
  }
  return {median_of(samples), iqr_of(samples)};
}

void write_manifest(const ExperimentConfig& cfg, const json& extra) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const std::uint64_t h = config_hash(cfg);
  bool mismatch = false;
  const fs::path mpath = dir / "manifest.json";
  if (fs::exists(mpath)) {
    try {
      std::ifstream in(mpath);
      json prev = json::parse(in);
      mismatch = prev.value("config_hash", std::uint64_t(0)) != h;
    } catch (...) {
      mismatch = true;
    }
  }
  json m;
  m["experiment"] = cfg.experiment;
  m["config_hash"] = h;
  m["previous_hash_mismatch"] = mismatch;
  m["config"] = {{"data_path", cfg.data_path},
                 {"label_column", cfg.label_column},
                 {"tuner", cfg.tuner},
                 {"gamma_sq", cfg.hp.gamma_sq},
                 {"lambda", cfg.hp.lambda},
                 {"delta", cfg.hp.delta},
                 {"nu", cfg.hp.nu},
                 {"prior_kind", to_string(cfg.hp.kind)},
                 {"max_iter", cfg.stop.max_iter},
                 {"eps", cfg.stop.eps},
                 {"p0", cfg.p0},
                 {"image_path", cfg.image_path},
                 {"omega", cfg.omega},
                 {"rho", cfg.rho},
                 {"n_tilde_cap", cfg.n_tilde_cap},
                 {"batch_2m", cfg.batch_2m},
                 {"seed", cfg.seed},
                 {"folds", cfg.folds}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  std::ofstream out(mpath);
  out << m.dump(2) << '\n';
}

void write_timing(const std::string& out_dir,
                  const std::vector<std::tuple<std::string, double, double>>& rows) {
  std::ofstream out(fs::path(out_dir) / "timing.csv");
  out << "phase,median_ms,iqr_ms\n";
  out.precision(17);
  for (const auto& [name, med, iqr] : rows) out << name << ',' << med << ',' << iqr << '\n';
}

void write_coefficients(const std::string& out_dir, const std::vector<std::string>& names,
                        const PosteriorTriple& t) {
  std::ofstream out(fs::path(out_dir) / "coefficients.csv");
  out << "feature,mu,m,sd,lo,hi,zero_inside,flagged\n";
  out.precision(17);
  const auto reports = credible_flags(t);
  for (Eigen::Index j = 0; j < t.m.size(); ++j) {
    const std::string name =
        j < Eigen::Index(names.size()) ? names[std::size_t(j)] : "x" + std::to_string(j);
    const double sd = std::sqrt(std::max(t.C(j, j), 0.0));
    out << name << ',' << t.mu(j) << ',' << t.m(j) << ',' << sd << ',' << reports[std::size_t(j)].lo
        << ',' << reports[std::size_t(j)].hi << ',' << int(reports[std::size_t(j)].zero_inside)
        << ',' << int(reports[std::size_t(j)].flagged) << '\n';
  }
}

ImageGrid load_or_make_image(const ExperimentConfig& cfg, int default_p0, bool toy) {
  if (!cfg.image_path.empty()) {
    if (cfg.image_path.size() > 4 &&
        cfg.image_path.substr(cfg.image_path.size() - 4) == ".pgm")
      return read_pgm(cfg.image_path);
    return read_grid_csv(cfg.image_path);
  }
  const int p0 = cfg.p0 > 0 ? cfg.p0 : default_p0;
  return toy ? toy_blocks(p0) : shepp_logan_phantom(p0);
}

void write_image_bundle(const std::string& out_dir, const std::string& stem,
                        const ImageGrid& img) {
  write_pgm((fs::path(out_dir) / (stem + ".pgm")).string(), img);
  write_grid_csv((fs::path(out_dir) / (stem + ".csv")).string(), img);
}

// gradient-coordinate vector -> mean image, gradient-norm map, sd map of
// the gradient norm from the diagonal covariance.
void write_tv_maps(const std::string& out_dir, const TvDesign& design, const VectorXd& m,
                   const VectorXd* c_diag, const std::string& prefix) {
  const Eigen::Index ptil = Eigen::Index(design.spec().p0) * design.spec().p0;
  write_image_bundle(out_dir, prefix + "_mean", design.image_from_coords(m));
  ImageGrid gnorm(design.spec().p0,
                  (m.segment(0, ptil).array().square() + m.segment(ptil, ptil).array().square())
                      .sqrt()
                      .matrix());
  write_image_bundle(out_dir, prefix + "_grad_norm", gnorm);
  if (c_diag) {
    ImageGrid gsd(design.spec().p0,
                  (c_diag->segment(0, ptil).array() + c_diag->segment(ptil, ptil).array())
                      .sqrt()
                      .matrix());
    write_image_bundle(out_dir, prefix + "_grad_sd", gsd);
  }
}

}  // namespace

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  // FNV-1a over the canonical parameter string
  const std::string s = canonical_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

FitSummary run_fit(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  TabularDataset data = load_csv(cfg.data_path, cfg.label_column);
  const DesignBlock block = data.block();
  FitSummary out;
  out.n = long(data.n());

  HyperParams hp = cfg.hp;
  std::vector<HyperTraceRow> hyper_trace;
  if (cfg.tuner == "nested") {
    TuneResult r = tune_nested(block, hp, cfg.stop);
    hp = r.hp;
    hyper_trace = r.trace;
  } else if (cfg.tuner == "interleaved") {
    TuneResult r = tune_interleaved(block, hp, cfg.stop);
    hp = r.hp;
    hyper_trace = r.trace;
  } else if (cfg.tuner == "dirac") {
    TuneResult r = tune_dirac_em(block, hp, cfg.stop, DiracPath::em);
    hp = r.hp;
    hyper_trace = r.trace;
  } else if (cfg.tuner != "none") {
    throw std::invalid_argument("unknown tuner: " + cfg.tuner);
  }

  VblResult fit;
  auto [med, iqr] = time_ms(
      [&] { fit = vbl_iterate(block, hp, default_init(data.p()), cfg.stop); },
      cfg.timing_reps);
  out.hp = hp;
  out.triple = fit.triple;
  out.iterations = fit.iterations;
  out.fit_ms_median = med;
  out.fit_ms_iqr = iqr;

  write_coefficients(cfg.out_dir, data.feature_names, fit.triple);
  write_trace_csv((fs::path(cfg.out_dir) / "trace.csv").string(), fit.trace);
  if (!hyper_trace.empty())
    write_hyper_trace_csv((fs::path(cfg.out_dir) / "hyper_trace.csv").string(), hyper_trace);
  if (cfg.folds > 1) out.cv_rmse = kfold_rmse(data, hp, cfg.folds, cfg.seed);

  write_timing(cfg.out_dir, {{"fit", med, iqr}});
  write_manifest(cfg, json{{"n", out.n},
                           {"p", data.p()},
                           {"gamma_hat", std::sqrt(hp.gamma_sq)},
                           {"lambda_hat", hp.lambda},
                           {"cv_rmse", out.cv_rmse},
                           {"iterations", out.iterations}});
  return out;
}

namespace {

// Smoothed-Laplace log posterior density (unnormalized) for the 2-D
// illustration instance.
double log_post_2d(const DesignBlock& block, const HyperParams& hp, double b1, double b2) {
  Eigen::Vector2d beta(b1, b2);
  const double misfit = (block.X * beta - block.Y).squaredNorm();
  const double d2 = hp.delta * hp.delta;
  return -0.5 * misfit / hp.gamma_sq -
         hp.lambda * (std::sqrt(d2 + b1 * b1) + std::sqrt(d2 + b2 * b2));
}

}  // namespace

Vbl2dSummary run_vbl_2d(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  MatrixXd X(2, 2);
  X << 1.0, 0.6, 0.6, 1.0;
  VectorXd Y(2);
  Y << 0.8, -0.6;
  const DesignBlock block(X, Y);
  HyperParams hp = cfg.hp;

  StoppingRule stop{2000, 1e-14, StopMetric::iterate_delta};
  VblOptions opts;
  opts.record_trace = true;
  VblResult fit = vbl_iterate(block, hp, default_init(2), stop, opts);

  Vbl2dSummary out;
  out.mu = fit.triple.mu;
  out.m = fit.triple.m;
  out.C = fit.triple.C;

  // one extra sweep for the fixed-point check
  PosteriorTriple extra = vbl_step(block, hp, fit.triple);
  out.fixed_point_delta =
      std::max({(extra.m - fit.triple.m).cwiseAbs().maxCoeff(),
                (extra.mu - fit.triple.mu).cwiseAbs().maxCoeff(),
                (extra.C - fit.triple.C).cwiseAbs().maxCoeff()});

  // quadrature argmax on [-4,4]^2, 1000 points per direction
  const int G = 1000;
  const double lo = -4.0, hi = 4.0;
  out.grid_cell = (hi - lo) / double(G - 1);
  double best = -std::numeric_limits<double>::infinity();
  double bx = 0, by = 0;
  for (int i = 0; i < G; ++i) {
    const double b1 = lo + out.grid_cell * i;
    for (int j = 0; j < G; ++j) {
      const double b2 = lo + out.grid_cell * j;
      const double v = log_post_2d(block, hp, b1, b2);
      if (v > best) {
        best = v;
        bx = b1;
        by = b2;
      }
    }
  }
  out.argmax_dist =
      std::max(std::abs(bx - out.mu(0)), std::abs(by - out.mu(1)));

  // contour data (decimated grid) for plotting
  {
    std::ofstream grid(fs::path(cfg.out_dir) / "posterior_grid.csv");
    grid << "b1,b2,log_post,log_q\n";
    grid.precision(10);
    const int D = 200;
    const double step = (hi - lo) / double(D - 1);
    Eigen::Matrix2d Cinv = fit.triple.C.inverse();
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) {
        const double b1 = lo + step * i, b2 = lo + step * j;
        Eigen::Vector2d d(b1 - fit.triple.m(0), b2 - fit.triple.m(1));
        grid << b1 << ',' << b2 << ',' << log_post_2d(block, hp, b1, b2) << ','
             << -0.5 * d.dot(Cinv * d) << '\n';
      }
  }
  {
    std::ofstream cmp(fs::path(cfg.out_dir) / "quadrature_comparison.csv");
    cmp.precision(17);
    cmp << "quantity,value\n";
    cmp << "grid_argmax_b1," << bx << "\ngrid_argmax_b2," << by << "\nmu_1," << out.mu(0)
        << "\nmu_2," << out.mu(1) << "\nargmax_dist," << out.argmax_dist << "\ngrid_cell,"
        << out.grid_cell << "\nfixed_point_delta," << out.fixed_point_delta << '\n';
  }
  write_trace_csv((fs::path(cfg.out_dir) / "trace.csv").string(), fit.trace);
  write_manifest(cfg, json{{"argmax_dist", out.argmax_dist},
                           {"fixed_point_delta", out.fixed_point_delta}});
  return out;
}

TvToySummary run_tv_toy(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const ImageGrid truth = load_or_make_image(cfg, 28, true);
  BlurSpec spec{truth.p0, cfg.omega, std::sqrt(cfg.hp.gamma_sq), {}};
  const TvDesign design(spec);
  const VectorXd y = design.observe(truth, cfg.seed);
  const Eigen::Index n = design.n();

  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) all[std::size_t(i)] = i;
  const DesignBlock block(design.rows(all), y);

  TvToySummary out;
  out.noise_level = spec.gamma * std::sqrt(double(n));
  const double truth_norm = truth.values.norm();

  auto image_error = [&](const VectorXd& coords) {
    return (design.image_from_coords(coords).values - truth.values).norm() / truth_norm;
  };

  VblOptions opts;
  opts.form = PosteriorForm::dual;
  opts.observer = [&](int, const PosteriorTriple& t) {
    out.err_m_trace.push_back(image_error(t.m));
    out.err_mu_trace.push_back(image_error(t.mu));
    out.misfit_trace.push_back((block.X * t.m - block.Y).norm());
  };
  const VblResult fit = vbl_iterate(block, cfg.hp, default_init(design.p()), cfg.stop, opts);

  out.err_m = out.err_m_trace.back();
  out.err_mu = out.err_mu_trace.back();
  out.misfit_final = out.misfit_trace.back();
  const auto best_it =
      std::min_element(out.err_mu_trace.begin(), out.err_mu_trace.end());
  out.err_mu_best = *best_it;
  out.best_iter = int(best_it - out.err_mu_trace.begin());

  // Tikhonov baseline: Gaussian prior tau^2 I, best over a small grid
  out.err_tikhonov = std::numeric_limits<double>::infinity();
  for (double tau_sq : {1e-2, 1e-1, 1.0, 10.0}) {
    HyperParams ghp = cfg.hp;
    ghp.kind = PriorKind::frozen_gaussian;
    PosteriorTriple init = default_init(design.p());
    init.C *= tau_sq;
    StoppingRule one{1, 1.0, StopMetric::iterate_delta};
    const VblResult tik = vbl_iterate(block, ghp, init, one);
    out.err_tikhonov = std::min(out.err_tikhonov, image_error(tik.triple.m));
  }

  // artifacts
  write_image_bundle(cfg.out_dir, "truth", truth);
  ImageGrid obs = ImageGrid::zero(truth.p0);
  obs.values = y;
  write_image_bundle(cfg.out_dir, "observations", obs);
  const VectorXd cd = fit.triple.C.diagonal();
  write_tv_maps(cfg.out_dir, design, fit.triple.m, &cd, "vbl");
  write_tv_maps(cfg.out_dir, design, fit.triple.mu, nullptr, "map");
  {
    std::ofstream tr(fs::path(cfg.out_dir) / "error_trace.csv");
    tr << "iter,misfit,err_m,err_mu\n";
    tr.precision(17);
    for (std::size_t i = 0; i < out.misfit_trace.size(); ++i)
      tr << i << ',' << out.misfit_trace[i] << ',' << out.err_m_trace[i] << ','
         << out.err_mu_trace[i] << '\n';
  }
  write_manifest(cfg, json{{"err_m", out.err_m},
                           {"err_mu", out.err_mu},
                           {"err_mu_best", out.err_mu_best},
                           {"err_tikhonov", out.err_tikhonov},
                           {"misfit_final", out.misfit_final},
                           {"noise_level", out.noise_level}});
  return out;
}

TvMonoSummary run_tv_mono(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const ImageGrid truth = load_or_make_image(cfg, 256, false);
  BlurSpec spec{truth.p0, cfg.omega, std::sqrt(cfg.hp.gamma_sq), {}};
  const TvDesign design(spec);

  TvMonoSummary out;
  auto solver = cfg.rho > 0.0
                    ? TruncatedTvSolver(spec, cfg.rho)
                    : TruncatedTvSolver(spec, cfg.n_tilde_cap);
  out.n_tilde = solver.n_tilde();
  out.trunc_obs_error = solver.truncation_error(truth);

  const VectorXd y = design.observe(truth, cfg.seed);
  solver.set_observations(y);

  const Eigen::Index p = design.p();
  const double truth_norm = truth.values.norm();
  VectorXd m = VectorXd::Zero(p), mu = VectorXd::Zero(p);
  VectorXd c_diag = VectorXd::Ones(p);
  const GigParams g = gig_from_hyper(cfg.hp);

  std::ofstream tr(fs::path(cfg.out_dir) / "error_trace.csv");
  tr << "iter,err_m,err_mu,delta_m\n";
  tr.precision(17);
  for (int t = 0; t < cfg.stop.max_iter; ++t) {
    VectorXd th_v(p), th_e(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      th_v(j) = 1.0 / cond_inv_theta(g, c_diag(j) + m(j) * m(j), cfg.hp.kind);
      th_e(j) = 1.0 / cond_inv_theta(g, mu(j) * mu(j), cfg.hp.kind);
    }
    auto it_v = solver.solve(th_v, true);
    const double dm = (it_v.m - m).norm() / std::max(1.0, it_v.m.norm());
    m = it_v.m;
    c_diag = it_v.C_diag;
    if (cfg.em_path) mu = solver.solve(th_e, false).m;
    out.err_m = (design.image_from_coords(m).values - truth.values).norm() / truth_norm;
    out.err_mu = cfg.em_path ? (design.image_from_coords(mu).values - truth.values).norm() /
                                   truth_norm
                             : out.err_m;
    out.iterations = t + 1;
    tr << t << ',' << out.err_m << ',' << out.err_mu << ',' << dm << '\n';
    if (dm < cfg.stop.eps) break;
  }

  write_image_bundle(cfg.out_dir, "truth", truth);
  ImageGrid obs = ImageGrid::zero(truth.p0);
  obs.values = y;
  write_image_bundle(cfg.out_dir, "observations", obs);
  write_tv_maps(cfg.out_dir, design, m, &c_diag, "vbl");
  if (cfg.em_path) write_tv_maps(cfg.out_dir, design, mu, nullptr, "map");
  write_manifest(cfg, json{{"n_tilde", out.n_tilde},
                           {"n_modes", solver.n_modes()},
                           {"trunc_obs_error", out.trunc_obs_error},
                           {"err_m", out.err_m},
                           {"err_mu", out.err_mu},
                           {"iterations", out.iterations}});
  return out;
}

TvOnlineSummary run_tv_online(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const ImageGrid truth = load_or_make_image(cfg, 256, false);
  BlurSpec spec{truth.p0, cfg.omega, std::sqrt(cfg.hp.gamma_sq), {}};
  const TvDesign design(spec);
  const VectorXd y = design.observe(truth, cfg.seed);
  const Eigen::Index n = design.n();
  if (cfg.batch_2m < 2 || cfg.batch_2m % 2 != 0)
    throw std::invalid_argument("tv-online: batch_2m must be a positive even count");
  const Eigen::Index M = cfg.batch_2m / 2;

  BatchPlan plan{M, cfg.strategy, cfg.seed + 1};
  const auto batches = make_batches(n, plan);

  LowRankOptions lopts;
  lopts.em_path = cfg.em_path;
  lopts.inner_max_iter = cfg.inner_max_iter;
  LowRankVbl<float> engine(design.p(), M, cfg.hp, lopts);

  TvOnlineSummary out;
  const double truth_norm = truth.values.norm();
  std::ofstream tr(fs::path(cfg.out_dir) / "error_trace.csv");
  tr << "batch,err_m,compression_tail\n";
  tr.precision(17);

  Eigen::MatrixXf rows;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    design.rows_into<float>(batches[b], rows);
    Eigen::VectorXf labels(Eigen::Index(batches[b].size()));
    for (Eigen::Index i = 0; i < labels.size(); ++i)
      labels(i) = float(y(batches[b][std::size_t(i)]));
    engine.assimilate(rows, labels);
    const LowRankPosterior post = engine.posterior();
    const double err =
        (design.image_from_coords(post.m).values - truth.values).norm() / truth_norm;
    out.err_per_batch.push_back(err);
    if (b == 1) out.err_after_pair = err;
    tr << b << ',' << err << ',' << engine.compression_tail() << '\n';
  }
  out.err_final = out.err_per_batch.back();
  out.batches = long(batches.size());

  const LowRankPosterior post = engine.posterior();
  write_image_bundle(cfg.out_dir, "truth", truth);
  write_tv_maps(cfg.out_dir, design, post.m, &post.C_diag, "vbl_online");
  engine.save_checkpoint((fs::path(cfg.out_dir) / "state.ckpt").string());
  write_manifest(cfg, json{{"err_after_pair", out.err_after_pair},
                           {"err_final", out.err_final},
                           {"batches", out.batches}});
  return out;
}

void run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "fit")
    run_fit(cfg);
  else if (cfg.experiment == "vbl-2d")
    run_vbl_2d(cfg);
  else if (cfg.experiment == "tv-toy")
    run_tv_toy(cfg);
  else if (cfg.experiment == "tv-mono")
    run_tv_mono(cfg);
  else if (cfg.experiment == "tv-online")
    run_tv_online(cfg);
  else
    throw std::invalid_argument("unknown experiment: " + cfg.experiment);
}

}  // namespace sparsevb
