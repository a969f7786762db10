#include "sparsevb/tv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sparsevb/rng.hpp"

namespace sparsevb {

namespace {

VectorXd real_checked(const Eigen::VectorXcd& v, const char* where,
                      double tol = 1e-10) {
  const double scale = std::max(1.0, v.real().cwiseAbs().maxCoeff());
  const double resid = v.imag().cwiseAbs().maxCoeff();
  if (resid > tol * scale)
    throw std::runtime_error(std::string(where) + ": imaginary residue " +
                             std::to_string(resid / scale));
  return v.real();
}

}  // namespace

ImageGrid::ImageGrid(int p0_, VectorXd v) : p0(p0_), values(std::move(v)) {
  if (p0 < 2 || p0 % 2 != 0)
    throw std::invalid_argument("ImageGrid: side length must be even and >= 2");
  if (values.size() != Eigen::Index(p0) * p0)
    throw std::invalid_argument("ImageGrid: value count does not match p0^2");
  if (!values.allFinite()) throw std::invalid_argument("ImageGrid: non-finite values");
}

ImageGrid ImageGrid::zero(int p0) {
  return ImageGrid(p0, VectorXd::Zero(Eigen::Index(p0) * p0));
}

void BlurSpec::validate() const {
  if (p0 < 2 || p0 % 2 != 0)
    throw std::invalid_argument("BlurSpec: side length must be even and >= 2");
  if (omega <= 0.0) throw std::invalid_argument("BlurSpec: omega must be > 0");
  if (gamma < 0.0) throw std::invalid_argument("BlurSpec: gamma must be >= 0");
  const Eigen::Index ptil = Eigen::Index(p0) * p0;
  for (Eigen::Index l : observed)
    if (l < 0 || l >= ptil) throw std::invalid_argument("BlurSpec: observation index out of grid");
}

TvOperators::TvOperators(int p0) : p0_(p0), fft_(p0) {
  const Eigen::Index ptil = fft_.size();
  k1_.resize(ptil);
  k2_.resize(ptil);
  k_sq_.resize(ptil);
  kt1_.resize(ptil);
  kt2_.resize(ptil);
  inv_kt_sq_.resize(ptil);
  auto wave = [p0](int idx) { return double(idx < p0 / 2 ? idx : idx - p0); };
  for (Eigen::Index f = 0; f < ptil; ++f) {
    const int i = int(f / p0), j = int(f % p0);
    k1_(f) = wave(i);
    k2_(f) = wave(j);
    k_sq_(f) = k1_(f) * k1_(f) + k2_(f) * k2_(f);
    kt1_(f) = (i == p0 / 2) ? 0.0 : k1_(f);
    kt2_(f) = (j == p0 / 2) ? 0.0 : k2_(f);
    const double kk = kt1_(f) * kt1_(f) + kt2_(f) * kt2_(f);
    inv_kt_sq_(f) = kk > 0.0 ? 1.0 / kk : 0.0;
  }
}

ImageGrid TvOperators::blur(const ImageGrid& img, double omega) const {
  Eigen::VectorXcd spec = fft_.forward_real(img.values);
  spec.array() *= (-omega * k_sq_.array()).exp();
  return ImageGrid(p0_, real_checked(fft_.inverse(spec), "blur"));
}

std::pair<ImageGrid, ImageGrid> TvOperators::grad(const ImageGrid& img) const {
  const Eigen::VectorXcd spec = fft_.forward_real(img.values);
  const std::complex<double> mi(0.0, -1.0);
  Eigen::VectorXcd gx = (mi * kt1_.array().cast<std::complex<double>>() * spec.array()).matrix();
  Eigen::VectorXcd gy = (mi * kt2_.array().cast<std::complex<double>>() * spec.array()).matrix();
  return {ImageGrid(p0_, real_checked(fft_.inverse(gx), "grad")),
          ImageGrid(p0_, real_checked(fft_.inverse(gy), "grad"))};
}

ImageGrid TvOperators::grad_pinv(const ImageGrid& dx, const ImageGrid& dy, double mean) const {
  const Eigen::VectorXcd sx = fft_.forward_real(dx.values);
  const Eigen::VectorXcd sy = fft_.forward_real(dy.values);
  const std::complex<double> pi_(0.0, 1.0);
  Eigen::VectorXcd spec =
      (pi_ * (kt1_.array().cast<std::complex<double>>() * sx.array() +
              kt2_.array().cast<std::complex<double>>() * sy.array()) *
       inv_kt_sq_.array().cast<std::complex<double>>())
          .matrix();
  VectorXd img = real_checked(fft_.inverse(spec), "grad_pinv");
  img.array() += mean;
  return ImageGrid(p0_, std::move(img));
}

std::pair<ImageGrid, ImageGrid> TvOperators::grad_pinv_transpose(const ImageGrid& u) const {
  const Eigen::VectorXcd spec = fft_.forward_real(u.values);
  const std::complex<double> mi(0.0, -1.0);
  Eigen::VectorXcd gx = (mi * kt1_.array().cast<std::complex<double>>() *
                         inv_kt_sq_.array().cast<std::complex<double>>() * spec.array())
                            .matrix();
  Eigen::VectorXcd gy = (mi * kt2_.array().cast<std::complex<double>>() *
                         inv_kt_sq_.array().cast<std::complex<double>>() * spec.array())
                            .matrix();
  return {ImageGrid(p0_, real_checked(fft_.inverse(gx), "grad_pinv_transpose")),
          ImageGrid(p0_, real_checked(fft_.inverse(gy), "grad_pinv_transpose"))};
}

ImageGrid blur_apply(const ImageGrid& img, const BlurSpec& spec) {
  spec.validate();
  if (img.p0 != spec.p0) throw std::invalid_argument("blur_apply: grid size mismatch");
  return TvOperators(img.p0).blur(img, spec.omega);
}

std::pair<ImageGrid, ImageGrid> grad_apply(const ImageGrid& img) {
  return TvOperators(img.p0).grad(img);
}

ImageGrid grad_pinv_apply(const ImageGrid& dx, const ImageGrid& dy, double mean) {
  if (dx.p0 != dy.p0) throw std::invalid_argument("grad_pinv_apply: grid size mismatch");
  return TvOperators(dx.p0).grad_pinv(dx, dy, mean);
}

VectorXd cov_diag_trick(const MatrixXd& K, const MatrixXd& C0Xt) {
  if (K.rows() != C0Xt.rows() || K.cols() != C0Xt.cols())
    throw std::invalid_argument("cov_diag_trick: shape mismatch");
  return (K.array() * C0Xt.array()).rowwise().sum();
}

TvDesign::TvDesign(BlurSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  ops_ = std::make_shared<TvOperators>(spec_.p0);
}

ImageGrid TvDesign::image_from_coords(const VectorXd& beta) const {
  const Eigen::Index ptil = Eigen::Index(spec_.p0) * spec_.p0;
  if (beta.size() != 2 * ptil + 1) throw std::invalid_argument("TvDesign: bad coordinate size");
  ImageGrid dx(spec_.p0, beta.segment(0, ptil));
  ImageGrid dy(spec_.p0, beta.segment(ptil, ptil));
  return ops_->grad_pinv(dx, dy, beta(2 * ptil));
}

VectorXd TvDesign::coords_from_image(const ImageGrid& img) const {
  const Eigen::Index ptil = img.pixels();
  auto [dx, dy] = ops_->grad(img);
  VectorXd beta(2 * ptil + 1);
  beta.segment(0, ptil) = dx.values;
  beta.segment(ptil, ptil) = dy.values;
  beta(2 * ptil) = img.values.mean();
  return beta;
}

VectorXd TvDesign::apply(const VectorXd& beta) const {
  const ImageGrid z = ops_->blur(image_from_coords(beta), spec_.omega);
  if (spec_.observed.empty()) return z.values;
  VectorXd out(n());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = z.values(spec_.observed[i]);
  return out;
}

VectorXd TvDesign::apply_transpose(const VectorXd& w) const {
  if (w.size() != n()) throw std::invalid_argument("TvDesign: bad observation size");
  const Eigen::Index ptil = Eigen::Index(spec_.p0) * spec_.p0;
  ImageGrid wgrid = ImageGrid::zero(spec_.p0);
  if (spec_.observed.empty())
    wgrid.values = w;
  else
    for (Eigen::Index i = 0; i < w.size(); ++i) wgrid.values(spec_.observed[i]) = w(i);
  const ImageGrid u = ops_->blur(wgrid, spec_.omega);  // blur is symmetric
  auto [gx, gy] = ops_->grad_pinv_transpose(u);
  VectorXd out(2 * ptil + 1);
  out.segment(0, ptil) = gx.values;
  out.segment(ptil, ptil) = gy.values;
  out(2 * ptil) = u.values.sum();
  return out;
}

template <typename Scalar>
void TvDesign::rows_into(const std::vector<Eigen::Index>& obs_positions,
                         Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& out) const {
  const Eigen::Index ptil = Eigen::Index(spec_.p0) * spec_.p0;
  out.resize(Eigen::Index(obs_positions.size()), 2 * ptil + 1);
  const VectorXd blur_factors = (-spec_.omega * ops_->k_sq().array()).exp();
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(ptil);
  const std::complex<double> mi(0.0, -1.0);
  for (std::size_t r = 0; r < obs_positions.size(); ++r) {
    const Eigen::Index pos = obs_positions[r];
    if (pos < 0 || pos >= n()) throw std::invalid_argument("TvDesign: row position out of range");
    const Eigen::Index pixel = spec_.observed.empty() ? pos : spec_.observed[pos];
    delta(pixel) = 1.0;
    Eigen::VectorXcd what = ops_->fft().forward_real(delta);
    delta(pixel) = 0.0;
    what.array() *= blur_factors.array().cast<std::complex<double>>();
    const Eigen::VectorXcd g1 = ops_->fft().inverse(
        (mi * ops_->kt1().array().cast<std::complex<double>>() *
         ops_->inv_kt_sq().array().cast<std::complex<double>>() * what.array())
            .matrix());
    const Eigen::VectorXcd g2 = ops_->fft().inverse(
        (mi * ops_->kt2().array().cast<std::complex<double>>() *
         ops_->inv_kt_sq().array().cast<std::complex<double>>() * what.array())
            .matrix());
    out.row(Eigen::Index(r)).segment(0, ptil) = g1.real().cast<Scalar>();
    out.row(Eigen::Index(r)).segment(ptil, ptil) = g2.real().cast<Scalar>();
    out(Eigen::Index(r), 2 * ptil) = Scalar(1);
  }
}

template void TvDesign::rows_into<double>(const std::vector<Eigen::Index>&,
                                          Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>&) const;
template void TvDesign::rows_into<float>(const std::vector<Eigen::Index>&,
                                         Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>&) const;

MatrixXd TvDesign::rows(const std::vector<Eigen::Index>& obs_positions) const {
  MatrixXd out;
  rows_into(obs_positions, out);
  return out;
}

VectorXd TvDesign::observe(const ImageGrid& truth, std::uint64_t seed) const {
  const ImageGrid z = ops_->blur(truth, spec_.omega);
  NormalSampler normal(seed);
  VectorXd y(n());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Eigen::Index pixel = spec_.observed.empty() ? i : spec_.observed[i];
    y(i) = z.values(pixel) + spec_.gamma * normal();
  }
  return y;
}

TruncatedTvSolver::TruncatedTvSolver(const BlurSpec& spec, double rho) : spec_(spec) {
  spec_.validate();
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("fourier_truncate: rho must be in (0,1]");
  if (!(rho * spec_.gamma < 1.0))
    throw std::invalid_argument("fourier_truncate: rho*gamma must be < 1");
  ops_ = std::make_shared<TvOperators>(spec_.p0);
  std::vector<Eigen::Index> modes;
  const double thresh = rho * spec_.gamma;
  for (Eigen::Index f = 0; f < ops_->k_sq().size(); ++f)
    if (std::exp(-spec_.omega * ops_->k_sq()(f)) > thresh) modes.push_back(f);
  init_from_modes(std::move(modes));
}

TruncatedTvSolver::TruncatedTvSolver(const BlurSpec& spec, Eigen::Index n_tilde_cap)
    : spec_(spec) {
  spec_.validate();
  // a count cap may cut a |k|^2 shell, leaving a few modes without their
  // conjugate partners; real parts then carry a noise-level residue
  real_tol_ = 1e-3;
  ops_ = std::make_shared<TvOperators>(spec_.p0);
  const Eigen::Index want = n_tilde_cap - 1;  // lattice modes besides the constant channel
  if (want < 1 || want > ops_->k_sq().size())
    throw std::invalid_argument("fourier_truncate: bad mode count");
  std::vector<Eigen::Index> order(ops_->k_sq().size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    return ops_->k_sq()(x) < ops_->k_sq()(y);
  });
  order.resize(want);
  std::sort(order.begin(), order.end());
  init_from_modes(std::move(order));
}

void TruncatedTvSolver::init_from_modes(std::vector<Eigen::Index> modes) {
  modes_ = std::move(modes);
  const Eigen::Index nm = n_modes();
  if (nm > kDenseCap)
    throw CapacityError("fourier_truncate: " + std::to_string(nm) +
                        " modes exceed the dense solver capacity; use the online path");
  a_.resize(nm);
  b_.resize(nm);
  blur_I_.resize(nm);
  ksq_I_.resize(nm);
  const int p0 = spec_.p0;
  for (Eigen::Index r = 0; r < nm; ++r) {
    const Eigen::Index f = modes_[r];
    a_(r) = std::complex<double>(0.0, ops_->kt1()(f) * ops_->inv_kt_sq()(f));
    b_(r) = std::complex<double>(0.0, ops_->kt2()(f) * ops_->inv_kt_sq()(f));
    ksq_I_(r) = ops_->k_sq()(f);
    blur_I_(r) = std::exp(-spec_.omega * ksq_I_(r));
    if (f == 0) k0_pos_ = r;
  }
  if (k0_pos_ < 0)
    throw std::invalid_argument("fourier_truncate: the constant mode fell outside the kept set");
  qflat_.resize(nm * nm);
  for (Eigen::Index r = 0; r < nm; ++r) {
    const int i_r = int(modes_[r] / p0), j_r = int(modes_[r] % p0);
    for (Eigen::Index c = 0; c < nm; ++c) {
      const int i_c = int(modes_[c] / p0), j_c = int(modes_[c] % p0);
      const int di = ((i_r - i_c) % p0 + p0) % p0;
      const int dj = ((j_r - j_c) % p0 + p0) % p0;
      qflat_(r * nm + c) = di * p0 + dj;
    }
  }
}

void TruncatedTvSolver::set_observations(const VectorXd& y_pixels) {
  if (!spec_.observed.empty())
    throw std::invalid_argument("fourier_truncate: requires full-grid observations");
  if (y_pixels.size() != Eigen::Index(spec_.p0) * spec_.p0)
    throw std::invalid_argument("fourier_truncate: bad observation size");
  const Eigen::VectorXcd yhat = ops_->fft().forward_real(y_pixels);
  w_.resize(n_modes());
  for (Eigen::Index r = 0; r < n_modes(); ++r)
    w_(r) = yhat(modes_[r]) / blur_I_(r);  // e^{+omega |k|^2} Yhat
}

TruncatedTvSolver::Iterate TruncatedTvSolver::solve(const VectorXd& theta,
                                                    bool want_diag) const {
  if (w_.size() == 0) throw std::logic_error("fourier_truncate: set_observations first");
  const Eigen::Index ptil = Eigen::Index(spec_.p0) * spec_.p0;
  if (theta.size() != 2 * ptil + 1) throw std::invalid_argument("fourier_truncate: bad theta size");
  const Eigen::Index nm = n_modes();
  const double dptil = double(ptil);

  const Eigen::VectorXcd T1 = ops_->fft().forward_real(theta.segment(0, ptil));
  const Eigen::VectorXcd T2 = ops_->fft().forward_real(theta.segment(ptil, ptil));
  const double theta0 = theta(2 * ptil);

  Eigen::MatrixXcd M(nm, nm);
  for (Eigen::Index r = 0; r < nm; ++r) {
    const std::complex<double> ar = a_(r), br = b_(r);
    for (Eigen::Index c = 0; c <= r; ++c) {
      const Eigen::Index q = qflat_(r * nm + c);
      M(r, c) = ar * std::conj(a_(c)) * T1(q) + br * std::conj(b_(c)) * T2(q);
    }
  }
  M(k0_pos_, k0_pos_) += dptil * dptil * theta0;
  for (Eigen::Index r = 0; r < nm; ++r)
    M(r, r) += spec_.gamma * spec_.gamma * dptil / (blur_I_(r) * blur_I_(r));
  M.triangularView<Eigen::StrictlyUpper>() = M.adjoint();

  Eigen::LLT<Eigen::MatrixXcd> llt(M);
  if (llt.info() != Eigen::Success)
    throw IllConditionedError("fourier_truncate: spectral system not positive definite", 0.0);
  const Eigen::VectorXcd u = llt.solve(w_);

  Iterate out;
  out.m.resize(2 * ptil + 1);
  {
    Eigen::VectorXcd g1 = Eigen::VectorXcd::Zero(ptil), g2 = Eigen::VectorXcd::Zero(ptil);
    for (Eigen::Index r = 0; r < nm; ++r) {
      g1(modes_[r]) = std::conj(a_(r)) * u(r);
      g2(modes_[r]) = std::conj(b_(r)) * u(r);
    }
    const VectorXd f1 =
        dptil * real_checked(ops_->fft().inverse(g1), "truncated mean", real_tol_);
    const VectorXd f2 =
        dptil * real_checked(ops_->fft().inverse(g2), "truncated mean", real_tol_);
    out.m.segment(0, ptil) = theta.segment(0, ptil).cwiseProduct(f1);
    out.m.segment(ptil, ptil) = theta.segment(ptil, ptil).cwiseProduct(f2);
    out.m(2 * ptil) = theta0 * dptil * u(k0_pos_).real();
  }
  if (want_diag) {
    const Eigen::MatrixXcd Minv = llt.solve(Eigen::MatrixXcd::Identity(nm, nm));
    Eigen::VectorXcd Tq1 = Eigen::VectorXcd::Zero(ptil), Tq2 = Eigen::VectorXcd::Zero(ptil);
    for (Eigen::Index r = 0; r < nm; ++r) {
      const std::complex<double> arc = std::conj(a_(r)), brc = std::conj(b_(r));
      for (Eigen::Index c = 0; c < nm; ++c) {
        const Eigen::Index q = qflat_(r * nm + c);
        const std::complex<double> mrc = Minv(r, c);
        Tq1(q) += arc * mrc * a_(c);
        Tq2(q) += brc * mrc * b_(c);
      }
    }
    const VectorXd d1 =
        dptil * real_checked(ops_->fft().inverse(Tq1), "truncated diag", real_tol_);
    const VectorXd d2 =
        dptil * real_checked(ops_->fft().inverse(Tq2), "truncated diag", real_tol_);
    const double d0 = dptil * dptil * Minv(k0_pos_, k0_pos_).real();
    out.C_diag.resize(2 * ptil + 1);
    out.C_diag.segment(0, ptil) =
        (theta.segment(0, ptil).array() -
         theta.segment(0, ptil).array().square() * d1.array())
            .cwiseMax(0.0);
    out.C_diag.segment(ptil, ptil) =
        (theta.segment(ptil, ptil).array() -
         theta.segment(ptil, ptil).array().square() * d2.array())
            .cwiseMax(0.0);
    out.C_diag(2 * ptil) = std::max(theta0 - theta0 * theta0 * d0, 0.0);
  }
  return out;
}

Eigen::VectorXcd TruncatedTvSolver::xr_apply(const VectorXd& beta) const {
  const Eigen::Index ptil = Eigen::Index(spec_.p0) * spec_.p0;
  if (beta.size() != 2 * ptil + 1) throw std::invalid_argument("xr_apply: bad size");
  const Eigen::VectorXcd dx = ops_->fft().forward_real(beta.segment(0, ptil));
  const Eigen::VectorXcd dy = ops_->fft().forward_real(beta.segment(ptil, ptil));
  Eigen::VectorXcd out(n_modes());
  for (Eigen::Index r = 0; r < n_modes(); ++r)
    out(r) = a_(r) * dx(modes_[r]) + b_(r) * dy(modes_[r]);
  out(k0_pos_) += double(ptil) * beta(2 * ptil);
  return out;
}

VectorXd TruncatedTvSolver::xl_apply(const Eigen::VectorXcd& u) const {
  if (u.size() != n_modes()) throw std::invalid_argument("xl_apply: bad size");
  const Eigen::Index ptil = Eigen::Index(spec_.p0) * spec_.p0;
  Eigen::VectorXcd g = Eigen::VectorXcd::Zero(ptil);
  for (Eigen::Index r = 0; r < n_modes(); ++r) g(modes_[r]) = blur_I_(r) * u(r);
  return ops_->fft().inverse(g).real();
}

VectorXd TruncatedTvSolver::truncated_forward(const VectorXd& beta) const {
  return xl_apply(xr_apply(beta));
}

double TruncatedTvSolver::truncation_error(const ImageGrid& truth) const {
  const Eigen::VectorXcd z =
      (ops_->fft().forward_real(truth.values).array() *
       (-spec_.omega * ops_->k_sq().array()).exp().cast<std::complex<double>>())
          .matrix();
  Eigen::VectorXcd kept = Eigen::VectorXcd::Zero(z.size());
  for (Eigen::Index r = 0; r < n_modes(); ++r) kept(modes_[r]) = z(modes_[r]);
  return (z - kept).norm() / z.norm();
}

ImageGrid shepp_logan_phantom(int p0) {
  struct Ellipse {
    double A, a, b, x0, y0, phi_deg;
  };
  static const Ellipse ellipses[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };
  ImageGrid img = ImageGrid::zero(p0);
  for (int i = 0; i < p0; ++i) {
    const double y = -1.0 + (2.0 * i + 1.0) / p0;
    for (int j = 0; j < p0; ++j) {
      const double x = -1.0 + (2.0 * j + 1.0) / p0;
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double th = e.phi_deg * std::numbers::pi / 180.0;
        const double xr = (x - e.x0) * std::cos(th) + (y - e.y0) * std::sin(th);
        const double yr = -(x - e.x0) * std::sin(th) + (y - e.y0) * std::cos(th);
        if ((xr / e.a) * (xr / e.a) + (yr / e.b) * (yr / e.b) <= 1.0) v += e.A;
      }
      img.at(i, j) = v;
    }
  }
  return img;
}

ImageGrid toy_blocks(int p0) {
  ImageGrid img = ImageGrid::zero(p0);
  for (int i = 0; i < p0; ++i) {
    for (int j = 0; j < p0; ++j) {
      double v = 0.0;
      if (i >= p0 / 5 && i < p0 / 2 && j >= p0 / 5 && j < 11 * p0 / 20) v = 1.0;
      if (std::hypot(i - 0.70 * p0, j - 0.66 * p0) < p0 / 6.0) v = 0.6;
      img.at(i, j) = v;
    }
  }
  return img;
}

}  // namespace sparsevb
