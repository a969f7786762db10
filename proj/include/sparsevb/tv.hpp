#ifndef SPARSEVB_TV_HPP
#define SPARSEVB_TV_HPP

#include <memory>
#include <vector>

#include "sparsevb/fft.hpp"
#include "sparsevb/types.hpp"

namespace sparsevb {

// Square image, row-major vectorization, even side length so the
// wavenumber grid is {-p0/2, ..., p0/2-1}^2.
struct ImageGrid {
  int p0 = 0;
  VectorXd values;  // p0*p0

  ImageGrid() = default;
  ImageGrid(int p0_, VectorXd v);
  static ImageGrid zero(int p0);
  double& at(int i, int j) { return values(Eigen::Index(i) * p0 + j); }
  double at(int i, int j) const { return values(Eigen::Index(i) * p0 + j); }
  Eigen::Index pixels() const { return values.size(); }
};

struct BlurSpec {
  int p0 = 0;
  double omega = 0.0;  // spectral factor exp(-omega |k|^2)
  double gamma = 0.0;  // observation noise std
  std::vector<Eigen::Index> observed;  // flat pixel indices; empty = full grid

  Eigen::Index n() const {
    return observed.empty() ? Eigen::Index(p0) * p0 : Eigen::Index(observed.size());
  }
  void validate() const;
};

// Spectral operators on one grid size: Gaussian blur, derivatives and the
// gradient pseudo-inverse. Derivative multipliers at the unpaired Nyquist
// line k = -p0/2 are zero so the operators stay real-to-real; the affected
// modes are treated like the constant mode (outside the gradient range).
class TvOperators {
 public:
  explicit TvOperators(int p0);

  int p0() const { return p0_; }
  ImageGrid blur(const ImageGrid& img, double omega) const;
  std::pair<ImageGrid, ImageGrid> grad(const ImageGrid& img) const;
  ImageGrid grad_pinv(const ImageGrid& dx, const ImageGrid& dy, double mean) const;
  std::pair<ImageGrid, ImageGrid> grad_pinv_transpose(const ImageGrid& u) const;

  const VectorXd& k1() const { return k1_; }       // true wavenumbers
  const VectorXd& k2() const { return k2_; }
  const VectorXd& k_sq() const { return k_sq_; }   // |k|^2
  const VectorXd& kt1() const { return kt1_; }     // Nyquist-zeroed
  const VectorXd& kt2() const { return kt2_; }
  const VectorXd& inv_kt_sq() const { return inv_kt_sq_; }  // 0 on the kernel modes
  const Fft2D& fft() const { return fft_; }

 private:
  int p0_;
  Fft2D fft_;
  VectorXd k1_, k2_, k_sq_, kt1_, kt2_, inv_kt_sq_;
};

// Free-function forms of the operator set.
ImageGrid blur_apply(const ImageGrid& img, const BlurSpec& spec);
std::pair<ImageGrid, ImageGrid> grad_apply(const ImageGrid& img);
ImageGrid grad_pinv_apply(const ImageGrid& dx, const ImageGrid& dy, double mean);

// diag(K * B^T) without forming the p x p product; K and B are p x n.
VectorXd cov_diag_trick(const MatrixXd& K, const MatrixXd& C0Xt);

// Forward model in gradient coordinates beta = (dx, dy, beta0) with
// p = 2 p0^2 + 1:  X beta = blur(pinv-reconstruction) at the observed
// pixels. Matrix-free apply/adjoint plus explicit row extraction for the
// online path.
class TvDesign {
 public:
  explicit TvDesign(BlurSpec spec);

  const BlurSpec& spec() const { return spec_; }
  const TvOperators& ops() const { return *ops_; }
  Eigen::Index n() const { return spec_.n(); }
  Eigen::Index p() const { return 2 * Eigen::Index(spec_.p0) * spec_.p0 + 1; }

  VectorXd apply(const VectorXd& beta) const;
  VectorXd apply_transpose(const VectorXd& w) const;

  VectorXd coords_from_image(const ImageGrid& img) const;   // (D img, mean)
  ImageGrid image_from_coords(const VectorXd& beta) const;  // D^+ part + beta0

  // Explicit rows of X for the listed observation positions (indices into
  // the observed set).
  MatrixXd rows(const std::vector<Eigen::Index>& obs_positions) const;
  template <typename Scalar>
  void rows_into(const std::vector<Eigen::Index>& obs_positions,
                 Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& out) const;

  // Noisy observations of an image under this spec, deterministic in seed.
  VectorXd observe(const ImageGrid& truth, std::uint64_t seed) const;

 private:
  BlurSpec spec_;
  std::shared_ptr<TvOperators> ops_;
};

// Appendix-style spectral truncation: keep modes with
// exp(-omega |k|^2) > rho gamma (or the leading count), factor the design
// as X ~ X_ell X_r, and solve the posterior through the n_tilde x n_tilde
// system. n_tilde counts the retained Fourier channels plus the constant
// coefficient channel; n_modes() is the lattice mode count alone.
class TruncatedTvSolver {
 public:
  TruncatedTvSolver(const BlurSpec& spec, double rho);
  TruncatedTvSolver(const BlurSpec& spec, Eigen::Index n_tilde_cap);

  Eigen::Index n_tilde() const { return n_modes() + 1; }
  Eigen::Index n_modes() const { return Eigen::Index(modes_.size()); }
  Eigen::Index p() const { return 2 * Eigen::Index(spec_.p0) * spec_.p0 + 1; }

  void set_observations(const VectorXd& y_pixels);

  struct Iterate {
    VectorXd m;
    VectorXd C_diag;
  };
  // One posterior solve under prior scales theta (p-vector). want_diag
  // controls whether diag(C) is produced (the EM path does not need it).
  Iterate solve(const VectorXd& theta, bool want_diag) const;

  // Truncated factor operators, for tests and diagnostics.
  Eigen::VectorXcd xr_apply(const VectorXd& beta) const;
  VectorXd xl_apply(const Eigen::VectorXcd& u) const;
  VectorXd truncated_forward(const VectorXd& beta) const;  // X_ell X_r beta

  // || (X - X_I) image || / || X image || over the full grid.
  double truncation_error(const ImageGrid& truth) const;

  static constexpr Eigen::Index kDenseCap = 6144;

 private:
  void init_from_modes(std::vector<Eigen::Index> modes);

  BlurSpec spec_;
  std::shared_ptr<TvOperators> ops_;
  std::vector<Eigen::Index> modes_;   // flat spectral indices, k = 0 included
  Eigen::Index k0_pos_ = -1;
  Eigen::VectorXcd a_, b_;            // i kt1/|kt|^2, i kt2/|kt|^2 on modes
  VectorXd blur_I_, ksq_I_;
  Eigen::VectorXi qflat_;             // n_modes^2 wrapped difference indices
  Eigen::VectorXcd w_;                // deconvolved spectral observations
  double real_tol_ = 1e-10;           // relaxed when a count cap splits a shell
};

// Test images.
ImageGrid shepp_logan_phantom(int p0);
ImageGrid toy_blocks(int p0);

}  // namespace sparsevb

#endif
