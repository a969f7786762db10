#ifndef SPARSEVB_FFT_HPP
#define SPARSEVB_FFT_HPP

#include <Eigen/Dense>
#include <complex>

namespace sparsevb {

// 2D complex FFT on a p0 x p0 row-major grid, backed by FFTW double
// precision. Convention: unnormalized forward, inverse divides by p0^2.
// Plans use FFTW_ESTIMATE so results are reproducible run to run. Not
// thread-safe; use one instance per thread.
class Fft2D {
 public:
  explicit Fft2D(int p0);
  ~Fft2D();
  Fft2D(const Fft2D&) = delete;
  Fft2D& operator=(const Fft2D&) = delete;

  int p0() const { return p0_; }
  Eigen::Index size() const { return Eigen::Index(p0_) * p0_; }

  Eigen::VectorXcd forward(const Eigen::VectorXcd& in) const;
  Eigen::VectorXcd inverse(const Eigen::VectorXcd& in) const;
  Eigen::VectorXcd forward_real(const Eigen::VectorXd& in) const;

 private:
  void run(const std::complex<double>* in, std::complex<double>* out, bool fwd) const;

  int p0_;
  void* buf_;       // fftw_complex scratch
  void* plan_fwd_;  // fftw_plan
  void* plan_inv_;
};

}  // namespace sparsevb

#endif
