#include "sparsevb/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <stdexcept>

namespace sparsevb {

Fft2D::Fft2D(int p0) : p0_(p0) {
  if (p0 < 2) throw std::invalid_argument("Fft2D: p0 must be >= 2");
  buf_ = fftw_malloc(sizeof(fftw_complex) * std::size_t(p0) * std::size_t(p0));
  if (!buf_) throw std::bad_alloc();
  auto* b = static_cast<fftw_complex*>(buf_);
  plan_fwd_ = fftw_plan_dft_2d(p0, p0, b, b, FFTW_FORWARD, FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_2d(p0, p0, b, b, FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!plan_fwd_ || !plan_inv_) throw std::runtime_error("Fft2D: planning failed");
}

Fft2D::~Fft2D() {
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  fftw_free(buf_);
}

void Fft2D::run(const std::complex<double>* in, std::complex<double>* out, bool fwd) const {
  auto* b = static_cast<fftw_complex*>(buf_);
  std::memcpy(b, in, sizeof(fftw_complex) * std::size_t(size()));
  fftw_execute(static_cast<fftw_plan>(fwd ? plan_fwd_ : plan_inv_));
  std::memcpy(out, b, sizeof(fftw_complex) * std::size_t(size()));
}

Eigen::VectorXcd Fft2D::forward(const Eigen::VectorXcd& in) const {
  if (in.size() != size()) throw std::invalid_argument("Fft2D: size mismatch");
  Eigen::VectorXcd out(size());
  run(in.data(), out.data(), true);
  return out;
}

Eigen::VectorXcd Fft2D::inverse(const Eigen::VectorXcd& in) const {
  if (in.size() != size()) throw std::invalid_argument("Fft2D: size mismatch");
  Eigen::VectorXcd out(size());
  run(in.data(), out.data(), false);
  out /= double(size());
  return out;
}

Eigen::VectorXcd Fft2D::forward_real(const Eigen::VectorXd& in) const {
  return forward(in.cast<std::complex<double>>());
}

}  // namespace sparsevb
