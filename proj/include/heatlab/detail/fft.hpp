#pragma once

#include <fftw3.h>

#include <complex>
#include <cstdint>
#include <mutex>
#include <vector>

#include "heatlab/errors.hpp"

namespace heatlab::detail {

inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex FFT over a row-major lattice (all axes). Plans are created
/// once; executions use the new-array interface and are safe to run
/// concurrently on distinct buffers. The inverse transform clobbers its input
/// and is unnormalized (scaled by the total point count).
class rfft {
 public:
  explicit rfft(std::vector<int> dims) : dims_(std::move(dims)) {
    require(!dims_.empty(), errc::internal_invariant, "fft needs at least one axis");
    n_real_ = 1;
    for (int d : dims_) n_real_ *= d;
    n_complex_ = n_real_ / dims_.back() * (dims_.back() / 2 + 1);

    std::vector<double> rbuf(static_cast<std::size_t>(n_real_));
    std::vector<std::complex<double>> cbuf(static_cast<std::size_t>(n_complex_));
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fwd_ = fftw_plan_dft_r2c(static_cast<int>(dims_.size()), dims_.data(), rbuf.data(),
                             reinterpret_cast<fftw_complex*>(cbuf.data()),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_dft_c2r(static_cast<int>(dims_.size()), dims_.data(),
                             reinterpret_cast<fftw_complex*>(cbuf.data()), rbuf.data(),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    require(fwd_ && bwd_, errc::internal_invariant, "fftw plan creation failed");
  }

  rfft(const rfft&) = delete;
  rfft& operator=(const rfft&) = delete;

  ~rfft() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

  std::int64_t real_size() const { return n_real_; }
  std::int64_t complex_size() const { return n_complex_; }
  const std::vector<int>& dims() const { return dims_; }

  void forward(const double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(fwd_, const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
  }

  /// out = unnormalized inverse; `in` is destroyed.
  void inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(bwd_, reinterpret_cast<fftw_complex*>(in), out);
  }

 private:
  std::vector<int> dims_;
  std::int64_t n_real_ = 0, n_complex_ = 0;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

}  // namespace heatlab::detail
