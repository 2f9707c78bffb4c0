#pragma once

#include <fftw3.h>

#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "tiltrecon/grid.hpp"

namespace tiltrecon::fft {

// Forward transforms are unnormalized; inverse transforms carry the 1/N
// factor, so forward-then-inverse is the identity.

namespace detail {

inline int worker_threads() {
  static const int n = []() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 1 ? int(std::min(hc, 8u)) : 1;
  }();
  return n;
}

struct PlanCache {
  std::mutex mu;
  // key: rows, cols, sign, nthreads
  std::map<std::tuple<int, int, int, int>, fftw_plan> plans;
  bool threads_ready = false;

  fftw_plan get(int rows, int cols, int sign) {
    const std::size_t n = std::size_t(rows) * cols;
    const int nt = (n >= std::size_t(1) << 18) ? worker_threads() : 1;
    std::lock_guard<std::mutex> lock(mu);
    if (!threads_ready) {
      fftw_init_threads();
      threads_ready = true;
    }
    auto key = std::make_tuple(rows, cols, sign, nt);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    fftw_plan_with_nthreads(nt);
    fftw_complex* scratch_in = fftw_alloc_complex(n);
    fftw_complex* scratch_out = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft_2d(rows, cols, scratch_in, scratch_out, sign, FFTW_ESTIMATE);
    fftw_free(scratch_in);
    fftw_free(scratch_out);
    plans.emplace(key, p);
    return p;
  }
};

inline PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace detail

/// Out-of-place 2D c2c transform. in and out must not alias and must be
/// 32-byte aligned (cvec storage is).
inline void dft2(int rows, int cols, const cplx* in, cplx* out, bool inverse) {
  fftw_plan p = detail::cache().get(rows, cols, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
  if (inverse) {
    const double s = 1.0 / (double(rows) * double(cols));
    const std::size_t n = std::size_t(rows) * cols;
    for (std::size_t i = 0; i < n; ++i) out[i] *= s;
  }
}

inline cvec forward(int rows, int cols, const cvec& in) {
  cvec out(in.size());
  dft2(rows, cols, in.data(), out.data(), false);
  return out;
}

inline cvec inverse(int rows, int cols, const cvec& in) {
  cvec out(in.size());
  dft2(rows, cols, in.data(), out.data(), true);
  return out;
}

/// Signed (DC-centered) frequency index of sample i on an n-point grid:
/// 0, 1, ..., n/2-1, -n/2, ..., -1.
inline int freq_index(int i, int n) { return i < (n + 1) / 2 ? i : i - n; }

/// Angular spatial frequency (rad/µm) of sample i on an n-point grid.
inline double kvalue(int i, int n, double pitch_um) {
  return 2.0 * std::numbers::pi * freq_index(i, n) / (n * pitch_um);
}

/// Smallest size >= n with only factors 2, 3, 5, 7 (fast FFT sizes).
inline int fast_size(int n) {
  if (n <= 1) return 1;
  for (int m = n;; ++m) {
    int r = m;
    for (int f : {2, 3, 5, 7})
      while (r % f == 0) r /= f;
    if (r == 1) return m;
  }
}

}  // namespace tiltrecon::fft
