#pragma once

#include "tiltrecon/fft.hpp"
#include "tiltrecon/grid.hpp"

namespace tiltrecon {

/// Discrete field energy: sum |v|^2 * pitch_x * pitch_y.
inline double field_energy(const ComplexField& f) {
  double s = 0;
  for (const cplx& z : f.v) s += std::norm(z);
  return s * f.pitch_x_um * f.pitch_y_um;
}

/// Translate a field by s via a Fourier-domain phase ramp; the result samples
/// f(x + s.dx, y + s.dy) under periodic boundary semantics. An integer-pitch
/// shift equals a circular roll of the grid.
inline ComplexField fourier_shift(const ComplexField& f, const ShiftVector& s) {
  f.validate("fourier_shift");
  if (std::abs(s.dx_um) >= 0.5 * f.extent_x_um() || std::abs(s.dy_um) >= 0.5 * f.extent_y_um())
    throw DomainError("fourier_shift: shift exceeds half the field extent");
  if (s.dx_um == 0.0 && s.dy_um == 0.0) return f;

  cvec spec = fft::forward(f.rows, f.cols, f.v);
  // exp(i k·s) per axis, precomputed as two 1D ramps
  cvec ramp_x(f.cols), ramp_y(f.rows);
  for (int c = 0; c < f.cols; ++c)
    ramp_x[c] = std::polar(1.0, fft::kvalue(c, f.cols, f.pitch_x_um) * s.dx_um);
  for (int r = 0; r < f.rows; ++r)
    ramp_y[r] = std::polar(1.0, fft::kvalue(r, f.rows, f.pitch_y_um) * s.dy_um);
  for (int r = 0; r < f.rows; ++r) {
    const cplx py = ramp_y[r];
    cplx* row = spec.data() + std::size_t(r) * f.cols;
    for (int c = 0; c < f.cols; ++c) row[c] *= py * ramp_x[c];
  }
  ComplexField out = f;
  fft::dft2(f.rows, f.cols, spec.data(), out.v.data(), true);
  return out;
}

/// Replicate every input pixel into an M x M block.
inline RealGrid upsample_nearest(const RealGrid& img, int M) {
  if (M < 1) throw DomainError("upsample_nearest: M must be >= 1");
  if (M == 1) return img;
  RealGrid out(img.rows * M, img.cols * M);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      const double x = img.at(r, c);
      for (int br = 0; br < M; ++br) {
        double* dst = out.v.data() + std::size_t(r * M + br) * out.cols + c * M;
        for (int bc = 0; bc < M; ++bc) dst[bc] = x;
      }
    }
  return out;
}

/// Circular roll: out(r, c) = in(r - dr mod rows, c - dc mod cols),
/// i.e. content moves by (+dr, +dc).
template <class GridT>
inline GridT roll(const GridT& g, int dr, int dc) {
  GridT out = g;
  auto mod = [](int a, int n) { return ((a % n) + n) % n; };
  for (int r = 0; r < g.rows; ++r) {
    int sr = mod(r - dr, g.rows);
    for (int c = 0; c < g.cols; ++c) out.v[std::size_t(r) * g.cols + c] = g.v[std::size_t(sr) * g.cols + mod(c - dc, g.cols)];
  }
  return out;
}

/// Copy a rows x cols window starting at (r0, c0).
inline ComplexField crop(const ComplexField& f, int r0, int c0, int rows, int cols) {
  if (r0 < 0 || c0 < 0 || r0 + rows > f.rows || c0 + cols > f.cols)
    throw DomainError("crop: window outside grid");
  ComplexField out(rows, cols, f.pitch_x_um, f.pitch_y_um);
  for (int r = 0; r < rows; ++r) {
    const cplx* src = f.v.data() + std::size_t(r0 + r) * f.cols + c0;
    cplx* dst = out.v.data() + std::size_t(r) * cols;
    std::copy(src, src + cols, dst);
  }
  return out;
}

inline RealGrid crop(const RealGrid& g, int r0, int c0, int rows, int cols) {
  if (r0 < 0 || c0 < 0 || r0 + rows > g.rows || c0 + cols > g.cols)
    throw DomainError("crop: window outside grid");
  RealGrid out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const double* src = g.v.data() + std::size_t(r0 + r) * g.cols + c0;
    std::copy(src, src + cols, out.v.data() + std::size_t(r) * cols);
  }
  return out;
}

/// Write patch into f at (r0, c0).
inline void paste(ComplexField& f, const ComplexField& patch, int r0, int c0) {
  if (r0 < 0 || c0 < 0 || r0 + patch.rows > f.rows || c0 + patch.cols > f.cols)
    throw DomainError("paste: window outside grid");
  for (int r = 0; r < patch.rows; ++r) {
    const cplx* src = patch.v.data() + std::size_t(r) * patch.cols;
    std::copy(src, src + patch.cols, f.v.data() + std::size_t(r0 + r) * f.cols + c0);
  }
}

}  // namespace tiltrecon
