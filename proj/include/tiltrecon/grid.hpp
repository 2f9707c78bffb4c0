#pragma once

#include <cmath>
#include <complex>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <vector>

#include "tiltrecon/errors.hpp"

namespace tiltrecon {

using cplx = std::complex<double>;

namespace detail {

// FFTW's SIMD paths want 32-byte-aligned buffers; plans are created once per
// size on aligned scratch and re-executed on caller arrays, so every field
// buffer must share that alignment.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 32;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    std::size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
    void* p = std::aligned_alloc(alignment, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

}  // namespace detail

using cvec = std::vector<cplx, detail::AlignedAllocator<cplx>>;
using rvec = std::vector<double, detail::AlignedAllocator<double>>;

/// Dense row-major real grid. Rows run along y, columns along x.
struct RealGrid {
  int rows = 0;
  int cols = 0;
  rvec v;

  RealGrid() = default;
  RealGrid(int r, int c, double fill = 0.0) : rows(r), cols(c), v(std::size_t(r) * c, fill) {}

  double& at(int r, int c) { return v[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return v[std::size_t(r) * cols + c]; }
  std::size_t size() const { return v.size(); }

  double sum() const {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  double max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    return m;
  }
  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// 2D complex field sampled on a uniform grid with physical pitch in µm.
struct ComplexField {
  int rows = 0;
  int cols = 0;
  double pitch_x_um = 1.0;
  double pitch_y_um = 1.0;
  cvec v;

  ComplexField() = default;
  ComplexField(int r, int c, double px, double py, cplx fill = cplx(0, 0))
      : rows(r), cols(c), pitch_x_um(px), pitch_y_um(py), v(std::size_t(r) * c, fill) {}

  cplx& at(int r, int c) { return v[std::size_t(r) * cols + c]; }
  cplx at(int r, int c) const { return v[std::size_t(r) * cols + c]; }
  std::size_t size() const { return v.size(); }

  double extent_x_um() const { return cols * pitch_x_um; }
  double extent_y_um() const { return rows * pitch_y_um; }

  bool finite() const {
    for (const cplx& z : v)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
  }

  void validate(const char* who = "ComplexField") const {
    if (rows < 2 || cols < 2) throw DomainError(std::string(who) + ": grid must be at least 2x2");
    if (pitch_x_um <= 0 || pitch_y_um <= 0) throw DomainError(std::string(who) + ": pitch must be positive");
    if (v.size() != std::size_t(rows) * cols) throw DomainError(std::string(who) + ": storage/dims mismatch");
    if (!finite()) throw DomainError(std::string(who) + ": non-finite samples");
  }

  RealGrid amplitude() const {
    RealGrid g(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) g.v[i] = std::abs(v[i]);
    return g;
  }
  RealGrid intensity() const {
    RealGrid g(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) g.v[i] = std::norm(v[i]);
    return g;
  }
  RealGrid phase() const {
    RealGrid g(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) g.v[i] = std::arg(v[i]);
    return g;
  }
};

/// Lateral translation of the specimen, in µm.
struct ShiftVector {
  double dx_um = 0.0;
  double dy_um = 0.0;

  ShiftVector operator-() const { return {-dx_um, -dy_um}; }
  ShiftVector operator+(const ShiftVector& o) const { return {dx_um + o.dx_um, dy_um + o.dy_um}; }
  ShiftVector operator-(const ShiftVector& o) const { return {dx_um - o.dx_um, dy_um - o.dy_um}; }
  double norm_um() const { return std::hypot(dx_um, dy_um); }
};

/// Acquisition geometry: illumination, tilt, sensor, and the up-sampling
/// factor tying the raw pixel pitch to the reconstruction grid.
struct Geometry {
  double wavelength_um = 0.532;
  double tilt_deg = 5.0;
  double axis_distance_um = 800.0;  // object-to-sensor distance at the tilt axis
  double sensor_pitch_um = 1.67;
  int upsample_factor = 3;
  int sensor_rows = 512;
  int sensor_cols = 512;

  double k0() const { return 2.0 * std::numbers::pi / wavelength_um; }
  double hires_pitch_um() const { return sensor_pitch_um / upsample_factor; }
  double tilt_rad() const { return tilt_deg * std::numbers::pi / 180.0; }

  void validate() const {
    if (wavelength_um <= 0) throw DomainError("Geometry: wavelength_um must be positive");
    if (sensor_pitch_um <= 0) throw DomainError("Geometry: sensor_pitch_um must be positive");
    if (upsample_factor < 1) throw DomainError("Geometry: upsample_factor must be >= 1");
    if (!(std::abs(tilt_deg) < 45.0)) throw DomainError("Geometry: |tilt_deg| must be < 45");
    if (sensor_rows < 2 || sensor_cols < 2) throw DomainError("Geometry: sensor dims must be >= 2");
  }
};

}  // namespace tiltrecon
