#pragma once

#include "tiltrecon/fft.hpp"
#include "tiltrecon/field_ops.hpp"
#include "tiltrecon/grid.hpp"

namespace tiltrecon {

/// Sensor tilt about the y-axis. Positive angle means the height above the
/// sensor increases with +x', so a specimen translated toward +x is measured
/// at a larger effective distance.
struct TiltSpec {
  double angle_deg = 0.0;

  double rad() const { return angle_deg * std::numbers::pi / 180.0; }
  void validate() const {
    if (!(std::abs(angle_deg) < 45.0)) throw DomainError("TiltSpec: |angle| must be < 45 deg");
  }
};

/// Free-space angular-spectrum propagation over distance_um (negative =
/// back-propagation). Each plane-wave component gains exp(i*d*kz) with
/// kz = sqrt(k0^2 - kx^2 - ky^2); the evanescent band is zeroed.
inline ComplexField angular_spectrum_propagate(const ComplexField& f, double distance_um,
                                               double wavelength_um) {
  f.validate("angular_spectrum_propagate");
  if (wavelength_um <= 0) throw DomainError("angular_spectrum_propagate: wavelength must be positive");
  if (distance_um == 0.0) return f;

  const double k0 = 2.0 * std::numbers::pi / wavelength_um;
  const double k0sq = k0 * k0;
  cvec spec = fft::forward(f.rows, f.cols, f.v);

  std::vector<double> kx(f.cols), ky(f.rows);
  for (int c = 0; c < f.cols; ++c) kx[c] = fft::kvalue(c, f.cols, f.pitch_x_um);
  for (int r = 0; r < f.rows; ++r) ky[r] = fft::kvalue(r, f.rows, f.pitch_y_um);

  for (int r = 0; r < f.rows; ++r) {
    const double kysq = ky[r] * ky[r];
    cplx* row = spec.data() + std::size_t(r) * f.cols;
    for (int c = 0; c < f.cols; ++c) {
      const double q = k0sq - kysq - kx[c] * kx[c];
      if (q <= 0.0) {
        row[c] = 0.0;
      } else {
        row[c] *= std::polar(1.0, distance_um * std::sqrt(q));
      }
    }
  }
  ComplexField out = f;
  fft::dft2(f.rows, f.cols, spec.data(), out.v.data(), true);
  return out;
}

/// Spectral weight |J| of Eq-style tilted-plane resampling:
/// |cos(theta) + (kx'/kz') sin(theta)| with kz' = sqrt(k0^2 - kx'^2 - ky^2).
/// Throws BandEdgeError at or beyond the propagating-band edge; callers
/// substitute 0 there.
inline double jacobian_weight(double kx_prime, double ky, double theta_deg, double k0) {
  const double q = k0 * k0 - kx_prime * kx_prime - ky * ky;
  if (q <= 0.0) throw BandEdgeError("jacobian_weight: frequency at/beyond band edge");
  const double kz_prime = std::sqrt(q);
  const double t = theta_deg * std::numbers::pi / 180.0;
  return std::abs(std::cos(t) + (kx_prime / kz_prime) * std::sin(t));
}

/// Re-express a field on a plane rotated about the y-axis by tilt.angle_deg.
///
/// For each output frequency (kx, ky) the source spectrum is sampled by
/// cubic (Catmull-Rom) interpolation at kx_src = kx*cos(theta) -
/// kz(kx,ky)*sin(theta) and weighted by the Jacobian magnitude of the
/// on-sphere coordinate change.
/// Frequencies mapping outside the source band, or with kz below 0.05*k0 on
/// either side of the map, are zeroed. The field is zero-padded 2x internally
/// so the spectrum is resolved enough for the interpolation (the rotated
/// carrier of a uniform field falls between grid frequencies otherwise);
/// the output is cropped back to the input dims. At theta = 0 the field is
/// returned unchanged (no resampling path).
inline ComplexField tilt_spectrum_remap(const ComplexField& f, const TiltSpec& tilt,
                                        double wavelength_um) {
  f.validate("tilt_spectrum_remap");
  tilt.validate();
  if (wavelength_um <= 0) throw DomainError("tilt_spectrum_remap: wavelength must be positive");
  if (tilt.angle_deg == 0.0) return f;

  const int pr = fft::fast_size(2 * f.rows), pc = fft::fast_size(2 * f.cols);
  const int r_off = (pr - f.rows) / 2, c_off = (pc - f.cols) / 2;
  ComplexField padded(pr, pc, f.pitch_x_um, f.pitch_y_um, cplx(0, 0));
  paste(padded, f, r_off, c_off);
  // Center the content on the spatial origin so the spectrum's phase varies
  // slowly across bins; interpolating an off-origin spectrum (phase ramp of
  // ~pi per bin) cancels adjacent bins.
  padded = roll(padded, -(r_off + f.rows / 2), -(c_off + f.cols / 2));

  const double k0 = 2.0 * std::numbers::pi / wavelength_um;
  const double k0sq = k0 * k0;
  const double kz_floor = 0.05 * k0;  // band-edge clamp, bounds 1/kz' amplification
  const double t = tilt.rad();
  const double ct = std::cos(t), st = std::sin(t);

  cvec spec = fft::forward(pr, pc, padded.v);

  std::vector<double> kx(pc), ky(pr);
  for (int c = 0; c < pc; ++c) kx[c] = fft::kvalue(c, pc, f.pitch_x_um);
  for (int r = 0; r < pr; ++r) ky[r] = fft::kvalue(r, pr, f.pitch_y_um);
  const double dkx = 2.0 * std::numbers::pi / (pc * f.pitch_x_um);

  cvec out_spec(spec.size(), cplx(0, 0));
  for (int r = 0; r < pr; ++r) {
    const double kysq = ky[r] * ky[r];
    const cplx* src_row = spec.data() + std::size_t(r) * pc;
    cplx* dst_row = out_spec.data() + std::size_t(r) * pc;
    for (int c = 0; c < pc; ++c) {
      const double qz = k0sq - kysq - kx[c] * kx[c];
      if (qz <= kz_floor * kz_floor) continue;
      const double kz = std::sqrt(qz);
      const double kx_src = kx[c] * ct - kz * st;
      const double qz_src = k0sq - kysq - kx_src * kx_src;
      if (qz_src <= kz_floor * kz_floor) continue;
      // Weight with the matched angle sign so that remap(theta) followed by
      // remap(-theta) has exactly cancelling Jacobians.
      const double kz_src = std::sqrt(qz_src);
      const double w = std::abs(ct - (kx_src / kz_src) * st);

      // Catmull-Rom interpolation along kx in signed-frequency space.
      const double fpos = kx_src / dkx;
      const int flo = int(std::floor(fpos));
      const double tt = fpos - flo;
      // signed frequency index range on an n-point grid: [-(n/2), n-1-(n/2)]
      const int fmin = -(pc / 2);
      const int fmax = pc - 1 - (pc / 2);
      cplx p[4];
      for (int k = 0; k < 4; ++k) {
        const int fi = flo - 1 + k;
        p[k] = (fi >= fmin && fi <= fmax) ? src_row[(fi % pc + pc) % pc] : cplx(0, 0);
      }
      const cplx interp =
          0.5 * (2.0 * p[1] + tt * ((p[2] - p[0]) +
                                    tt * ((2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) +
                                          tt * (3.0 * (p[1] - p[2]) + p[3] - p[0]))));
      dst_row[c] = w * interp;
    }
  }
  fft::dft2(pr, pc, out_spec.data(), padded.v.data(), true);
  padded = roll(padded, r_off + f.rows / 2, c_off + f.cols / 2);
  return crop(padded, r_off, c_off, f.rows, f.cols);
}

}  // namespace tiltrecon
