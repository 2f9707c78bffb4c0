#pragma once

#include <optional>
#include <random>

#include "tiltrecon/field_ops.hpp"
#include "tiltrecon/grid.hpp"
#include "tiltrecon/propagation.hpp"

namespace tiltrecon {

/// One low-resolution intensity measurement plus its shift bookkeeping.
struct RawFrame {
  RealGrid intensity;
  ShiftVector nominal_shift;
  std::optional<ShiftVector> refined_shift;
  int index = 0;
  bool wrap_warning = false;  // sensor footprint + guard band did not fit the grid
};

/// Sensor noise: Poisson shot noise at photon_scale expected counts per unit
/// intensity, additive Gaussian read noise, optional quantization.
/// photon_scale = 0 disables shot noise; bit_depth = 0 disables quantization.
struct NoiseModel {
  double photon_scale = 0.0;
  double read_sigma = 0.0;
  int bit_depth = 0;
  unsigned long long seed = 1;

  bool enabled() const { return photon_scale > 0 || read_sigma > 0 || bit_depth > 0; }
  void validate() const {
    if (photon_scale < 0) throw DomainError("NoiseModel: photon_scale must be >= 0");
    if (read_sigma < 0) throw DomainError("NoiseModel: read_sigma must be >= 0");
    if (bit_depth < 0 || bit_depth > 16) throw DomainError("NoiseModel: bit_depth out of range");
  }
};

enum class ObjectKind { bars, phase_steps, smear };

struct SynthParams {
  int rows = 0;
  int cols = 0;
  double pitch_um = 1.0;
  // bars
  std::vector<double> linewidths_um;
  // phase_steps
  double phase_step_rad = 1.0;
  // smear
  int seed = 1;
  int blob_count = 60;
  double blob_radius_um = 10.0;
  double phase_range_rad = 0.8;
};

/// Location of one synthesized three-bar group, in object-grid samples.
/// Bars are vertical (spatial frequency along x); the profile trace runs
/// along columns [col0, col1) averaged over rows [row0, row1).
struct BarSpec {
  double linewidth_um = 0;
  int row0 = 0, row1 = 0;
  int col0 = 0, col1 = 0;
};

namespace detail {

// Fraction of [x0, x1) covered by bars of a 3-bar group starting at gx:
// bar, gap, bar, gap, bar, each of width lw.
inline double bar_coverage(double x0, double x1, double gx, double lw) {
  double covered = 0;
  for (int b = 0; b < 3; ++b) {
    const double b0 = gx + 2.0 * b * lw;
    const double b1 = b0 + lw;
    covered += std::max(0.0, std::min(x1, b1) - std::max(x0, b0));
  }
  return covered / (x1 - x0);
}

}  // namespace detail

/// Layout of the bar groups that synth_object(bars) draws, for later
/// contrast measurements.
inline std::vector<BarSpec> bar_layout(const SynthParams& p) {
  std::vector<BarSpec> specs;
  const double margin_um = 0.12 * p.cols * p.pitch_um;
  double x_um = margin_um;
  for (double lw : p.linewidths_um) {
    const double group_w = 5.0 * lw;
    const double bar_len = std::max(8.0 * lw, 12.0);
    const int rc = p.rows / 2;
    const int half_rows = std::max(2, int(bar_len / (2 * p.pitch_um)));
    BarSpec s;
    s.linewidth_um = lw;
    s.row0 = rc - half_rows / 2;
    s.row1 = rc + half_rows / 2;
    s.col0 = int(std::floor(x_um / p.pitch_um)) - 2;
    s.col1 = int(std::ceil((x_um + group_w) / p.pitch_um)) + 2;
    specs.push_back(s);
    x_um += group_w + std::max(4.0 * lw, 10.0);
  }
  return specs;
}

/// Synthesize a test object on a grid of p.rows x p.cols at p.pitch_um.
///  - bars: binary-amplitude vertical three-bar groups, one per requested
///    linewidth, drawn with area antialiasing (dark bars on unit background).
///  - phase_steps: unit amplitude, rectangular phase plateaus of
///    p.phase_step_rad radians on a zero-phase background.
///  - smear: random smooth amplitude/phase blobs (seeded).
/// Defaulted params give a uniform unit field.
inline ComplexField synth_object(ObjectKind kind, const SynthParams& p) {
  if (p.rows < 2 || p.cols < 2) throw DomainError("synth_object: grid must be at least 2x2");
  if (p.pitch_um <= 0) throw DomainError("synth_object: pitch must be positive");
  ComplexField f(p.rows, p.cols, p.pitch_um, p.pitch_um, cplx(1.0, 0.0));

  switch (kind) {
    case ObjectKind::bars: {
      for (double lw : p.linewidths_um)
        if (lw < 2.0 * p.pitch_um)
          throw DomainError("synth_object: linewidth below 2x pitch is unrepresentable");
      const auto specs = bar_layout(p);
      const double margin_um = 0.12 * p.cols * p.pitch_um;
      double x_um = margin_um;
      for (std::size_t i = 0; i < specs.size(); ++i) {
        const double lw = specs[i].linewidth_um;
        const BarSpec& s = specs[i];
        for (int r = std::max(0, s.row0); r < std::min(p.rows, s.row1); ++r)
          for (int c = std::max(0, s.col0); c < std::min(p.cols, s.col1); ++c) {
            const double cov =
                detail::bar_coverage(c * p.pitch_um, (c + 1) * p.pitch_um, x_um, lw);
            f.at(r, c) = cplx(1.0 - cov, 0.0);
          }
        x_um += 5.0 * lw + std::max(4.0 * lw, 10.0);
      }
      break;
    }
    case ObjectKind::phase_steps: {
      // two plateaus, each roughly a fifth of the grid
      const int hr = p.rows / 5, hc = p.cols / 5;
      auto plateau = [&](int rc, int cc) {
        for (int r = rc - hr / 2; r < rc + hr / 2; ++r)
          for (int c = cc - hc / 2; c < cc + hc / 2; ++c)
            if (r >= 0 && r < p.rows && c >= 0 && c < p.cols)
              f.at(r, c) = std::polar(1.0, p.phase_step_rad);
      };
      plateau(p.rows / 2, p.cols / 3);
      plateau(p.rows / 2, 2 * p.cols / 3);
      break;
    }
    case ObjectKind::smear: {
      std::mt19937_64 rng(p.seed);
      std::uniform_real_distribution<double> ur(0.0, 1.0);
      std::vector<double> amp(f.size(), 0.0), ph(f.size(), 0.0);
      const double rr = p.blob_radius_um / p.pitch_um;
      for (int b = 0; b < p.blob_count; ++b) {
        const double cr = ur(rng) * p.rows;
        const double cc = ur(rng) * p.cols;
        const double rad = rr * (0.5 + ur(rng));
        const double a = 0.25 + 0.75 * ur(rng);
        const double pv = (ur(rng) - 0.5) * 2.0 * p.phase_range_rad;
        const int r0 = std::max(0, int(cr - 3 * rad)), r1 = std::min(p.rows, int(cr + 3 * rad) + 1);
        const int c0 = std::max(0, int(cc - 3 * rad)), c1 = std::min(p.cols, int(cc + 3 * rad) + 1);
        for (int r = r0; r < r1; ++r)
          for (int c = c0; c < c1; ++c) {
            const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
            const double g = std::exp(-d2 / (2.0 * rad * rad));
            amp[std::size_t(r) * p.cols + c] += a * g;
            ph[std::size_t(r) * p.cols + c] += pv * g;
          }
      }
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double a = 1.0 / (1.0 + amp[i]);  // absorptive blobs, amplitude in (0, 1]
        f.v[i] = std::polar(a, ph[i]);
      }
      break;
    }
  }
  return f;
}

/// Block-sum downsampling: each output pixel is the sum over its M x M
/// input block (the raw-pixel convention of the imaging model).
inline RealGrid downsample_intensity(const RealGrid& hi, int M) {
  if (M < 1) throw DomainError("downsample_intensity: M must be >= 1");
  if (hi.rows % M != 0 || hi.cols % M != 0)
    throw DomainError("downsample_intensity: dims not divisible by M");
  RealGrid out(hi.rows / M, hi.cols / M);
  for (int r = 0; r < hi.rows; ++r) {
    const double* src = hi.v.data() + std::size_t(r) * hi.cols;
    double* dst = out.v.data() + std::size_t(r / M) * out.cols;
    for (int c = 0; c < hi.cols; ++c) dst[c / M] += src[c];
  }
  return out;
}

namespace detail {

// Tilted object wavefront prepared once per object; per-frame shift and
// propagation are exact spectral multipliers on its spectrum.
struct TiltedSource {
  int rows = 0, cols = 0;
  double pitch = 0;
  cvec spec;  // FFT of tilt_spectrum_remap(obj, theta)
};

inline TiltedSource prepare_tilted_source(const ComplexField& obj, const Geometry& geom) {
  obj.validate("simulate_sensor_field");
  geom.validate();
  ComplexField w0 = tilt_spectrum_remap(obj, TiltSpec{geom.tilt_deg}, geom.wavelength_um);
  TiltedSource src;
  src.rows = w0.rows;
  src.cols = w0.cols;
  src.pitch = w0.pitch_x_um;
  src.spec = fft::forward(w0.rows, w0.cols, w0.v);
  return src;
}

inline ComplexField sensor_field_from_source(const TiltedSource& src, const Geometry& geom,
                                             const ShiftVector& shift) {
  // tilt_theta(O(x - sx, y - sy)) = P_{+sx sin(theta)}[ shifted tilt_theta(O) ],
  // the shifted tilted wavefront displaced by (sx cos(theta), sy). The shift
  // ramp and the propagation transfer to the sensor apply in one pass.
  const double th = geom.tilt_rad();
  const double vx = shift.dx_um * std::cos(th);
  const double vy = shift.dy_um;
  const double dist = geom.axis_distance_um + shift.dx_um * std::sin(th);
  const double k0 = geom.k0();

  cvec spec(src.spec.size());
  for (int r = 0; r < src.rows; ++r) {
    const double ky = fft::kvalue(r, src.rows, src.pitch);
    const double kyv = ky * vy;
    const double kysq = ky * ky;
    const cplx* in = src.spec.data() + std::size_t(r) * src.cols;
    cplx* out = spec.data() + std::size_t(r) * src.cols;
    for (int c = 0; c < src.cols; ++c) {
      const double kx = fft::kvalue(c, src.cols, src.pitch);
      const double q = k0 * k0 - kysq - kx * kx;
      if (q <= 0) {
        out[c] = 0;
      } else {
        out[c] = in[c] * std::polar(1.0, dist * std::sqrt(q) - kx * vx - kyv);
      }
    }
  }
  ComplexField f(src.rows, src.cols, src.pitch, src.pitch);
  fft::dft2(src.rows, src.cols, spec.data(), f.v.data(), true);
  return f;
}

}  // namespace detail

/// Hi-res complex field at the sensor plane for one shift, over the full
/// object grid: shift, tilt, propagate (realized as one tilt of the centered
/// object followed by the exact shift/defocus multipliers it commutes into).
inline ComplexField simulate_sensor_field(const ComplexField& obj, const Geometry& geom,
                                          const ShiftVector& shift) {
  return detail::sensor_field_from_source(detail::prepare_tilted_source(obj, geom), geom, shift);
}

namespace detail {

inline void apply_noise(RealGrid& img, const NoiseModel& noise, unsigned long long stream) {
  if (!noise.enabled()) return;
  std::seed_seq sq{noise.seed, stream, 0x9e3779b97f4a7c15ull};
  std::mt19937_64 rng(sq);
  if (noise.photon_scale > 0) {
    for (double& x : img.v) {
      std::poisson_distribution<long> pd(std::max(0.0, x) * noise.photon_scale);
      x = double(pd(rng)) / noise.photon_scale;
    }
  }
  if (noise.read_sigma > 0) {
    std::normal_distribution<double> nd(0.0, noise.read_sigma);
    for (double& x : img.v) x += nd(rng);
  }
  for (double& x : img.v) x = std::max(0.0, x);
  if (noise.bit_depth > 0) {
    const double levels = double((1u << noise.bit_depth) - 1);
    const double m = img.max_value();
    if (m > 0) {
      const double step = m / levels;
      for (double& x : img.v) x = std::round(x / step) * step;
    }
  }
}

}  // namespace detail

namespace detail {

inline RawFrame detect(const TiltedSource& src, const Geometry& geom, const ShiftVector& shift,
                       const NoiseModel& noise, int index) {
  const int M = geom.upsample_factor;
  const int fr = geom.sensor_rows * M;
  const int fc = geom.sensor_cols * M;
  if (src.rows < fr || src.cols < fc)
    throw DomainError("simulate_measurement: object grid smaller than sensor footprint");

  ComplexField at_sensor = sensor_field_from_source(src, geom, shift);

  constexpr int kGuard = 64;  // hi-res samples required around the footprint
  const double px = geom.hires_pitch_um();
  const int need_x = fc + 2 * kGuard + 2 * int(std::ceil(std::abs(shift.dx_um) / px));
  const int need_y = fr + 2 * kGuard + 2 * int(std::ceil(std::abs(shift.dy_um) / px));

  const int r0 = (src.rows - fr) / 2;
  const int c0 = (src.cols - fc) / 2;
  ComplexField foot = crop(at_sensor, r0, c0, fr, fc);
  RawFrame frame;
  frame.intensity = downsample_intensity(foot.intensity(), M);
  frame.nominal_shift = shift;
  frame.index = index;
  frame.wrap_warning = src.cols < need_x || src.rows < need_y;
  apply_noise(frame.intensity, noise, (unsigned long long)index);
  return frame;
}

}  // namespace detail

/// Synthesize one tilted-sensor measurement: shift the object under the fixed
/// sensor, tilt the wavefront, propagate to the sensor, detect intensity,
/// block-sum down to raw pixels, apply noise.
inline RawFrame simulate_measurement(const ComplexField& obj, const Geometry& geom,
                                     const ShiftVector& shift, const NoiseModel& noise = {},
                                     int index = 0) {
  geom.validate();
  noise.validate();
  const double rel = std::abs(obj.pitch_x_um - geom.hires_pitch_um()) / geom.hires_pitch_um();
  if (rel > 1e-9 || std::abs(obj.pitch_y_um - obj.pitch_x_um) > 1e-12)
    throw DomainError("simulate_measurement: object pitch must equal sensor_pitch/M");
  return detail::detect(detail::prepare_tilted_source(obj, geom), geom, shift, noise, index);
}

/// One frame per shift, ascending index, deterministic for a fixed seed.
/// The tilted source wavefront is prepared once and shared across frames.
inline std::vector<RawFrame> simulate_dataset(const ComplexField& obj, const Geometry& geom,
                                              const std::vector<ShiftVector>& shifts,
                                              const NoiseModel& noise = {}) {
  if (shifts.empty()) throw DomainError("simulate_dataset: need at least one shift");
  geom.validate();
  noise.validate();
  const double rel = std::abs(obj.pitch_x_um - geom.hires_pitch_um()) / geom.hires_pitch_um();
  if (rel > 1e-9 || std::abs(obj.pitch_y_um - obj.pitch_x_um) > 1e-12)
    throw DomainError("simulate_dataset: object pitch must equal sensor_pitch/M");
  auto src = detail::prepare_tilted_source(obj, geom);
  std::vector<RawFrame> frames;
  frames.reserve(shifts.size());
  for (std::size_t j = 0; j < shifts.size(); ++j)
    frames.push_back(detail::detect(src, geom, shifts[j], noise, int(j)));
  return frames;
}

}  // namespace tiltrecon
