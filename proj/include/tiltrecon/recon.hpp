#pragma once

#include <numeric>
#include <random>

#include "tiltrecon/calibration.hpp"
#include "tiltrecon/field_ops.hpp"
#include "tiltrecon/forward_sim.hpp"
#include "tiltrecon/propagation.hpp"

namespace tiltrecon {

enum class HeightMode { radial, signed_projection };
enum class FrameOrder { sequential, random };

struct ReconConfig {
  int iterations = 20;
  int guard_px = 32;  // hi-res crop margin; rounded up to a multiple of M internally
  double epsilon_rel = 1e-9;
  HeightMode height_mode = HeightMode::signed_projection;
  FrameOrder frame_order = FrameOrder::sequential;
  unsigned long long order_seed = 1;
  bool record_error = true;
  // Debug: use the paper-printed back-propagation distance (-d + d_j) instead
  // of -(d + d_j); the default makes the forward/backward pair exact inverses.
  bool paper_literal_backprop = false;

  void validate() const {
    if (iterations < 0) throw DomainError("ReconConfig: iterations must be >= 0");
    if (guard_px < 0) throw DomainError("ReconConfig: guard_px must be >= 0");
    if (!(epsilon_rel > 0 && epsilon_rel < 1)) throw DomainError("ReconConfig: epsilon_rel in (0,1)");
  }
};

struct ReconResult {
  ComplexField tilted_wavefront;  // W(x', y), hi-res, pitch sensor_pitch/M
  ComplexField object;            // O(x, y) after tilt-back
  std::vector<double> per_iteration_error;
  Geometry geometry_used;
  RealGrid coverage;  // per-sample count of frames whose window covered it
  int window_row0 = 0, window_col0 = 0;  // frame-0 sensor footprint origin in W
};

/// Equivalent height variation induced by a lateral shift under the tilted
/// sensor. radial: tan(theta)*|s| (paper-literal, non-negative);
/// signed_projection: tan(theta)*dx (projection onto the tilt-gradient axis).
inline double equivalent_height(const ShiftVector& shift, double theta_deg, HeightMode mode) {
  if (!(std::abs(theta_deg) < 45.0)) throw DomainError("equivalent_height: |theta| must be < 45");
  const double t = std::tan(theta_deg * std::numbers::pi / 180.0);
  return mode == HeightMode::radial ? t * shift.norm_um() : t * shift.dx_um;
}

namespace detail {

// Up-sampled magnitude projection. Scales each M x M block of psi so its
// intensity block-sum matches the raw pixel; phase untouched. Blocks with
// U < epsilon_rel * mean(U) are left unchanged. Optionally reports the
// pre-projection data misfit ||sqrt(U) - sqrt(raw)||_2 (per raw pixel).
inline ComplexField magnitude_project_impl(const ComplexField& psi, const RealGrid& raw, int M,
                                           double epsilon_rel, double* misfit_out) {
  if (M < 1) throw DomainError("magnitude_project: M must be >= 1");
  if (psi.rows != raw.rows * M || psi.cols != raw.cols * M)
    throw DomainError("magnitude_project: psi dims must equal raw dims x M");

  RealGrid U(raw.rows, raw.cols);
  for (int r = 0; r < psi.rows; ++r) {
    const cplx* src = psi.v.data() + std::size_t(r) * psi.cols;
    double* dst = U.v.data() + std::size_t(r / M) * U.cols;
    for (int c = 0; c < psi.cols; ++c) dst[c / M] += std::norm(src[c]);
  }

  if (misfit_out) {
    double s = 0;
    for (std::size_t i = 0; i < U.size(); ++i) {
      const double d = std::sqrt(U.v[i]) - std::sqrt(std::max(0.0, raw.v[i]));
      s += d * d;
    }
    *misfit_out = std::sqrt(s);
  }

  const double floor = epsilon_rel * (U.sum() / double(U.size()));
  RealGrid scale(raw.rows, raw.cols, 1.0);
  for (std::size_t i = 0; i < U.size(); ++i)
    if (U.v[i] >= floor && U.v[i] > 0) scale.v[i] = std::sqrt(std::max(0.0, raw.v[i]) / U.v[i]);

  ComplexField out = psi;
  for (int r = 0; r < psi.rows; ++r) {
    const double* sr = scale.v.data() + std::size_t(r / M) * scale.cols;
    cplx* row = out.v.data() + std::size_t(r) * psi.cols;
    for (int c = 0; c < psi.cols; ++c) row[c] *= sr[c / M];
  }
  return out;
}

}  // namespace detail

/// Enforce the raw-pixel block-sum constraint on an up-sampled wavefront:
/// psi' = psi * sqrt(raw)/sqrt(U) per M x M block, U the block-summed |psi|^2.
inline ComplexField magnitude_project(const ComplexField& psi, const RealGrid& raw, int M,
                                      double epsilon_rel = 1e-9) {
  return detail::magnitude_project_impl(psi, raw, M, epsilon_rel, nullptr);
}

namespace detail {

struct WavefrontLayout {
  int w_rows = 0, w_cols = 0;      // W grid dims (FFT-friendly)
  int win_row0 = 0, win_col0 = 0;  // frame-0 sensor footprint origin in W
  int foot_rows = 0, foot_cols = 0;
  int guard = 0;  // hi-res guard, multiple of M
  std::vector<ShiftVector> shifts_px;  // refined shifts in hi-res pixels (x=col, y=row)
};

// Measured (apparent) frame shifts decompose into the tilted wavefront's
// in-plane translation plus the differential propagation walk that the
// engine's own defocus term reproduces: r = u + tan(theta)*d_j with
// u = s*cos(theta) and d_j = s*sin(theta), so u = r*cos^2(theta) along the
// tilt axis. Feeding r directly would double-count the walk (several
// hi-res pixels at paper-scale scans).
inline ShiftVector wavefront_shift(const ShiftVector& refined, const Geometry& geom) {
  const double c = std::cos(geom.tilt_rad());
  return ShiftVector{refined.dx_um * c * c, refined.dy_um};
}

inline WavefrontLayout plan_layout(const std::vector<RawFrame>& frames, const Geometry& geom,
                                   int guard_px) {
  if (frames.empty()) throw DomainError("reconstruct: empty dataset");
  const int M = geom.upsample_factor;
  WavefrontLayout lay;
  lay.foot_rows = geom.sensor_rows * M;
  lay.foot_cols = geom.sensor_cols * M;
  // Guard rounds up to a multiple of M (block alignment for the projection)
  // and then until the crop window is an FFT-friendly size.
  lay.guard = (guard_px + M - 1) / M * M;
  const int fmin = std::min(lay.foot_rows, lay.foot_cols);
  while (lay.guard * 2 < fmin - 2 &&
         (fft::fast_size(lay.foot_rows - 2 * lay.guard) != lay.foot_rows - 2 * lay.guard ||
          fft::fast_size(lay.foot_cols - 2 * lay.guard) != lay.foot_cols - 2 * lay.guard))
    lay.guard += M;
  const double hp = geom.hires_pitch_um();

  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (const auto& f : frames) {
    if (!f.refined_shift) throw DomainError("reconstruct: frame lacks refined_shift (register first)");
    if (f.intensity.rows != geom.sensor_rows || f.intensity.cols != geom.sensor_cols)
      throw DomainError("reconstruct: frame dims inconsistent with geometry");
    const ShiftVector u = wavefront_shift(*f.refined_shift, geom);
    const double sx = u.dx_um / hp;
    const double sy = u.dy_um / hp;
    lay.shifts_px.push_back({sx, sy});
    min_x = std::min(min_x, sx); max_x = std::max(max_x, sx);
    min_y = std::min(min_y, sy); max_y = std::max(max_y, sy);
  }
  // The margins must absorb the propagation walk of the tilted carrier,
  // dist*tan(theta) laterally per pass, plus diffraction spread; otherwise
  // every frame visit wraps content around the W grid into the window.
  const double walk_um = std::abs(geom.axis_distance_um) * std::tan(std::abs(geom.tilt_rad()));
  const int walk_px = int(std::ceil(walk_um / hp));
  const int margin = lay.guard + walk_px + 64;
  lay.win_col0 = margin + int(std::ceil(std::max(0.0, max_x)));
  lay.win_row0 = lay.guard + 64 + int(std::ceil(std::max(0.0, max_y)));  // walk is along x only
  lay.w_cols = fft::fast_size(lay.win_col0 + lay.foot_cols + int(std::ceil(std::max(0.0, -min_x))) + margin);
  lay.w_rows = fft::fast_size(lay.win_row0 + lay.foot_rows + int(std::ceil(std::max(0.0, -min_y))) + lay.guard + 64);
  return lay;
}

// Initialization. The magnitude-projection loop corrects spectral modes in
// proportion to their defocus diversity (~ q^2 * height spread / 2 k0), so
// the low-frequency amplitude survives from the start almost untouched and
// must be seeded correctly. Low frequencies of intensity barely change under
// propagation, so the measured sqrt(intensity) itself - NOT back-propagated,
// which would stamp in a twin ghost - is the right low-frequency amplitude.
// Each frame is placed at its scan position corrected by the carrier's
// propagation walk (d + d_j)*tan(theta), averaged, and given the tilted
// plane's geometric carrier phase exp(i k0 sin(theta) x'). The
// high-frequency content (defocus fringes here) is rebuilt by the
// projections, which constrain it strongly.
inline ComplexField initialize_impl(const std::vector<RawFrame>& frames, const Geometry& geom,
                                    const WavefrontLayout& lay) {
  const int M = geom.upsample_factor;
  const double hp = geom.hires_pitch_um();
  const double u_carrier = geom.k0() * std::sin(geom.tilt_rad());
  const double ccol = 0.5 * lay.w_cols;
  const double tant = std::tan(geom.tilt_rad());

  double mean_amp = 0;
  std::size_t n = 0;
  for (const auto& f : frames) {
    for (double x : f.intensity.v) mean_amp += std::sqrt(std::max(0.0, x));
    n += f.intensity.size();
  }
  mean_amp /= double(n) * M;

  RealGrid acc(lay.w_rows, lay.w_cols, 0.0);
  RealGrid cnt(lay.w_rows, lay.w_cols, 0.0);
  for (std::size_t j = 0; j < frames.size(); ++j) {
    const ShiftVector u = wavefront_shift(*frames[j].refined_shift, geom);
    const double d_j = equivalent_height(u, geom.tilt_deg, HeightMode::signed_projection);
    const double walk_um = (geom.axis_distance_um + d_j) * tant;
    const int r0 = lay.win_row0 - int(std::lround(u.dy_um / hp));
    const int c0 = lay.win_col0 - int(std::lround((u.dx_um + walk_um) / hp));
    const RealGrid up = upsample_nearest(frames[j].intensity, M);
    for (int r = 0; r < up.rows; ++r) {
      if (r0 + r < 0 || r0 + r >= lay.w_rows) continue;
      for (int c = 0; c < up.cols; ++c) {
        if (c0 + c < 0 || c0 + c >= lay.w_cols) continue;
        acc.at(r0 + r, c0 + c) += std::sqrt(std::max(0.0, up.at(r, c))) / M;
        cnt.at(r0 + r, c0 + c) += 1.0;
      }
    }
  }

  ComplexField w(lay.w_rows, lay.w_cols, hp, hp);
  for (int r = 0; r < lay.w_rows; ++r)
    for (int c = 0; c < lay.w_cols; ++c) {
      const double a = cnt.at(r, c) > 0 ? acc.at(r, c) / cnt.at(r, c) : mean_amp;
      w.at(r, c) = std::polar(a, u_carrier * (c - ccol) * hp);
    }
  return w;
}

}  // namespace detail

/// Flat-phase initialization of the tilted wavefront: frame-0 amplitude in
/// its footprint, the dataset-mean amplitude elsewhere, back-propagated by -d.
inline ComplexField initialize_wavefront(const std::vector<RawFrame>& frames, const Geometry& geom,
                                         int guard_px = 32) {
  geom.validate();
  auto lay = detail::plan_layout(frames, geom, guard_px);
  return detail::initialize_impl(frames, geom, lay);
}

/// Tilt the recovered wavefront back to the horizontal object plane and
/// optionally refocus by extra_defocus_um.
inline ComplexField recover_object(const ComplexField& w, const Geometry& geom,
                                   double extra_defocus_um = 0.0) {
  ComplexField o = tilt_spectrum_remap(w, TiltSpec{-geom.tilt_deg}, geom.wavelength_um);
  if (extra_defocus_um != 0.0)
    o = angular_spectrum_propagate(o, extra_defocus_um, geom.wavelength_um);
  return o;
}

/// Iterative translational multi-height reconstruction with pixel
/// super-resolution.
///
/// Per frame visit: shift W by the negated refined shift, crop the guarded
/// sensor-footprint window, propagate by d + d_j (d_j the equivalent height
/// for this frame's shift), enforce the raw block-sum constraint, propagate
/// back, write the window, undo the shift. After all iterations the object
/// is recovered by tilting W back by -theta.
///
/// warm_start, when given, must match the planned W grid and replaces the
/// default initialization (continuing a previous run, for instance).
inline ReconResult reconstruct(const std::vector<RawFrame>& frames, const Geometry& geom,
                               const ReconConfig& cfg, const ComplexField* warm_start = nullptr) {
  geom.validate();
  cfg.validate();
  const int M = geom.upsample_factor;
  const double hp = geom.hires_pitch_um();
  auto lay = detail::plan_layout(frames, geom, cfg.guard_px);

  const int g = lay.guard;           // hi-res guard per side, multiple of M
  const int graw = g / M;            // guard in raw pixels
  const int cr = lay.foot_rows - 2 * g, cc = lay.foot_cols - 2 * g;  // crop dims
  if (cr < M || cc < M) throw DomainError("reconstruct: guard_px leaves no update window");
  const int crr = cr / M, crc = cc / M;  // cropped raw dims

  // Cropped raw frames (the guarded window is what gets projected).
  std::vector<RealGrid> raws;
  raws.reserve(frames.size());
  for (const auto& f : frames) {
    if (!f.intensity.finite()) throw DomainError("reconstruct: non-finite frame intensity");
    raws.push_back(crop(f.intensity, graw, graw, crr, crc));
  }

  ComplexField w;
  if (warm_start) {
    if (warm_start->rows != lay.w_rows || warm_start->cols != lay.w_cols)
      throw DomainError("reconstruct: warm_start dims do not match the planned W grid");
    w = *warm_start;
  } else {
    w = detail::initialize_impl(frames, geom, lay);
  }

  // Coverage: count frames whose (shifted) window covers each W sample.
  RealGrid coverage(lay.w_rows, lay.w_cols, 0.0);
  for (const auto& s : lay.shifts_px) {
    const int r0 = std::max(0, lay.win_row0 + g - int(std::lround(s.dy_um)));
    const int c0 = std::max(0, lay.win_col0 + g - int(std::lround(s.dx_um)));
    const int r1 = std::min(lay.w_rows, r0 + cr), c1 = std::min(lay.w_cols, c0 + cc);
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) coverage.at(r, c) += 1.0;
  }

  // Per-frame spectral machinery: 1D shift ramps and the equivalent heights.
  // The shift and the propagation to the sensor compose into one full-grid
  // spectral multiplier, so the projection window always sees its true
  // neighboring context (cropping before propagating would wrap diffraction
  // at the window border and make the frames' constraints inconsistent).
  const std::size_t wn = w.size();
  std::vector<cvec> ramp_x(frames.size()), ramp_y(frames.size());
  std::vector<double> d_j(frames.size());
  for (std::size_t j = 0; j < frames.size(); ++j) {
    const ShiftVector u = detail::wavefront_shift(*frames[j].refined_shift, geom);
    d_j[j] = equivalent_height(u, geom.tilt_deg, cfg.height_mode);
    ramp_x[j].resize(lay.w_cols);
    ramp_y[j].resize(lay.w_rows);
    for (int c = 0; c < lay.w_cols; ++c)
      ramp_x[j][c] = std::polar(1.0, fft::kvalue(c, lay.w_cols, hp) * -u.dx_um);
    for (int r = 0; r < lay.w_rows; ++r)
      ramp_y[j][r] = std::polar(1.0, fft::kvalue(r, lay.w_rows, hp) * -u.dy_um);
  }

  const double k0 = geom.k0();
  std::vector<double> kz(wn, -1.0);
  for (int r = 0; r < lay.w_rows; ++r) {
    const double ky = fft::kvalue(r, lay.w_rows, hp);
    for (int c = 0; c < lay.w_cols; ++c) {
      const double kx = fft::kvalue(c, lay.w_cols, hp);
      const double q = k0 * k0 - ky * ky - kx * kx;
      if (q > 0) kz[std::size_t(r) * lay.w_cols + c] = std::sqrt(q);
    }
  }

  ReconResult res;
  res.geometry_used = geom;
  res.window_row0 = lay.win_row0;
  res.window_col0 = lay.win_col0;

  cvec wspec = fft::forward(lay.w_rows, lay.w_cols, w.v);
  cvec work(wn);
  ComplexField shifted(lay.w_rows, lay.w_cols, hp, hp);
  ComplexField psi(cr, cc, hp, hp);

  std::vector<int> order(frames.size());
  std::iota(order.begin(), order.end(), 0);

  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.frame_order == FrameOrder::random) {
      std::seed_seq sq{cfg.order_seed, (unsigned long long)it};
      std::mt19937_64 rng(sq);
      std::shuffle(order.begin(), order.end(), rng);
    }
    double iter_err = 0;
    for (int j : order) {
      // shift W by (-x_j, -y_j) and propagate by d + d_j in one pass
      const double dist = geom.axis_distance_um + d_j[j];
      for (int r = 0; r < lay.w_rows; ++r) {
        const cplx py = ramp_y[j][r];
        const cplx* src = wspec.data() + std::size_t(r) * lay.w_cols;
        const double* kzr = kz.data() + std::size_t(r) * lay.w_cols;
        cplx* dst = work.data() + std::size_t(r) * lay.w_cols;
        for (int c = 0; c < lay.w_cols; ++c)
          dst[c] = kzr[c] > 0
                       ? src[c] * py * ramp_x[j][c] * std::polar(1.0, dist * kzr[c])
                       : cplx(0, 0);
      }
      fft::dft2(lay.w_rows, lay.w_cols, work.data(), shifted.v.data(), true);

      // guarded central window against the guarded raw frame
      for (int r = 0; r < cr; ++r) {
        const cplx* src =
            shifted.v.data() + std::size_t(lay.win_row0 + g + r) * lay.w_cols + lay.win_col0 + g;
        std::copy(src, src + cc, psi.v.data() + std::size_t(r) * cc);
      }
      double misfit = 0;
      psi = detail::magnitude_project_impl(psi, raws[j], M, cfg.epsilon_rel,
                                           cfg.record_error ? &misfit : nullptr);
      iter_err += misfit;
      for (int r = 0; r < cr; ++r) {
        cplx* dst =
            shifted.v.data() + std::size_t(lay.win_row0 + g + r) * lay.w_cols + lay.win_col0 + g;
        std::copy(psi.v.begin() + std::size_t(r) * cc, psi.v.begin() + std::size_t(r + 1) * cc,
                  dst);
      }

      // back-propagate and shift back
      const double bdist =
          cfg.paper_literal_backprop ? (-geom.axis_distance_um + d_j[j]) : -dist;
      fft::dft2(lay.w_rows, lay.w_cols, shifted.v.data(), work.data(), false);
      for (int r = 0; r < lay.w_rows; ++r) {
        const cplx py = std::conj(ramp_y[j][r]);
        const double* kzr = kz.data() + std::size_t(r) * lay.w_cols;
        cplx* dst = wspec.data() + std::size_t(r) * lay.w_cols;
        const cplx* src = work.data() + std::size_t(r) * lay.w_cols;
        for (int c = 0; c < lay.w_cols; ++c)
          dst[c] = kzr[c] > 0
                       ? src[c] * py * std::conj(ramp_x[j][c]) * std::polar(1.0, bdist * kzr[c])
                       : cplx(0, 0);
      }
    }
    if (cfg.record_error) res.per_iteration_error.push_back(iter_err);
  }

  fft::dft2(lay.w_rows, lay.w_cols, wspec.data(), w.v.data(), true);
  res.tilted_wavefront = w;
  res.object = recover_object(w, geom, 0.0);
  res.coverage = std::move(coverage);
  return res;
}

}  // namespace tiltrecon
