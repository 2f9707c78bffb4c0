#pragma once

#include <algorithm>
#include <optional>

#include "tiltrecon/field_ops.hpp"
#include "tiltrecon/forward_sim.hpp"
#include "tiltrecon/propagation.hpp"

namespace tiltrecon {

/// Distance search grid for autofocus.
struct FocusSearch {
  double d_min_um = 0;
  double d_max_um = 0;
  double step_um = 0;
  bool refine = true;  // parabolic vertex refinement around the best sample

  void validate() const {
    if (!(d_min_um < d_max_um)) throw DomainError("FocusSearch: d_min must be < d_max");
    if (!(step_um > 0)) throw DomainError("FocusSearch: step must be positive");
  }
};

struct FocusResult {
  double distance_um = 0;
  bool at_boundary = false;
  std::vector<double> curve;  // metric per search-grid sample
};

/// Rectangular window in raw-pixel coordinates.
struct Rect {
  int row0 = 0, col0 = 0, rows = 0, cols = 0;

  int center_row() const { return row0 + rows / 2; }
  int center_col() const { return col0 + cols / 2; }
  bool overlaps(const Rect& o) const {
    return row0 < o.row0 + o.rows && o.row0 < row0 + rows && col0 < o.col0 + o.cols &&
           o.col0 < col0 + cols;
  }
};

/// Tamura coefficient of the gradient magnitude: sqrt(std/mean) of
/// |grad img| over the interior (central differences). Scale-invariant;
/// 0 for a constant image.
inline double focus_metric(const RealGrid& img) {
  if (img.rows < 3 || img.cols < 3) return 0.0;
  double sum = 0, sum2 = 0;
  const std::size_t n = std::size_t(img.rows - 2) * (img.cols - 2);
  for (int r = 1; r < img.rows - 1; ++r)
    for (int c = 1; c < img.cols - 1; ++c) {
      const double gx = 0.5 * (img.at(r, c + 1) - img.at(r, c - 1));
      const double gy = 0.5 * (img.at(r + 1, c) - img.at(r - 1, c));
      const double g = std::hypot(gx, gy);
      sum += g;
      sum2 += g * g;
    }
  const double mean = sum / n;
  if (mean <= 0) return 0.0;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return std::sqrt(std::sqrt(var) / mean);
}

namespace detail {

// Focus search over a back-propagated amplitude grid at hi-res pitch.
// The spectrum is computed once; each candidate applies one transfer. The
// metric is evaluated on the magnitude block-averaged down to the raw pixel
// pitch (metric_bin samples): the nearest-upsampling replica harmonics pass
// through propagation unattenuated and would otherwise flatten the curve.
// An optional sub-rectangle (hi-res coords) restricts the metric region.
inline FocusResult focus_scan(const ComplexField& amp_field, double wavelength_um,
                              const FocusSearch& search, int metric_bin,
                              const Rect* metric_region = nullptr) {
  search.validate();
  std::vector<double> dists;
  for (double d = search.d_min_um; d <= search.d_max_um + 1e-9; d += search.step_um)
    dists.push_back(d);

  const int R = amp_field.rows, C = amp_field.cols;
  const double k0 = 2.0 * std::numbers::pi / wavelength_um;
  const double k0sq = k0 * k0;
  cvec spec = fft::forward(R, C, amp_field.v);
  std::vector<double> kzs(std::size_t(R) * C, -1.0);
  for (int r = 0; r < R; ++r) {
    const double ky = fft::kvalue(r, R, amp_field.pitch_y_um);
    for (int c = 0; c < C; ++c) {
      const double kx = fft::kvalue(c, C, amp_field.pitch_x_um);
      const double q = k0sq - ky * ky - kx * kx;
      if (q > 0) kzs[std::size_t(r) * C + c] = std::sqrt(q);
    }
  }

  Rect region{0, 0, R, C};
  if (metric_region) region = *metric_region;
  region.rows -= region.rows % metric_bin;
  region.cols -= region.cols % metric_bin;

  FocusResult res;
  res.curve.resize(dists.size());
  cvec work(spec.size()), field(spec.size());
  RealGrid aimg(region.rows, region.cols);
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const double d = -dists[i];  // back-propagate
    for (std::size_t k = 0; k < spec.size(); ++k)
      work[k] = kzs[k] > 0 ? spec[k] * std::polar(1.0, d * kzs[k]) : cplx(0, 0);
    fft::dft2(R, C, work.data(), field.data(), true);
    for (int r = 0; r < region.rows; ++r)
      for (int c = 0; c < region.cols; ++c)
        aimg.at(r, c) = std::abs(field[std::size_t(region.row0 + r) * C + region.col0 + c]);
    res.curve[i] = focus_metric(metric_bin > 1 ? downsample_intensity(aimg, metric_bin) : aimg);
  }

  double mean = 0, mmax = -1e300, mmin = 1e300;
  std::size_t best = 0;
  for (std::size_t i = 0; i < res.curve.size(); ++i) {
    mean += res.curve[i];
    if (res.curve[i] > mmax) { mmax = res.curve[i]; best = i; }
    mmin = std::min(mmin, res.curve[i]);
  }
  mean /= double(res.curve.size());
  if (mean <= 0 || (mmax - mmin) <= 1e-9 * mean)
    throw NoFocusSignal("autofocus: focus metric is degenerate across the search grid");

  res.at_boundary = (best == 0 || best + 1 == res.curve.size());
  res.distance_um = dists[best];
  if (search.refine && !res.at_boundary) {
    const double m0 = res.curve[best - 1], m1 = res.curve[best], m2 = res.curve[best + 1];
    const double den = m0 - 2 * m1 + m2;
    if (den < 0) {
      const double delta = 0.5 * (m0 - m2) / den;
      res.distance_um += std::clamp(delta, -1.0, 1.0) * search.step_um;
    }
  }
  return res;
}

inline ComplexField amp_field_from_intensity(const RealGrid& intensity, int M, double hires_pitch) {
  RealGrid amp(intensity.rows, intensity.cols);
  for (std::size_t i = 0; i < amp.size(); ++i) amp.v[i] = std::sqrt(std::max(0.0, intensity.v[i]));
  RealGrid up = upsample_nearest(amp, M);
  ComplexField f(up.rows, up.cols, hires_pitch, hires_pitch);
  for (std::size_t i = 0; i < up.size(); ++i) f.v[i] = cplx(up.v[i], 0.0);
  return f;
}

}  // namespace detail

namespace detail {

// Focusable-content precondition: the image must carry more than 5% relative
// intensity contrast.
inline void require_contrast(const RealGrid& img, const char* who) {
  const double mean = img.sum() / double(img.size());
  if (mean <= 0) throw NoFocusSignal(std::string(who) + ": empty image");
  double var = 0;
  for (double x : img.v) var += (x - mean) * (x - mean);
  if (std::sqrt(var / double(img.size())) <= 0.05 * mean)
    throw NoFocusSignal(std::string(who) + ": intensity contrast at or below 5% of mean");
}

}  // namespace detail

/// Estimate the object-to-sensor distance by maximizing focus_metric over
/// back-propagated sqrt(intensity), nearest-upsampled to hi-res pitch.
inline FocusResult autofocus_distance(const RawFrame& frame, const Geometry& geom,
                                      const FocusSearch& search) {
  geom.validate();
  if (!frame.intensity.finite()) throw DomainError("autofocus_distance: non-finite intensity");
  detail::require_contrast(frame.intensity, "autofocus_distance");
  ComplexField f = detail::amp_field_from_intensity(frame.intensity, geom.upsample_factor,
                                                    geom.hires_pitch_um());
  return detail::focus_scan(f, geom.wavelength_um, search, geom.upsample_factor);
}

/// Estimate the tilt angle from the autofocus distances of two windows
/// separated along the tilt-gradient axis x':
/// theta = atan((d_b - d_a) / L), L the window-center separation in µm.
inline double estimate_tilt_angle(const RawFrame& frame, const Geometry& geom, const Rect& region_a,
                                  const Rect& region_b, const FocusSearch& search) {
  geom.validate();
  auto check = [&](const Rect& w, const char* name) {
    if (w.rows < 8 || w.cols < 8 || w.row0 < 0 || w.col0 < 0 ||
        w.row0 + w.rows > frame.intensity.rows || w.col0 + w.cols > frame.intensity.cols)
      throw DomainError(std::string("estimate_tilt_angle: bad window ") + name);
  };
  check(region_a, "a");
  check(region_b, "b");
  if (region_a.overlaps(region_b)) throw DomainError("estimate_tilt_angle: windows overlap");
  const int sep_px = region_b.center_col() - region_a.center_col();
  if (std::abs(sep_px) < 50)
    throw DegenerateGeometry("estimate_tilt_angle: window separation below 50 raw pixels");

  auto window_focus = [&](const Rect& w) {
    RealGrid win = crop(frame.intensity, w.row0, w.col0, w.rows, w.cols);
    detail::require_contrast(win, "estimate_tilt_angle");
    const int M = geom.upsample_factor;
    ComplexField f = detail::amp_field_from_intensity(win, M, geom.hires_pitch_um());
    // Same scan as autofocus_distance. Both windows share the window-size-
    // dependent metric bias, which cancels in the distance difference.
    return detail::focus_scan(f, geom.wavelength_um, search, M);
  };
  const double da = window_focus(region_a).distance_um;
  const double db = window_focus(region_b).distance_um;
  const double L_um = sep_px * geom.sensor_pitch_um;
  return std::atan((db - da) / L_um) * 180.0 / std::numbers::pi;
}

namespace detail {

struct PeakSearch {
  double row_px = 0, col_px = 0;  // signed shift of b relative to a
};

// Evaluates the three lag surfaces of a windowed normalized cross-correlation:
// numerator sum A*B, and the overlap-windowed energies of each frame.
struct NccSurfaces {
  int R = 0, C = 0, PR = 0, PC = 0;
  cvec Xab, Xbb, Xaa;  // cross-powers: A.B, 1.B^2, A^2.1
  std::vector<double> cab, sb2, sa2;  // integer-lag surfaces (padded grid)

  double at(int sr, int sc) const {
    const int rr = (sr % PR + PR) % PR, cc = (sc % PC + PC) % PC;
    const std::size_t i = std::size_t(rr) * PC + cc;
    const double den = sa2[i] * sb2[i];
    if (den <= 1e-30) return -1e300;
    return cab[i] / std::sqrt(den);
  }
};

inline NccSurfaces ncc_surfaces(const RealGrid& a, const RealGrid& b) {
  NccSurfaces s;
  s.R = a.rows;
  s.C = a.cols;
  s.PR = fft::fast_size(2 * s.R);
  s.PC = fft::fast_size(2 * s.C);
  const std::size_t n = std::size_t(s.PR) * s.PC;

  cvec fa(n, cplx(0, 0)), fb(n, cplx(0, 0)), f1(n, cplx(0, 0)), fa2(n, cplx(0, 0)),
      fb2(n, cplx(0, 0));
  const double ma = a.sum() / double(a.size()), mb = b.sum() / double(b.size());
  for (int r = 0; r < s.R; ++r)
    for (int c = 0; c < s.C; ++c) {
      const std::size_t i = std::size_t(r) * s.PC + c;
      const double va = a.at(r, c) - ma, vb = b.at(r, c) - mb;
      fa[i] = va;
      fb[i] = vb;
      f1[i] = 1.0;
      fa2[i] = va * va;
      fb2[i] = vb * vb;
    }
  cvec Fa = fft::forward(s.PR, s.PC, fa);
  cvec Fb = fft::forward(s.PR, s.PC, fb);
  cvec F1 = fft::forward(s.PR, s.PC, f1);
  cvec Fa2 = fft::forward(s.PR, s.PC, fa2);
  cvec Fb2 = fft::forward(s.PR, s.PC, fb2);

  s.Xab.resize(n);
  s.Xbb.resize(n);
  s.Xaa.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.Xab[i] = Fb[i] * std::conj(Fa[i]);   // sum A(x) B(x+t)
    s.Xbb[i] = Fb2[i] * std::conj(F1[i]);  // sum 1(x) B^2(x+t)
    s.Xaa[i] = F1[i] * std::conj(Fa2[i]);  // sum A^2(x) 1(x+t)
  }
  cvec w(n);
  auto realize = [&](const cvec& X, std::vector<double>& out) {
    out.resize(n);
    fft::dft2(s.PR, s.PC, X.data(), w.data(), true);
    for (std::size_t i = 0; i < n; ++i) out[i] = w[i].real();
  };
  realize(s.Xab, s.cab);
  realize(s.Xbb, s.sb2);
  realize(s.Xaa, s.sa2);
  return s;
}

// Cross-correlation shift of b relative to a, in pixels, with optional
// Fourier-upsampled refinement and optional nominal-guided peak selection.
// Uses zero-padded (linear) normalized cross-correlation: no wraparound and
// no overlap-taper bias for content leaving the frame.
inline PeakSearch xcorr_shift_px(const RealGrid& a, const RealGrid& b, int upsample,
                                 std::optional<PeakSearch> nominal = std::nullopt) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw DomainError("estimate_shift: frames must have equal dims");
  if (upsample < 1) throw DomainError("estimate_shift: upsample must be >= 1");
  const NccSurfaces s = ncc_surfaces(a, b);
  const int R = s.R, C = s.C, PR = s.PR, PC = s.PC;

  int pr = 0, pc = 0;
  double pv = -1e300;
  if (nominal) {
    // restrict the search to +-8 px around the nominal; no ambiguity possible
    const int nr = int(std::lround(nominal->row_px)), nc = int(std::lround(nominal->col_px));
    constexpr int kWin = 8;
    for (int dr = -kWin; dr <= kWin; ++dr)
      for (int dc = -kWin; dc <= kWin; ++dc) {
        const double val = s.at(nr + dr, nc + dc);
        if (val > pv) { pv = val; pr = nr + dr; pc = nc + dc; }
      }
  } else {
    // unguided search: keep lags within a quarter frame, where the overlap
    // still carries enough content for the normalized score to mean anything
    const int mr = R / 4, mc = C / 4;
    for (int sr = -mr; sr <= mr; ++sr)
      for (int sc = -mc; sc <= mc; ++sc) {
        const double val = s.at(sr, sc);
        if (val > pv) { pv = val; pr = sr; pc = sc; }
      }
    if (pv <= 0) throw PeakAmbiguity("estimate_shift: no positive correlation peak");

    // Ambiguity: another >= 95% peak disconnected from the primary's lobe.
    // Flood the contiguous >= 95% region around the primary first, so a
    // broad main lobe does not trip the check on its own shoulder.
    auto idx = [&](int sr, int sc) { return std::size_t(sr + mr) * (2 * mc + 1) + (sc + mc); };
    std::vector<char> lobe(std::size_t(2 * mr + 1) * (2 * mc + 1), 0);
    std::vector<std::pair<int, int>> stack{{pr, pc}};
    lobe[idx(pr, pc)] = 1;
    while (!stack.empty()) {
      auto [sr, sc] = stack.back();
      stack.pop_back();
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int nr2 = sr + dr, nc2 = sc + dc;
          if (nr2 < -mr || nr2 > mr || nc2 < -mc || nc2 > mc || lobe[idx(nr2, nc2)]) continue;
          if (s.at(nr2, nc2) >= 0.95 * pv) {
            lobe[idx(nr2, nc2)] = 1;
            stack.push_back({nr2, nc2});
          }
        }
    }
    for (int sr = -mr; sr <= mr; ++sr)
      for (int sc = -mc; sc <= mc; ++sc)
        if (!lobe[idx(sr, sc)] && s.at(sr, sc) >= 0.95 * pv)
          throw PeakAmbiguity("estimate_shift: secondary correlation peak within 5% of primary");
  }

  PeakSearch res{double(pr), double(pc)};
  if (upsample == 1) return res;

  // Local Fourier-upsampled NCC on a +-0.75 px window (matrix DFT on the
  // three lag surfaces).
  const double half = 0.75;
  const int nup = std::max(3, int(std::lround(2 * half * upsample)) + 1);
  std::vector<double> tr(nup), tc(nup);
  for (int i = 0; i < nup; ++i) {
    tr[i] = pr - half + 2 * half * i / double(nup - 1);
    tc[i] = pc - half + 2 * half * i / double(nup - 1);
  }
  cvec er(std::size_t(nup) * PR), ec(std::size_t(PC) * nup);
  for (int i = 0; i < nup; ++i)
    for (int r = 0; r < PR; ++r)
      er[std::size_t(i) * PR + r] =
          std::polar(1.0, 2.0 * std::numbers::pi * fft::freq_index(r, PR) * tr[i] / PR);
  for (int c = 0; c < PC; ++c)
    for (int j = 0; j < nup; ++j)
      ec[std::size_t(c) * nup + j] =
          std::polar(1.0, 2.0 * std::numbers::pi * fft::freq_index(c, PC) * tc[j] / PC);

  const double norm = 1.0 / (double(PR) * PC);
  auto upsample_surface = [&](const cvec& X, std::vector<double>& out) {
    cvec t1(std::size_t(nup) * PC, cplx(0, 0));
    for (int i = 0; i < nup; ++i)
      for (int r = 0; r < PR; ++r) {
        const cplx w = er[std::size_t(i) * PR + r];
        const cplx* xr = X.data() + std::size_t(r) * PC;
        cplx* t1r = t1.data() + std::size_t(i) * PC;
        for (int c = 0; c < PC; ++c) t1r[c] += w * xr[c];
      }
    out.assign(std::size_t(nup) * nup, 0.0);
    for (int i = 0; i < nup; ++i)
      for (int j = 0; j < nup; ++j) {
        cplx acc(0, 0);
        for (int c = 0; c < PC; ++c)
          acc += t1[std::size_t(i) * PC + c] * ec[std::size_t(c) * nup + j];
        out[std::size_t(i) * nup + j] = acc.real() * norm;
      }
  };
  std::vector<double> cab_up, sb2_up, sa2_up;
  upsample_surface(s.Xab, cab_up);
  upsample_surface(s.Xbb, sb2_up);
  upsample_surface(s.Xaa, sa2_up);

  double best = -1e300;
  int bi = 0, bj = 0;
  for (int i = 0; i < nup; ++i)
    for (int j = 0; j < nup; ++j) {
      const std::size_t k = std::size_t(i) * nup + j;
      const double den = sa2_up[k] * sb2_up[k];
      if (den <= 1e-30) continue;
      const double val = cab_up[k] / std::sqrt(den);
      if (val > best) { best = val; bi = i; bj = j; }
    }
  return PeakSearch{tr[bi], tc[bj]};
}

}  // namespace detail

/// Shift of frame b relative to frame a, in µm, from the cross-correlation
/// peak with local Fourier-upsampled refinement (precision ~1/upsample px).
inline ShiftVector estimate_shift(const RawFrame& frame_a, const RawFrame& frame_b, int upsample,
                                  double pixel_um) {
  auto p = detail::xcorr_shift_px(frame_a.intensity, frame_b.intensity, upsample);
  return ShiftVector{p.col_px * pixel_um, p.row_px * pixel_um};
}

inline ShiftVector estimate_shift(const RawFrame& frame_a, const RawFrame& frame_b,
                                  const Geometry& geom, int upsample) {
  return estimate_shift(frame_a, frame_b, upsample, geom.sensor_pitch_um);
}

/// Refine all frame shifts by consecutive-pair cross-correlation, accumulated
/// from frame 0 (whose refined shift is (0,0)). Nominal shifts guide the
/// peak selection.
inline void register_dataset(std::vector<RawFrame>& frames, const Geometry& geom,
                             int upsample = 100) {
  if (frames.empty()) throw DomainError("register_dataset: empty dataset");
  frames[0].refined_shift = ShiftVector{0, 0};
  ShiftVector acc{0, 0};
  const double px = geom.sensor_pitch_um;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const ShiftVector nom = frames[i].nominal_shift - frames[i - 1].nominal_shift;
    detail::PeakSearch nom_px{nom.dy_um / px, nom.dx_um / px};
    detail::PeakSearch d;
    try {
      d = detail::xcorr_shift_px(frames[i - 1].intensity, frames[i].intensity, upsample, nom_px);
    } catch (const PeakAmbiguity& e) {
      throw PeakAmbiguity(std::string(e.what()) + " at frame " + std::to_string(i));
    }
    acc = acc + ShiftVector{d.col_px * px, d.row_px * px};
    frames[i].refined_shift = acc;
  }
}

}  // namespace tiltrecon
