#pragma once

#include <random>

#include "tiltrecon/tiltrecon.hpp"

namespace ttest {

using namespace tiltrecon;

inline ComplexField random_field(int rows, int cols, double pitch, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  ComplexField f(rows, cols, pitch, pitch);
  for (auto& z : f.v) z = cplx(ur(rng), ur(rng));
  return f;
}

/// Random field whose spectrum is confined to |k| <= frac * k_nyquist
/// (per-axis box), for tests that need smooth band-limited content.
inline ComplexField random_bandlimited_field(int rows, int cols, double pitch, double frac,
                                             unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  cvec spec(std::size_t(rows) * cols, cplx(0, 0));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double fy = std::abs(double(fft::freq_index(r, rows))) / (rows / 2.0);
      const double fx = std::abs(double(fft::freq_index(c, cols))) / (cols / 2.0);
      if (fx <= frac && fy <= frac) spec[std::size_t(r) * cols + c] = cplx(ur(rng), ur(rng));
    }
  ComplexField f(rows, cols, pitch, pitch);
  fft::dft2(rows, cols, spec.data(), f.v.data(), true);
  return f;
}

/// Smooth spatially-localized field: a few Gaussian blobs with mild linear
/// phase carriers, zero near the grid border. Its spectrum is smooth and
/// band-limited to roughly carrier_frac of Nyquist.
inline ComplexField smooth_blob_field(int rows, int cols, double pitch, double carrier_frac,
                                      unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(0.0, 1.0);
  ComplexField f(rows, cols, pitch, pitch);
  const double knyq = std::numbers::pi / pitch;
  for (int b = 0; b < 6; ++b) {
    const double cr = rows * (0.35 + 0.3 * ur(rng));
    const double cc = cols * (0.35 + 0.3 * ur(rng));
    const double w = std::min(rows, cols) * (0.03 + 0.03 * ur(rng));
    const double kcx = (ur(rng) - 0.5) * carrier_frac * knyq;
    const double kcy = (ur(rng) - 0.5) * carrier_frac * knyq;
    const double amp = 0.3 + ur(rng);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        f.at(r, c) += amp * std::exp(-d2 / (2 * w * w)) *
                      std::polar(1.0, kcx * c * pitch + kcy * r * pitch);
      }
  }
  return f;
}

/// Scatter of sharp-edged absorbing disks on a unit background, optionally
/// with per-disk phase: a blood-smear-like target with strong focus signal.
inline ComplexField disk_object(int rows, int cols, double pitch, unsigned seed, int count,
                                double amp_floor = 0.25, double phase_rad = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(0, 1);
  ComplexField f(rows, cols, pitch, pitch, cplx(1, 0));
  for (int b = 0; b < count; ++b) {
    const double cr = ur(rng) * rows, cc = ur(rng) * cols;
    const double rad = (3.0 + 5.0 * ur(rng)) / pitch;
    const double ph = (ur(rng) - 0.5) * 2.0 * phase_rad;
    const int r0 = std::max(0, int(cr - rad - 2)), r1 = std::min(rows, int(cr + rad + 3));
    const int c0 = std::max(0, int(cc - rad - 2)), c1 = std::min(cols, int(cc + rad + 3));
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        const double d = std::sqrt((r - cr) * (r - cr) + (c - cc) * (c - cc));
        const double cov = std::clamp(rad - d + 0.5, 0.0, 1.0);
        const cplx cur = f.at(r, c);
        f.at(r, c) = cur * (1.0 - cov * (1.0 - amp_floor)) * std::polar(1.0, cov * ph);
      }
  }
  return f;
}

inline double rel_l2(const ComplexField& a, const ComplexField& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    num += std::norm(a.v[i] - b.v[i]);
    den += std::norm(b.v[i]);
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double rel_l2(const RealGrid& a, const RealGrid& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    num += d * d;
    den += b.v[i] * b.v[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double pearson(const RealGrid& a, const RealGrid& b) {
  const std::size_t n = a.v.size();
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a.v[i]; sb += b.v[i];
    saa += a.v[i] * a.v[i]; sbb += b.v[i] * b.v[i];
    sab += a.v[i] * b.v[i];
  }
  const double cov = sab / n - sa / n * sb / n;
  const double va = saa / n - sa / n * sa / n;
  const double vb = sbb / n - sb / n * sb / n;
  return cov / std::sqrt(va * vb);
}

/// Closed-loop comparison helper: crops the reconstructed object at the
/// frame-0 footprint (minus a border), finds the best small integer
/// alignment against the truth grid, and returns the aligned pair.
struct AlignedPair {
  ComplexField recon;
  ComplexField truth;
  int truth_row0 = 0, truth_col0 = 0;  // origin of the truth crop in truth coords
};

inline AlignedPair align_to_truth(const ReconResult& res, const ComplexField& truth,
                                  int border_px, ShiftVector frame0_nominal = {},
                                  int search_px = 8) {
  const Geometry& g = res.geometry_used;
  const int F_r = g.sensor_rows * g.upsample_factor;
  const int F_c = g.sensor_cols * g.upsample_factor;
  const int rr = F_r - 2 * border_px, cc = F_c - 2 * border_px;
  ComplexField rec = crop(res.object, res.window_row0 + border_px, res.window_col0 + border_px,
                          rr, cc);
  // The W window is anchored to frame 0's footprint: the object region at
  // minus frame 0's absolute (nominal) shift from the grid-centered footprint.
  const double hp = g.hires_pitch_um();
  const int t_r0 = (truth.rows - F_r) / 2 + border_px - int(std::lround(frame0_nominal.dy_um / hp));
  const int t_c0 = (truth.cols - F_c) / 2 + border_px - int(std::lround(frame0_nominal.dx_um / hp));

  RealGrid ra = rec.amplitude();
  double best = -2.0;
  int br = 0, bc = 0;
  for (int dr = -search_px; dr <= search_px; dr += 2)
    for (int dc = -search_px; dc <= search_px; dc += 2) {
      RealGrid ta = crop(truth, t_r0 + dr, t_c0 + dc, rr, cc).amplitude();
      const double p = pearson(ra, ta);
      if (p > best) { best = p; br = dr; bc = dc; }
    }
  // refine the even-step scan
  for (int dr = br - 1; dr <= br + 1; ++dr)
    for (int dc = bc - 1; dc <= bc + 1; ++dc) {
      RealGrid ta = crop(truth, t_r0 + dr, t_c0 + dc, rr, cc).amplitude();
      const double p = pearson(ra, ta);
      if (p > best) { best = p; br = dr; bc = dc; }
    }
  AlignedPair out;
  out.recon = std::move(rec);
  out.truth = crop(truth, t_r0 + br, t_c0 + bc, rr, cc);
  out.truth_row0 = t_r0 + br;
  out.truth_col0 = t_c0 + bc;
  return out;
}

}  // namespace ttest
