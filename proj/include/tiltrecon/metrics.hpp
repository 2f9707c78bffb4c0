#pragma once

#include <string>
#include <vector>

#include "tiltrecon/field_ops.hpp"
#include "tiltrecon/forward_sim.hpp"
#include "tiltrecon/grid.hpp"

namespace tiltrecon {

/// Reconstruction quality report.
struct Report {
  double amplitude_correlation = 0.0;
  double phase_rmse_rad = 0.0;
  bool linear_ramp_removed = false;
  std::vector<std::pair<double, double>> bar_contrast;  // linewidth µm -> Michelson contrast
  std::vector<double> per_iteration_error;
  double wall_seconds = 0.0;
};

/// Michelson contrast (max-min)/(max+min) of a 1D profile.
inline double michelson_contrast(const std::vector<double>& profile) {
  if (profile.empty()) return 0.0;
  double mn = profile[0], mx = profile[0];
  for (double x : profile) { mn = std::min(mn, x); mx = std::max(mx, x); }
  if (mx + mn <= 0) return 0.0;
  return std::min(1.0, std::max(0.0, (mx - mn) / (mx + mn)));
}

/// Amplitude profile along columns [col0, col1), row-averaged over
/// [row0, row1).
inline std::vector<double> bar_profile(const RealGrid& amp, const BarSpec& s) {
  std::vector<double> prof;
  const int c0 = std::max(0, s.col0), c1 = std::min(amp.cols, s.col1);
  const int r0 = std::max(0, s.row0), r1 = std::min(amp.rows, s.row1);
  if (c1 <= c0 || r1 <= r0) return prof;
  prof.reserve(c1 - c0);
  for (int c = c0; c < c1; ++c) {
    double acc = 0;
    for (int r = r0; r < r1; ++r) acc += amp.at(r, c);
    prof.push_back(acc / (r1 - r0));
  }
  return prof;
}

namespace detail {

inline double wrap_pi(double x) {
  while (x > std::numbers::pi) x -= 2 * std::numbers::pi;
  while (x < -std::numbers::pi) x += 2 * std::numbers::pi;
  return x;
}

}  // namespace detail

/// Compare a reconstruction against ground truth over their common top-left
/// overlap (callers align the grids): Pearson correlation of amplitudes and
/// magnitude-weighted phase RMSE after removing the best global phase (and
/// optionally a linear phase ramp). Bar groups, when given in overlap
/// coordinates, get a Michelson contrast each.
inline Report compute_metrics(const ComplexField& recon, const ComplexField& truth,
                              const std::vector<BarSpec>& bar_specs = {},
                              bool remove_linear_ramp = false) {
  if (std::abs(recon.pitch_x_um - truth.pitch_x_um) > 1e-9 * truth.pitch_x_um ||
      std::abs(recon.pitch_y_um - truth.pitch_y_um) > 1e-9 * truth.pitch_y_um)
    throw DomainError("compute_metrics: pitch mismatch");
  const int rows = std::min(recon.rows, truth.rows);
  const int cols = std::min(recon.cols, truth.cols);
  if (rows < 64 || cols < 64) throw DomainError("compute_metrics: overlap below 64x64 samples");

  Report rep;
  rep.linear_ramp_removed = remove_linear_ramp;

  // amplitude correlation
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  const std::size_t n = std::size_t(rows) * cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double x = std::abs(recon.at(r, c));
      const double y = std::abs(truth.at(r, c));
      sa += x; sb += y; saa += x * x; sbb += y * y; sab += x * y;
    }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double va = saa / n - (sa / n) * (sa / n);
  const double vb = sbb / n - (sb / n) * (sb / n);
  rep.amplitude_correlation = (va > 0 && vb > 0) ? cov / std::sqrt(va * vb) : 0.0;

  // phase difference field, weighted by |recon|*|truth|
  std::vector<double> dphi(n), wgt(n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const cplx p = recon.at(r, c) * std::conj(truth.at(r, c));
      dphi[std::size_t(r) * cols + c] = std::arg(p);
      wgt[std::size_t(r) * cols + c] = std::abs(p);
    }

  double ramp_x = 0, ramp_y = 0;
  if (remove_linear_ramp) {
    // slope from magnitude-weighted wrapped phase differences
    double sx = 0, wx = 0, sy = 0, wy = 0;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c + 1 < cols; ++c) {
        const std::size_t i = std::size_t(r) * cols + c;
        const double w = std::min(wgt[i], wgt[i + 1]);
        sx += w * detail::wrap_pi(dphi[i + 1] - dphi[i]);
        wx += w;
      }
    for (int r = 0; r + 1 < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = std::size_t(r) * cols + c;
        const double w = std::min(wgt[i], wgt[i + cols]);
        sy += w * detail::wrap_pi(dphi[i + cols] - dphi[i]);
        wy += w;
      }
    ramp_x = wx > 0 ? sx / wx : 0;
    ramp_y = wy > 0 ? sy / wy : 0;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        dphi[std::size_t(r) * cols + c] =
            detail::wrap_pi(dphi[std::size_t(r) * cols + c] - ramp_x * c - ramp_y * r);
  }

  cplx mean_rot(0, 0);
  for (std::size_t i = 0; i < n; ++i) mean_rot += wgt[i] * std::polar(1.0, dphi[i]);
  const double phi0 = std::arg(mean_rot);
  double se = 0, sw = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = detail::wrap_pi(dphi[i] - phi0);
    se += wgt[i] * e * e;
    sw += wgt[i];
  }
  rep.phase_rmse_rad = sw > 0 ? std::sqrt(se / sw) : 0.0;

  if (!bar_specs.empty()) {
    RealGrid amp(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) amp.at(r, c) = std::abs(recon.at(r, c));
    for (const auto& s : bar_specs)
      rep.bar_contrast.emplace_back(s.linewidth_um, michelson_contrast(bar_profile(amp, s)));
  }
  return rep;
}

}  // namespace tiltrecon
