#pragma once

#include <string>
#include <vector>

#include "tiltrecon/calibration.hpp"
#include "tiltrecon/field_ops.hpp"
#include "tiltrecon/grid.hpp"

namespace tiltrecon {

struct StitchTile {
  RealGrid image;            // amplitude
  ShiftVector nominal_offset_um;  // tile origin relative to the mosaic origin
};

struct StitchResult {
  RealGrid mosaic;
  std::vector<ShiftVector> refined_offsets_um;
  std::vector<std::string> warnings;
};

/// Assemble overlapping tiles into one grid: refine each tile's offset
/// against an already-placed neighbor by cross-correlation on the overlap,
/// then place with a linear feather blend. A PeakAmbiguity on an overlap
/// falls back to the nominal offset with a warning.
inline StitchResult stitch_grid(const std::vector<StitchTile>& tiles, double pitch_um,
                                int upsample = 16) {
  if (tiles.empty()) throw DomainError("stitch_grid: no tiles");
  if (pitch_um <= 0) throw DomainError("stitch_grid: pitch must be positive");

  StitchResult out;
  std::vector<ShiftVector> off(tiles.size());
  off[0] = tiles[0].nominal_offset_um;
  out.refined_offsets_um.resize(tiles.size());
  out.refined_offsets_um[0] = off[0];

  auto overlap_rect = [&](int i, int k, Rect& ri, Rect& rk) {
    // overlap in pixel coordinates between tile i (refined) and tile k (nominal)
    const double ix0 = off[i].dx_um / pitch_um, iy0 = off[i].dy_um / pitch_um;
    const double kx0 = tiles[k].nominal_offset_um.dx_um / pitch_um;
    const double ky0 = tiles[k].nominal_offset_um.dy_um / pitch_um;
    const int x0 = int(std::ceil(std::max(ix0, kx0)));
    const int y0 = int(std::ceil(std::max(iy0, ky0)));
    const int x1 = int(std::floor(std::min(ix0 + tiles[i].image.cols, kx0 + tiles[k].image.cols)));
    const int y1 = int(std::floor(std::min(iy0 + tiles[i].image.rows, ky0 + tiles[k].image.rows)));
    if (x1 - x0 < 16 || y1 - y0 < 16) return 0L;
    ri = Rect{y0 - int(iy0), x0 - int(ix0), y1 - y0, x1 - x0};
    rk = Rect{y0 - int(ky0), x0 - int(kx0), y1 - y0, x1 - x0};
    return (long)(x1 - x0) * (y1 - y0);
  };

  for (std::size_t k = 1; k < tiles.size(); ++k) {
    long best_area = 0;
    std::size_t best_i = 0;
    Rect ri{}, rk{};
    for (std::size_t i = 0; i < k; ++i) {
      Rect a{}, b{};
      const long area = overlap_rect(int(i), int(k), a, b);
      if (area > best_area) { best_area = area; best_i = i; ri = a; rk = b; }
    }
    if (best_area == 0) {
      out.warnings.push_back("tile " + std::to_string(k) + ": no usable overlap, nominal offset kept");
      off[k] = tiles[k].nominal_offset_um;
      out.refined_offsets_um[k] = off[k];
      continue;
    }
    RealGrid wa = crop(tiles[best_i].image, ri.row0, ri.col0, ri.rows, ri.cols);
    RealGrid wb = crop(tiles[k].image, rk.row0, rk.col0, rk.rows, rk.cols);
    try {
      // wb = wa content moved by -e when tile k's true offset is nominal + e,
      // so the measured displacement enters with a minus sign
      auto d = detail::xcorr_shift_px(wa, wb, upsample);
      off[k] = tiles[k].nominal_offset_um -
               ShiftVector{d.col_px * pitch_um, d.row_px * pitch_um};
    } catch (const PeakAmbiguity&) {
      out.warnings.push_back("tile " + std::to_string(k) + ": ambiguous overlap, nominal offset kept");
      off[k] = tiles[k].nominal_offset_um;
    }
    out.refined_offsets_um[k] = off[k];
  }

  double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
  std::vector<int> px(tiles.size()), py(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    px[i] = int(std::lround(off[i].dx_um / pitch_um));
    py[i] = int(std::lround(off[i].dy_um / pitch_um));
    minx = std::min(minx, double(px[i]));
    miny = std::min(miny, double(py[i]));
    maxx = std::max(maxx, double(px[i] + tiles[i].image.cols));
    maxy = std::max(maxy, double(py[i] + tiles[i].image.rows));
  }
  RealGrid acc(int(maxy - miny), int(maxx - minx), 0.0);
  RealGrid wsum(acc.rows, acc.cols, 0.0);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const RealGrid& t = tiles[i].image;
    const int r0 = py[i] - int(miny), c0 = px[i] - int(minx);
    for (int r = 0; r < t.rows; ++r)
      for (int c = 0; c < t.cols; ++c) {
        const double w = std::min(std::min(r + 1, t.rows - r), std::min(c + 1, t.cols - c));
        acc.at(r0 + r, c0 + c) += w * t.at(r, c);
        wsum.at(r0 + r, c0 + c) += w;
      }
  }
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (wsum.v[i] > 0) acc.v[i] /= wsum.v[i];
  out.mosaic = std::move(acc);
  return out;
}

}  // namespace tiltrecon
