#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"

using namespace tiltrecon;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Geometry cal_geom(double tilt_deg, int sensor_px) {
  Geometry g;
  g.tilt_deg = tilt_deg;
  g.axis_distance_um = 800.0;
  g.sensor_rows = sensor_px;
  g.sensor_cols = sensor_px;
  return g;
}

ComplexField cal_object(const Geometry& g, int grid, unsigned seed) {
  return ttest::disk_object(grid, grid, g.hires_pitch_um(), seed, grid * grid / 8000);
}

// Blob texture with an empty border band, so circular rolls coincide with
// true translations of the content.
RealGrid blob_texture(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(0, 1);
  RealGrid g(n, n, 1.0);
  const double margin = 0.28 * n;
  for (int b = 0; b < n; ++b) {
    const double cr = margin + ur(rng) * (n - 2 * margin);
    const double cc = margin + ur(rng) * (n - 2 * margin);
    const double rad = 2 + 4 * ur(rng), a = ur(rng);
    const int r0 = std::max(0, int(cr - 3 * rad)), r1 = std::min(n, int(cr + 3 * rad) + 1);
    const int c0 = std::max(0, int(cc - 3 * rad)), c1 = std::min(n, int(cc + 3 * rad) + 1);
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c)
        g.at(r, c) += a * std::exp(-((r - cr) * (r - cr) + (c - cc) * (c - cc)) / (2 * rad * rad));
  }
  return g;
}

}  // namespace

TEST_CASE("focus metric: constant image scores zero", "[calibration]") {
  RealGrid flat(32, 32, 3.7);
  CHECK(focus_metric(flat) == 0.0);
}

TEST_CASE("focus metric: exactly scale-invariant", "[calibration]") {
  auto img = blob_texture(48, 3);
  const double m1 = focus_metric(img);
  RealGrid scaled = img;
  for (double& x : scaled.v) x *= 37.5;
  CHECK_THAT(focus_metric(scaled), WithinRel(m1, 1e-12));
}

TEST_CASE("focus metric ranks sharp above blurred", "[calibration]") {
  const int n = 64;
  RealGrid sharp(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) sharp.at(r, c) = ((r / 4 + c / 4) % 2) ? 1.0 : 0.0;
  // Gaussian blur sigma = 2 px by separable convolution
  std::vector<double> k;
  for (int i = -6; i <= 6; ++i) k.push_back(std::exp(-i * i / (2.0 * 4.0)));
  double ks = 0;
  for (double x : k) ks += x;
  for (double& x : k) x /= ks;
  RealGrid tmp(n, n), blurred(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double s = 0;
      for (int i = -6; i <= 6; ++i) s += k[i + 6] * sharp.at(r, std::clamp(c + i, 0, n - 1));
      tmp.at(r, c) = s;
    }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double s = 0;
      for (int i = -6; i <= 6; ++i) s += k[i + 6] * tmp.at(std::clamp(r + i, 0, n - 1), c);
      blurred.at(r, c) = s;
    }
  CHECK(focus_metric(sharp) > focus_metric(blurred));
}

TEST_CASE("autofocus recovers the simulated distance", "[calibration]") {
  Geometry g = cal_geom(0.0, 192);
  auto obj = cal_object(g, fft::fast_size(192 * 3 + 160), 7);
  auto frame = simulate_measurement(obj, g, {0, 0});
  FocusSearch s{500, 1100, 10, true};
  auto res = autofocus_distance(frame, g, s);
  CHECK(!res.at_boundary);
  CHECK_THAT(res.distance_um, WithinAbs(800.0, 10.0));
}

TEST_CASE("autofocus: within one step of true d over 5 random objects", "[calibration]") {
  Geometry g = cal_geom(0.0, 192);
  for (unsigned seed : {11u, 22u, 33u, 44u, 55u}) {
    auto obj = cal_object(g, fft::fast_size(192 * 3 + 160), seed);
    auto frame = simulate_measurement(obj, g, {0, 0});
    FocusSearch s{600, 1000, 20, true};
    auto res = autofocus_distance(frame, g, s);
    CHECK_THAT(res.distance_um, WithinAbs(800.0, 20.0));
  }
}

TEST_CASE("autofocus on a tilted frame sees the walk-displaced focus", "[calibration]") {
  // content at the frame center arrives from -d*tan(theta) along x', so the
  // best focus sits near d - d*tan(theta)*tan(theta)
  Geometry g = cal_geom(5.0, 192);
  auto obj = cal_object(g, fft::fast_size(192 * 3 + 2 * 160), 9);
  auto frame = simulate_measurement(obj, g, {0, 0});
  FocusSearch s{500, 1100, 10, true};
  auto res = autofocus_distance(frame, g, s);
  const double walk = g.axis_distance_um * std::tan(g.tilt_rad());
  CHECK_THAT(res.distance_um, WithinAbs(800.0 - walk * std::tan(g.tilt_rad()), 15.0));
}

TEST_CASE("autofocus: flat field has no focus signal", "[calibration]") {
  Geometry g = cal_geom(0.0, 64);
  RawFrame flat;
  flat.intensity = RealGrid(64, 64, 9.0);
  FocusSearch s{500, 1100, 25, true};
  CHECK_THROWS_AS(autofocus_distance(flat, g, s), NoFocusSignal);
}

TEST_CASE("autofocus: search grid missing true d returns boundary with flag", "[calibration]") {
  Geometry g = cal_geom(0.0, 192);
  auto obj = cal_object(g, fft::fast_size(192 * 3 + 160), 7);
  auto frame = simulate_measurement(obj, g, {0, 0});
  FocusSearch s{500, 700, 20, true};
  auto res = autofocus_distance(frame, g, s);
  CHECK(res.at_boundary);
  CHECK_THAT(res.distance_um, WithinAbs(700.0, 1e-12));
}

namespace {

// Tilt estimation wants the sharp-focus regime: a short axis distance and
// full-height slab windows at the far sides of a wide sensor.
Geometry tilt_geom(double tilt_deg) {
  Geometry g = cal_geom(tilt_deg, 512);
  g.axis_distance_um = 300.0;
  return g;
}
const Rect kTiltWinA{0, 8, 512, 128};
const Rect kTiltWinB{0, 376, 512, 128};
const FocusSearch kTiltSearch{220, 380, 2, true};

}  // namespace

TEST_CASE("tilt estimation from two window focus distances", "[calibration]") {
  Geometry g = tilt_geom(5.0);
  auto obj = cal_object(g, fft::fast_size(512 * 3 + 2 * 200), 17);
  auto frame = simulate_measurement(obj, g, {0, 0});
  const double th = estimate_tilt_angle(frame, g, kTiltWinA, kTiltWinB, kTiltSearch);
  CHECK_THAT(th, WithinAbs(5.0, 0.2));
}

TEST_CASE("tilt estimation: error <= 0.2 deg over 5 random objects", "[calibration]") {
  Geometry g = tilt_geom(5.0);
  for (unsigned seed : {101u, 202u, 303u, 404u, 505u}) {
    auto obj = cal_object(g, fft::fast_size(512 * 3 + 2 * 200), seed);
    auto frame = simulate_measurement(obj, g, {0, 0});
    CHECK_THAT(estimate_tilt_angle(frame, g, kTiltWinA, kTiltWinB, kTiltSearch),
               WithinAbs(5.0, 0.2));
  }
}

TEST_CASE("tilt estimation at zero tilt", "[calibration]") {
  Geometry g = tilt_geom(0.0);
  auto obj = cal_object(g, fft::fast_size(512 * 3 + 2 * 200), 23);
  auto frame = simulate_measurement(obj, g, {0, 0});
  CHECK_THAT(estimate_tilt_angle(frame, g, kTiltWinA, kTiltWinB, kTiltSearch),
             WithinAbs(0.0, 0.1));
}

TEST_CASE("tilt estimation rejects windows that are too close", "[calibration]") {
  Geometry g = cal_geom(5.0, 128);
  RawFrame frame;
  frame.intensity = blob_texture(128, 5);
  Rect wa{32, 30, 48, 48}, wb{32, 40, 48, 48};
  FocusSearch s{700, 900, 10, true};
  CHECK_THROWS_AS(estimate_tilt_angle(frame, g, wa, wb, s), DomainError);  // overlap
  Rect wc{32, 79, 48, 48};  // disjoint but centers 49 px apart
  CHECK_THROWS_AS(estimate_tilt_angle(frame, g, wa, wc, s), DegenerateGeometry);
}

TEST_CASE("estimate_shift: identical frames give zero", "[calibration]") {
  RawFrame a, b;
  a.intensity = blob_texture(96, 31);
  b.intensity = a.intensity;
  auto s = estimate_shift(a, b, 100, 1.67);
  CHECK_THAT(s.dx_um, WithinAbs(0.0, 1e-9));
  CHECK_THAT(s.dy_um, WithinAbs(0.0, 1e-9));
}

TEST_CASE("estimate_shift: circular roll oracle", "[calibration]") {
  RawFrame a, b;
  a.intensity = blob_texture(96, 37);
  b.intensity = roll(a.intensity, -3, 5);  // content moves (+5, -3) in (x, y)
  auto s = estimate_shift(a, b, 100, 1.67);
  CHECK_THAT(s.dx_um / 1.67, WithinAbs(5.0, 0.01));
  CHECK_THAT(s.dy_um / 1.67, WithinAbs(-3.0, 0.01));
}

TEST_CASE("estimate_shift: sub-pixel Fourier-shift oracle at 20 dB", "[calibration]") {
  RawFrame a, b;
  a.intensity = blob_texture(96, 41);
  // content moves +2.30 px in x: sample at x - 2.30, i.e. fourier_shift by -2.30
  ComplexField wrap(96, 96, 1.0, 1.0);
  for (std::size_t i = 0; i < wrap.v.size(); ++i) wrap.v[i] = a.intensity.v[i];
  auto shifted = fourier_shift(wrap, {-2.30, 0.0});
  b.intensity = RealGrid(96, 96);
  for (std::size_t i = 0; i < b.intensity.v.size(); ++i) b.intensity.v[i] = shifted.v[i].real();

  // 20 dB SNR: noise std = signal std / 10
  double mean = a.intensity.sum() / a.intensity.size();
  double var = 0;
  for (double x : a.intensity.v) var += (x - mean) * (x - mean);
  var /= a.intensity.size();
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0.0, std::sqrt(var) / 10.0);
  for (double& x : b.intensity.v) x += nd(rng);

  auto s = estimate_shift(a, b, 100, 1.67);
  CHECK_THAT(s.dx_um / 1.67, WithinAbs(2.30, 0.05));
  CHECK_THAT(s.dy_um / 1.67, WithinAbs(0.0, 0.05));
}

TEST_CASE("estimate_shift antisymmetry", "[calibration]") {
  RawFrame a, b;
  a.intensity = blob_texture(96, 43);
  ComplexField wrap(96, 96, 1.0, 1.0);
  for (std::size_t i = 0; i < wrap.v.size(); ++i) wrap.v[i] = a.intensity.v[i];
  auto shifted = fourier_shift(wrap, {-1.7, 0.8});
  b.intensity = RealGrid(96, 96);
  for (std::size_t i = 0; i < b.intensity.v.size(); ++i) b.intensity.v[i] = shifted.v[i].real();
  const int up = 50;
  auto sab = estimate_shift(a, b, up, 1.0);
  auto sba = estimate_shift(b, a, up, 1.0);
  CHECK_THAT(sab.dx_um + sba.dx_um, WithinAbs(0.0, 1.0 / up));
  CHECK_THAT(sab.dy_um + sba.dy_um, WithinAbs(0.0, 1.0 / up));
}

TEST_CASE("estimate_shift: periodic pattern is ambiguous", "[calibration]") {
  RawFrame a, b;
  const int n = 96;
  a.intensity = RealGrid(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a.intensity.at(r, c) = (c / 8) % 2 ? 1.0 : 0.0;
  b.intensity = roll(a.intensity, 0, 16);  // one full period
  CHECK_THROWS_AS(estimate_shift(a, b, 8, 1.0), PeakAmbiguity);
}

TEST_CASE("register_dataset recovers true shifts at zero tilt", "[calibration]") {
  Geometry g = cal_geom(0.0, 64);
  auto obj = cal_object(g, fft::fast_size(400), 51);
  std::vector<ShiftVector> shifts;
  for (int j = 0; j < 6; ++j) shifts.push_back({11.0 * j, 4.0 * j});
  auto frames = simulate_dataset(obj, g, shifts);
  register_dataset(frames, g, 100);

  CHECK(frames[0].refined_shift->dx_um == 0.0);
  double rms = 0;
  for (std::size_t j = 0; j < frames.size(); ++j) {
    const double ex = (frames[j].refined_shift->dx_um - shifts[j].dx_um) / g.sensor_pitch_um;
    const double ey = (frames[j].refined_shift->dy_um - shifts[j].dy_um) / g.sensor_pitch_um;
    rms += ex * ex + ey * ey;
  }
  rms = std::sqrt(rms / (2.0 * frames.size()));
  CHECK(rms <= 0.1);
}

TEST_CASE("register_dataset: single frame gets zero refined shift", "[calibration]") {
  RawFrame f;
  f.intensity = blob_texture(64, 61);
  std::vector<RawFrame> frames{f};
  Geometry g = cal_geom(0.0, 64);
  register_dataset(frames, g, 10);
  CHECK(frames[0].refined_shift->dx_um == 0.0);
  CHECK(frames[0].refined_shift->dy_um == 0.0);
}

TEST_CASE("register_dataset: reversed linear scan negates the accumulation", "[calibration]") {
  Geometry g = cal_geom(0.0, 64);
  auto obj = cal_object(g, fft::fast_size(400), 71);
  std::vector<ShiftVector> shifts;
  for (int j = 0; j < 5; ++j) shifts.push_back({9.0 * j, 0.0});
  auto frames = simulate_dataset(obj, g, shifts);
  register_dataset(frames, g, 50);

  auto rev = frames;
  std::reverse(rev.begin(), rev.end());
  for (std::size_t j = 0; j < rev.size(); ++j) rev[j].index = int(j);
  register_dataset(rev, g, 50);

  for (std::size_t j = 0; j < frames.size(); ++j) {
    CHECK_THAT(rev[j].refined_shift->dx_um,
               WithinAbs(-frames[j].refined_shift->dx_um, 0.1 * g.sensor_pitch_um));
  }
}
