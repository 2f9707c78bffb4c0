#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tiltrecon/forward_sim.hpp"
#include "tiltrecon/grid.hpp"

namespace tiltrecon {

namespace fs = std::filesystem;

struct ManifestFrameEntry {
  int index = 0;
  std::string file;
  double scale = 1.0;  // intensity = pgm value * scale
  ShiftVector nominal;
  std::optional<ShiftVector> refined;
};

struct DatasetManifest {
  int version = 1;
  Geometry geometry;
  std::vector<ManifestFrameEntry> entries;
};

namespace detail {

inline void atomic_write(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IntegrityError("cannot open for writing: " + tmp.string());
    os.write(bytes.data(), std::streamsize(bytes.size()));
    if (!os) throw IntegrityError("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_all(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples per the PGM
/// convention).
inline void write_pgm16(const fs::path& path, const std::vector<std::uint16_t>& px, int rows,
                        int cols) {
  std::string bytes = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n65535\n";
  bytes.reserve(bytes.size() + px.size() * 2);
  for (std::uint16_t v : px) {
    bytes.push_back(char(v >> 8));
    bytes.push_back(char(v & 0xff));
  }
  detail::atomic_write(path, bytes);
}

inline std::vector<std::uint16_t> read_pgm16(const fs::path& path, int& rows, int& cols) {
  const std::string bytes = detail::read_all(path);
  std::istringstream is(bytes);
  std::string magic;
  int maxval = 0;
  is >> magic;
  if (magic != "P5") throw ParseError(path.string() + ": not a binary PGM");
  // skip comments between tokens
  auto next_int = [&](int& out) {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') { std::string rest; std::getline(is, rest); continue; }
      out = std::stoi(tok);
      return;
    }
    throw ParseError(path.string() + ": truncated PGM header");
  };
  next_int(cols);
  next_int(rows);
  next_int(maxval);
  if (maxval != 65535) throw ParseError(path.string() + ": expected 16-bit PGM (maxval 65535)");
  const std::size_t off = std::size_t(is.tellg()) + 1;  // single whitespace after maxval
  const std::size_t n = std::size_t(rows) * cols;
  if (bytes.size() < off + 2 * n) throw ParseError(path.string() + ": truncated PGM data");
  std::vector<std::uint16_t> px(n);
  for (std::size_t i = 0; i < n; ++i)
    px[i] = std::uint16_t((std::uint8_t(bytes[off + 2 * i]) << 8) | std::uint8_t(bytes[off + 2 * i + 1]));
  return px;
}

/// Write frames + manifest. Intensities are quantized to 16 bits with a
/// per-frame scale recorded in the manifest; loading returns exactly the
/// quantized values, so save/load round trips are bit-exact.
inline DatasetManifest save_dataset(const std::vector<RawFrame>& frames, const Geometry& geom,
                                    const fs::path& dir) {
  if (frames.empty()) throw DomainError("save_dataset: empty dataset");
  geom.validate();
  fs::create_directories(dir);

  DatasetManifest man;
  man.geometry = geom;
  std::ostringstream ms;
  ms << "tiltrecon-dataset v1\n";
  ms << "wavelength_um = " << detail::fmt_g17(geom.wavelength_um) << "\n";
  ms << "tilt_deg = " << detail::fmt_g17(geom.tilt_deg) << "\n";
  ms << "axis_distance_um = " << detail::fmt_g17(geom.axis_distance_um) << "\n";
  ms << "sensor_pitch_um = " << detail::fmt_g17(geom.sensor_pitch_um) << "\n";
  ms << "upsample_factor = " << geom.upsample_factor << "\n";
  ms << "sensor_rows = " << geom.sensor_rows << "\n";
  ms << "sensor_cols = " << geom.sensor_cols << "\n";
  ms << "frames = " << frames.size() << "\n";

  for (const auto& f : frames) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", f.index);
    const double mx = f.intensity.max_value();
    const double scale = mx > 0 ? mx / 65535.0 : 1.0;
    std::vector<std::uint16_t> px(f.intensity.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double q = std::round(std::max(0.0, f.intensity.v[i]) / scale);
      px[i] = std::uint16_t(std::min(q, 65535.0));
    }
    write_pgm16(dir / name, px, f.intensity.rows, f.intensity.cols);

    ManifestFrameEntry e;
    e.index = f.index;
    e.file = name;
    e.scale = scale;
    e.nominal = f.nominal_shift;
    e.refined = f.refined_shift;
    man.entries.push_back(e);

    ms << "frame " << f.index << " " << name << " scale " << detail::fmt_g17(scale) << " nominal "
       << detail::fmt_g17(f.nominal_shift.dx_um) << " " << detail::fmt_g17(f.nominal_shift.dy_um);
    if (f.refined_shift)
      ms << " refined " << detail::fmt_g17(f.refined_shift->dx_um) << " "
         << detail::fmt_g17(f.refined_shift->dy_um);
    ms << "\n";
  }
  detail::atomic_write(dir / "manifest.txt", ms.str());
  return man;
}

inline DatasetManifest parse_manifest(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.txt";
  if (!fs::exists(mpath)) throw IntegrityError("missing manifest: " + mpath.string());
  std::istringstream is(detail::read_all(mpath));
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError(mpath.string() + ":" + std::to_string(lineno) + ": " + msg);
  };

  DatasetManifest man;
  if (!std::getline(is, line)) fail("empty manifest");
  ++lineno;
  if (line != "tiltrecon-dataset v1") fail("unknown format/version line: '" + line + "'");

  int declared_frames = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frame") {
      ManifestFrameEntry e;
      std::string kw;
      if (!(ls >> e.index >> e.file >> kw) || kw != "scale") fail("bad frame line");
      if (!(ls >> e.scale >> kw) || kw != "nominal") fail("bad frame line (scale/nominal)");
      if (!(ls >> e.nominal.dx_um >> e.nominal.dy_um)) fail("bad nominal shift");
      if (ls >> kw) {
        if (kw != "refined") fail("unexpected token '" + kw + "'");
        ShiftVector r;
        if (!(ls >> r.dx_um >> r.dy_um)) fail("bad refined shift");
        e.refined = r;
      }
      man.entries.push_back(e);
    } else {
      std::string eq;
      double val;
      if (!(ls >> eq >> val) || eq != "=") fail("bad key/value line for '" + key + "'");
      if (key == "wavelength_um") man.geometry.wavelength_um = val;
      else if (key == "tilt_deg") man.geometry.tilt_deg = val;
      else if (key == "axis_distance_um") man.geometry.axis_distance_um = val;
      else if (key == "sensor_pitch_um") man.geometry.sensor_pitch_um = val;
      else if (key == "upsample_factor") man.geometry.upsample_factor = int(val);
      else if (key == "sensor_rows") man.geometry.sensor_rows = int(val);
      else if (key == "sensor_cols") man.geometry.sensor_cols = int(val);
      else if (key == "frames") declared_frames = int(val);
      else fail("unknown key '" + key + "'");
    }
  }
  if (declared_frames >= 0 && declared_frames != int(man.entries.size()))
    throw IntegrityError(mpath.string() + ": declared " + std::to_string(declared_frames) +
                         " frames, found " + std::to_string(man.entries.size()));

  // indices must be unique and contiguous from 0
  std::vector<bool> seen(man.entries.size(), false);
  for (const auto& e : man.entries) {
    if (e.index < 0 || e.index >= int(man.entries.size()) || seen[e.index])
      throw IntegrityError(mpath.string() + ": frame indices must be unique and contiguous from 0");
    seen[e.index] = true;
  }
  return man;
}

inline std::pair<std::vector<RawFrame>, Geometry> load_dataset(const fs::path& dir) {
  DatasetManifest man = parse_manifest(dir);
  man.geometry.validate();
  std::vector<RawFrame> frames(man.entries.size());
  for (const auto& e : man.entries) {
    const fs::path fpath = dir / e.file;
    if (!fs::exists(fpath)) throw IntegrityError("manifest references missing file: " + fpath.string());
    int rows = 0, cols = 0;
    const auto px = read_pgm16(fpath, rows, cols);
    if (rows != man.geometry.sensor_rows || cols != man.geometry.sensor_cols)
      throw IntegrityError(fpath.string() + ": dims do not match manifest geometry");
    RawFrame f;
    f.index = e.index;
    f.nominal_shift = e.nominal;
    f.refined_shift = e.refined;
    f.intensity = RealGrid(rows, cols);
    for (std::size_t i = 0; i < px.size(); ++i) f.intensity.v[i] = px[i] * e.scale;
    frames[e.index] = std::move(f);
  }
  return {std::move(frames), man.geometry};
}

/// Write a complex field as raw little-endian float32 amplitude and phase
/// planes (row-major) plus a text sidecar and 16-bit preview PGMs.
inline void save_field(const ComplexField& f, const fs::path& path_prefix) {
  f.validate("save_field");
  static_assert(std::endian::native == std::endian::little,
                "raw float planes are defined little-endian");
  const std::size_t n = f.size();
  std::vector<float> amp(n), ph(n);
  for (std::size_t i = 0; i < n; ++i) {
    amp[i] = float(std::abs(f.v[i]));
    ph[i] = float(std::arg(f.v[i]));
  }
  auto write_raw = [&](const fs::path& p, const std::vector<float>& data) {
    std::string bytes(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
    detail::atomic_write(p, bytes);
  };
  const std::string prefix = path_prefix.string();
  write_raw(prefix + ".amp.f32", amp);
  write_raw(prefix + ".phase.f32", ph);

  std::ostringstream meta;
  meta << "tiltrecon-field v1\n";
  meta << "rows = " << f.rows << "\n";
  meta << "cols = " << f.cols << "\n";
  meta << "pitch_x_um = " << detail::fmt_g17(f.pitch_x_um) << "\n";
  meta << "pitch_y_um = " << detail::fmt_g17(f.pitch_y_um) << "\n";
  detail::atomic_write(prefix + ".meta.txt", meta.str());

  // previews: amplitude min/max-scaled, phase mapped from [-pi, pi]
  float amn = amp[0], amx = amp[0];
  for (float a : amp) { amn = std::min(amn, a); amx = std::max(amx, a); }
  const double arange = amx > amn ? double(amx) - double(amn) : 1.0;
  std::vector<std::uint16_t> apx(n), ppx(n);
  for (std::size_t i = 0; i < n; ++i) {
    apx[i] = std::uint16_t(std::lround((amp[i] - amn) / arange * 65535.0));
    ppx[i] = std::uint16_t(std::lround((ph[i] + std::numbers::pi) / (2 * std::numbers::pi) * 65535.0));
  }
  write_pgm16(prefix + ".amp.pgm", apx, f.rows, f.cols);
  write_pgm16(prefix + ".phase.pgm", ppx, f.rows, f.cols);
}

inline ComplexField load_field(const fs::path& path_prefix) {
  const std::string prefix = path_prefix.string();
  std::istringstream is(detail::read_all(prefix + ".meta.txt"));
  std::string line;
  if (!std::getline(is, line) || line != "tiltrecon-field v1")
    throw ParseError(prefix + ".meta.txt: unknown format/version line");
  int rows = 0, cols = 0;
  double px = 0, py = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key, eq;
    double val;
    if (!(ls >> key >> eq >> val) || eq != "=") throw ParseError(prefix + ".meta.txt: bad line '" + line + "'");
    if (key == "rows") rows = int(val);
    else if (key == "cols") cols = int(val);
    else if (key == "pitch_x_um") px = val;
    else if (key == "pitch_y_um") py = val;
  }
  const std::size_t n = std::size_t(rows) * cols;
  const std::string amp = detail::read_all(prefix + ".amp.f32");
  const std::string ph = detail::read_all(prefix + ".phase.f32");
  if (amp.size() != n * sizeof(float) || ph.size() != n * sizeof(float))
    throw IntegrityError(prefix + ": raw plane size does not match sidecar dims");
  ComplexField f(rows, cols, px, py);
  for (std::size_t i = 0; i < n; ++i) {
    float a, p;
    std::memcpy(&a, amp.data() + i * sizeof(float), sizeof(float));
    std::memcpy(&p, ph.data() + i * sizeof(float), sizeof(float));
    f.v[i] = std::polar(double(a), double(p));
  }
  return f;
}

}  // namespace tiltrecon
