// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// Spectral axis, spectral quantities and the bundled reference datasets
// (illuminants, CIE observer, ColorChecker reflectances, camera SRFs).

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vcavity/errors.hpp"

#ifndef VCAVITY_DATA_DIR
#define VCAVITY_DATA_DIR "data"
#endif

namespace vcavity {

/// Smallest admissible reflectance. The interreflection model needs r > 0.
inline constexpr double kReflectanceFloor = 1e-6;

/// Uniformly sampled wavelength axis, in nanometres.
class WavelengthGrid {
 public:
  WavelengthGrid(double start_nm, double end_nm, double step_nm)
      : start_(start_nm), end_(end_nm), step_(step_nm) {
    if (!(step_nm > 0.0) || !(end_nm >= start_nm) || !std::isfinite(end_nm) ||
        !std::isfinite(start_nm))
      throw ArgumentError("WavelengthGrid: need finite start <= end and step > 0");
    const double n = (end_nm - start_nm) / step_nm;
    const double rounded = std::round(n);
    if (std::abs(n - rounded) > 1e-9 * std::max(1.0, n))
      throw ArgumentError("WavelengthGrid: (end - start) is not a multiple of step");
    count_ = static_cast<int>(rounded) + 1;
  }

  /// 400-700 nm in 5 nm steps, 61 bands.
  static WavelengthGrid standard() { return {400.0, 700.0, 5.0}; }

  double start() const noexcept { return start_; }
  double end() const noexcept { return end_; }
  double step() const noexcept { return step_; }
  int count() const noexcept { return count_; }
  double wavelength(int k) const noexcept { return start_ + step_ * k; }

  bool covers(const WavelengthGrid& other) const noexcept {
    const double eps = 1e-9 * std::max(1.0, std::abs(end_));
    return other.start_ >= start_ - eps && other.end_ <= end_ + eps;
  }

  friend bool operator==(const WavelengthGrid& a, const WavelengthGrid& b) noexcept {
    const auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9; };
    return a.count_ == b.count_ && close(a.start_, b.start_) && close(a.step_, b.step_);
  }

 private:
  double start_;
  double end_;
  double step_;
  int count_ = 0;
};

enum class SpectrumKind { generic, reflectance, spd };

/// A function sampled on a WavelengthGrid. Immutable after construction.
class Spectrum {
 public:
  Spectrum(WavelengthGrid grid, Eigen::VectorXd values,
           SpectrumKind kind = SpectrumKind::generic)
      : grid_(grid), values_(std::move(values)), kind_(kind) {
    if (values_.size() != grid_.count())
      throw ArgumentError("Spectrum: " + std::to_string(values_.size()) +
                          " values for a grid of " + std::to_string(grid_.count()) +
                          " bands");
    for (Eigen::Index k = 0; k < values_.size(); ++k) {
      const double v = values_[k];
      if (!std::isfinite(v)) throw ArgumentError("Spectrum: non-finite value");
      if (kind_ == SpectrumKind::reflectance && !(v > 0.0 && v <= 1.0))
        throw ArgumentError("Spectrum: reflectance value " + std::to_string(v) +
                            " outside (0, 1]");
      if (kind_ == SpectrumKind::spd && v < 0.0)
        throw ArgumentError("Spectrum: negative SPD value");
    }
  }

  static Spectrum constant(WavelengthGrid grid, double value,
                           SpectrumKind kind = SpectrumKind::generic) {
    return {grid, Eigen::VectorXd::Constant(grid.count(), value), kind};
  }

  /// Reflectance from arbitrary values, clamped into [kReflectanceFloor, 1].
  static Spectrum clamped_reflectance(WavelengthGrid grid, const Eigen::VectorXd& values) {
    return {grid, values.cwiseMax(kReflectanceFloor).cwiseMin(1.0), SpectrumKind::reflectance};
  }

  const WavelengthGrid& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  SpectrumKind kind() const noexcept { return kind_; }
  int size() const noexcept { return grid_.count(); }
  double operator[](int k) const { return values_[k]; }

  Spectrum scaled(double factor) const {
    return {grid_, values_ * factor, kind_ == SpectrumKind::reflectance ? SpectrumKind::generic : kind_};
  }

 private:
  WavelengthGrid grid_;
  Eigen::VectorXd values_;
  SpectrumKind kind_;
};

struct NamedSpectrum {
  std::string name;
  Spectrum spectrum;
};

/// Linear interpolation of `spectrum` onto `target`. Reflectances are clamped
/// into (0, 1] after interpolation.
inline Spectrum resample(const Spectrum& spectrum, const WavelengthGrid& target) {
  const WavelengthGrid& src = spectrum.grid();
  if (!src.covers(target))
    throw RangeError("resample: target " + std::to_string(target.start()) + "-" +
                     std::to_string(target.end()) + " nm exceeds source range " +
                     std::to_string(src.start()) + "-" + std::to_string(src.end()) + " nm");
  if (src == target) return spectrum;

  const Eigen::VectorXd& v = spectrum.values();
  Eigen::VectorXd out(target.count());
  const int last = src.count() - 1;
  for (int k = 0; k < target.count(); ++k) {
    const double pos = std::clamp((target.wavelength(k) - src.start()) / src.step(), 0.0,
                                  static_cast<double>(last));
    const int i = std::min(static_cast<int>(std::floor(pos)), std::max(last - 1, 0));
    const double t = pos - i;
    out[k] = last == 0 ? v[0] : (1.0 - t) * v[i] + t * v[i + 1];
  }
  if (spectrum.kind() == SpectrumKind::reflectance)
    return Spectrum::clamped_reflectance(target, out);
  if (spectrum.kind() == SpectrumKind::spd) out = out.cwiseMax(0.0);
  return {target, std::move(out), spectrum.kind()};
}

// ---------------------------------------------------------------------------
// Spectra CSV: `wavelength_nm,<name1>,<name2>,...`, one row per wavelength.
// Lines starting with '#' are comments.

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool is_skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace detail

/// Parses the Spectra CSV format. `source` names the input in error messages.
inline std::vector<NamedSpectrum> parse_spectra_csv(std::istream& in,
                                                    const std::string& source = "<stream>") {
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> names;
  bool have_header = false;
  std::vector<double> wavelengths;
  std::vector<std::vector<double>> columns;

  while (std::getline(in, line)) {
    ++row;
    if (detail::is_skippable(line)) continue;
    const auto cells = detail::split_csv(line);
    if (!have_header) {
      if (cells.front() != "wavelength_nm")
        throw ParseError(source, row, 1, "header must start with 'wavelength_nm'");
      for (std::size_t c = 1; c < cells.size(); ++c) {
        if (cells[c].empty()) throw ParseError(source, row, c + 1, "empty column name");
        names.emplace_back(cells[c]);
      }
      columns.resize(names.size());
      have_header = true;
      continue;
    }
    if (cells.size() != names.size() + 1)
      throw ParseError(source, row, std::min(cells.size(), names.size() + 1) + 1,
                       "expected " + std::to_string(names.size() + 1) + " cells, found " +
                           std::to_string(cells.size()));
    double wl = 0.0;
    if (!detail::parse_double(cells[0], wl))
      throw ParseError(source, row, 1, "non-numeric wavelength '" + std::string(cells[0]) + "'");
    if (!wavelengths.empty() && !(wl > wavelengths.back()))
      throw ParseError(source, row, 1, "wavelengths must be strictly increasing");
    wavelengths.push_back(wl);
    for (std::size_t c = 0; c < names.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_double(cells[c + 1], v))
        throw ParseError(source, row, c + 2, "non-numeric value '" + std::string(cells[c + 1]) + "'");
      columns[c].push_back(v);
    }
  }
  if (!have_header) throw ParseError(source, 0, 0, "missing header row");
  if (wavelengths.empty()) return {};
  if (wavelengths.size() < 2)
    throw ParseError(source, 0, 0, "need at least two wavelength rows to define a grid");

  const double step = wavelengths[1] - wavelengths[0];
  for (std::size_t k = 1; k < wavelengths.size(); ++k) {
    if (std::abs(wavelengths[k] - wavelengths[k - 1] - step) > 1e-6 * step)
      throw ParseError(source, 0, 1, "non-uniform wavelength spacing");
  }
  const WavelengthGrid grid(wavelengths.front(),
                            wavelengths.front() + step * double(wavelengths.size() - 1), step);
  std::vector<NamedSpectrum> out;
  out.reserve(names.size());
  for (std::size_t c = 0; c < names.size(); ++c)
    out.push_back({names[c], Spectrum(grid, Eigen::Map<const Eigen::VectorXd>(
                                                 columns[c].data(), Eigen::Index(columns[c].size())))});
  return out;
}

inline std::vector<NamedSpectrum> load_spectra_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, 0, "cannot open file");
  return parse_spectra_csv(in, path.string());
}

/// Writes spectra sharing one grid. Values use round-trip precision.
inline void write_spectra_csv(std::ostream& out, const std::vector<NamedSpectrum>& spectra) {
  if (spectra.empty()) {
    out << "wavelength_nm\n";
    return;
  }
  const WavelengthGrid grid = spectra.front().spectrum.grid();
  out << "wavelength_nm";
  for (const auto& s : spectra) {
    if (!(s.spectrum.grid() == grid))
      throw ArgumentError("write_spectra_csv: all spectra must share one grid");
    if (s.name.find(',') != std::string::npos)
      throw ArgumentError("write_spectra_csv: name contains a comma: " + s.name);
    out << ',' << s.name;
  }
  out << '\n' << std::setprecision(17);
  for (int k = 0; k < grid.count(); ++k) {
    out << grid.wavelength(k);
    for (const auto& s : spectra) out << ',' << s.spectrum[k];
    out << '\n';
  }
}

inline void save_spectra_csv(const std::filesystem::path& path,
                             const std::vector<NamedSpectrum>& spectra) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_spectra_csv(out, spectra);
}

// ---------------------------------------------------------------------------

/// Camera spectral response matrix C (channels x bands).
class CameraModel {
 public:
  CameraModel(WavelengthGrid grid, Eigen::MatrixXd response,
              std::vector<std::string> channel_names = {})
      : grid_(grid), response_(std::move(response)), names_(std::move(channel_names)) {
    if (response_.cols() != grid_.count())
      throw ArgumentError("CameraModel: response has " + std::to_string(response_.cols()) +
                          " columns, grid has " + std::to_string(grid_.count()) + " bands");
    if (response_.rows() < 1) throw ArgumentError("CameraModel: no channels");
    if ((response_.array() < 0.0).any() || !response_.allFinite())
      throw ArgumentError("CameraModel: responses must be finite and non-negative");
    for (Eigen::Index c = 0; c < response_.rows(); ++c)
      if (!(response_.row(c).maxCoeff() > 0.0))
        throw ArgumentError("CameraModel: channel " + std::to_string(c) + " has no positive response");
    if (names_.empty()) {
      static const char* kDefault[] = {"R", "G", "B"};
      for (Eigen::Index c = 0; c < response_.rows(); ++c)
        names_.push_back(c < 3 ? kDefault[c] : "C" + std::to_string(c));
    }
    if (names_.size() != std::size_t(response_.rows()))
      throw ArgumentError("CameraModel: channel name count mismatch");
  }

  /// Builds a camera from named SRF curves, resampled onto `grid`.
  static CameraModel from_spectra(const std::vector<NamedSpectrum>& curves,
                                  const WavelengthGrid& grid = WavelengthGrid::standard()) {
    if (curves.empty()) throw ArgumentError("CameraModel: no response curves");
    Eigen::MatrixXd resp(Eigen::Index(curves.size()), grid.count());
    std::vector<std::string> names;
    for (std::size_t c = 0; c < curves.size(); ++c) {
      const Spectrum s = resample(curves[c].spectrum, grid);
      resp.row(Eigen::Index(c)) = s.values().transpose().cwiseMax(0.0);
      names.push_back(curves[c].name);
    }
    return {grid, std::move(resp), std::move(names)};
  }

  const WavelengthGrid& grid() const noexcept { return grid_; }
  const Eigen::MatrixXd& response() const noexcept { return response_; }
  int channels() const noexcept { return int(response_.rows()); }
  const std::vector<std::string>& channel_names() const noexcept { return names_; }

 private:
  WavelengthGrid grid_;
  Eigen::MatrixXd response_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Bundled datasets

enum class Builtin { D65, D50, CIE1964_CMF, ColorChecker24 };
enum class BuiltinCamera { SigmaSDMerrill, NikonD5100 };

/// Directory holding the bundled CSV fixtures; `VCAVITY_DATA_DIR` overrides.
inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("VCAVITY_DATA_DIR"); env && *env) return env;
  return VCAVITY_DATA_DIR;
}

inline Builtin builtin_from_name(std::string_view name) {
  if (name == "D65") return Builtin::D65;
  if (name == "D50") return Builtin::D50;
  if (name == "CIE1964_CMF") return Builtin::CIE1964_CMF;
  if (name == "ColorChecker24") return Builtin::ColorChecker24;
  throw LookupError("unknown builtin dataset '" + std::string(name) + "'");
}

inline BuiltinCamera builtin_camera_from_name(std::string_view name) {
  if (name == "sigma_sdmerrill" || name == "SigmaSDMerrill") return BuiltinCamera::SigmaSDMerrill;
  if (name == "nikon_d5100" || name == "NikonD5100") return BuiltinCamera::NikonD5100;
  throw LookupError("unknown builtin camera '" + std::string(name) + "'");
}

/// Loads a bundled dataset, resampled to the standard 400-700/5 nm grid.
/// Illuminants come back tagged as SPDs, ColorChecker patches as reflectances
/// (clamped into [1e-6, 1]); the observer as three generic curves.
inline std::vector<NamedSpectrum> builtin(Builtin which) {
  const char* file = nullptr;
  SpectrumKind kind = SpectrumKind::generic;
  switch (which) {
    case Builtin::D65: file = "illuminant_d65.csv"; kind = SpectrumKind::spd; break;
    case Builtin::D50: file = "illuminant_d50.csv"; kind = SpectrumKind::spd; break;
    case Builtin::CIE1964_CMF: file = "cie1964_10deg_cmf.csv"; break;
    case Builtin::ColorChecker24: file = "colorchecker24.csv"; kind = SpectrumKind::reflectance; break;
  }
  const auto grid = WavelengthGrid::standard();
  std::vector<NamedSpectrum> out;
  for (auto& entry : load_spectra_csv(data_dir() / file)) {
    const Spectrum s = resample(entry.spectrum, grid);
    if (kind == SpectrumKind::reflectance)
      out.push_back({entry.name, Spectrum::clamped_reflectance(grid, s.values())});
    else
      out.push_back({entry.name, Spectrum(grid, s.values(), kind)});
  }
  return out;
}

inline std::vector<NamedSpectrum> builtin(std::string_view name) {
  return builtin(builtin_from_name(name));
}

inline Spectrum builtin_illuminant(Builtin which) {
  if (which != Builtin::D65 && which != Builtin::D50)
    throw LookupError("builtin_illuminant: not an illuminant");
  return builtin(which).front().spectrum;
}

/// CIE 1964 10 degree observer as a 3 x q matrix (x_bar, y_bar, z_bar rows).
inline Eigen::MatrixXd builtin_cmf_matrix() {
  const auto cmf = builtin(Builtin::CIE1964_CMF);
  Eigen::MatrixXd m(3, WavelengthGrid::standard().count());
  for (int c = 0; c < 3; ++c) m.row(c) = cmf.at(std::size_t(c)).spectrum.values().transpose();
  return m;
}

inline CameraModel builtin_camera(BuiltinCamera which) {
  const char* file = which == BuiltinCamera::SigmaSDMerrill ? "camera_sigma_sdmerrill.csv"
                                                            : "camera_nikon_d5100.csv";
  return CameraModel::from_spectra(load_spectra_csv(data_dir() / file));
}

/// Loads camera SRFs from a CSV (columns R,G,B,...), resampled onto `grid`.
inline CameraModel load_camera_csv(const std::filesystem::path& path,
                                   const WavelengthGrid& grid = WavelengthGrid::standard()) {
  return CameraModel::from_spectra(load_spectra_csv(path), grid);
}

}  // namespace vcavity
