// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "vcavity/vcavity.hpp"

namespace vctest {

using vcavity::Spectrum;
using vcavity::WavelengthGrid;

inline const WavelengthGrid kGrid = WavelengthGrid::standard();

/// Smooth random reflectance in [lo, hi]: a few random Gaussian bumps.
inline Spectrum random_reflectance(std::mt19937_64& rng, double lo = 0.05, double hi = 0.95) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Constant(kGrid.count(), u(rng));
  for (int b = 0; b < 3; ++b) {
    const double mu = 400.0 + 300.0 * u(rng), w = 30.0 + 80.0 * u(rng), a = u(rng) - 0.5;
    for (int k = 0; k < kGrid.count(); ++k) v[k] += a * std::exp(-0.5 * std::pow((kGrid.wavelength(k) - mu) / w, 2));
  }
  const double mn = v.minCoeff(), mx = v.maxCoeff();
  v = ((v.array() - mn) / std::max(mx - mn, 1e-12)).matrix();
  const double a = lo + (hi - lo) * 0.5 * u(rng), b = a + (hi - a) * u(rng);
  return {kGrid, (a + (b - a) * v.array()).matrix(), vcavity::SpectrumKind::reflectance};
}

inline Spectrum random_spd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.5);
  Eigen::VectorXd v(kGrid.count());
  const double slope = u(rng) - 0.85, base = u(rng) * 100.0;
  for (int k = 0; k < kGrid.count(); ++k) v[k] = base * (1.0 + slope * (kGrid.wavelength(k) - 550.0) / 300.0);
  return {kGrid, v, vcavity::SpectrumKind::spd};
}

inline vcavity::VCavity random_cavity(std::mt19937_64& rng, int max_grid = 6) {
  std::uniform_real_distribution<double> angle(30.0, 120.0), size(0.01, 0.04);
  std::uniform_int_distribution<int> n(2, max_grid);
  return vcavity::build_v_cavity(size(rng), size(rng), angle(rng), n(rng), n(rng));
}

inline const vcavity::CameraModel& sigma_camera() {
  static const vcavity::CameraModel cam = vcavity::builtin_camera(vcavity::BuiltinCamera::SigmaSDMerrill);
  return cam;
}

inline const Spectrum& d65() {
  static const Spectrum s = vcavity::builtin_illuminant(vcavity::Builtin::D65);
  return s;
}

inline Spectrum patch(const std::string& name) {
  for (const auto& p : vcavity::builtin(vcavity::Builtin::ColorChecker24))
    if (p.name == name) return p.spectrum;
  throw vcavity::LookupError("no patch " + name);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vcavity_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace vctest
