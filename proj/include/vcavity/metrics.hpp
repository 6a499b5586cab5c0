// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "vcavity/errors.hpp"
#include "vcavity/spectra.hpp"

namespace vcavity {

struct LabColor {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
};

inline double rmse(const Eigen::VectorXd& r, const Eigen::VectorXd& r_hat) {
  if (r.size() != r_hat.size() || r.size() == 0) throw ArgumentError("rmse: size mismatch");
  return std::sqrt((r - r_hat).squaredNorm() / double(r.size()));
}

inline double rmse(const Spectrum& r, const Spectrum& r_hat) {
  if (!(r.grid() == r_hat.grid())) throw ArgumentError("rmse: grids differ");
  return rmse(r.values(), r_hat.values());
}

/// 1 - cos(angle between R and R_hat); no mean centring.
inline double pearson_distance(const Eigen::VectorXd& r, const Eigen::VectorXd& r_hat) {
  if (r.size() != r_hat.size()) throw ArgumentError("pearson_distance: size mismatch");
  const double nr = r.norm(), nh = r_hat.norm();
  if (!(nr > 0.0) || !(nh > 0.0)) throw ArgumentError("pearson_distance: zero-norm vector");
  return 1.0 - r.dot(r_hat) / (nr * nh);
}

inline double pearson_distance(const Spectrum& r, const Spectrum& r_hat) {
  if (!(r.grid() == r_hat.grid())) throw ArgumentError("pearson_distance: grids differ");
  return pearson_distance(r.values(), r_hat.values());
}

/// Tristimulus values of reflectance R under `illuminant`, scaled so the
/// perfect reflector has Y = 100. `observer` is 3 x q.
inline Eigen::Vector3d spectrum_to_xyz(const Spectrum& r, const Spectrum& illuminant,
                                       const Eigen::MatrixXd& observer) {
  if (!(r.grid() == illuminant.grid()) || observer.rows() != 3 || observer.cols() != r.size())
    throw ArgumentError("spectrum_to_xyz: grids differ");
  const Eigen::VectorXd weighted = observer * illuminant.values().asDiagonal() * Eigen::VectorXd::Ones(r.size());
  const double k = 100.0 / weighted[1];
  return k * (observer * (illuminant.values().cwiseProduct(r.values())));
}

inline LabColor xyz_to_lab(const Eigen::Vector3d& xyz, const Eigen::Vector3d& white) {
  const auto f = [](double t) {
    constexpr double e = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
    return t > e ? std::cbrt(t) : (kappa * t + 16.0) / 116.0;
  };
  const double fx = f(xyz[0] / white[0]), fy = f(xyz[1] / white[1]), fz = f(xyz[2] / white[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline LabColor spectrum_to_lab(const Spectrum& r, const Spectrum& illuminant,
                                const Eigen::MatrixXd& observer) {
  const Eigen::Vector3d white =
      spectrum_to_xyz(Spectrum::constant(r.grid(), 1.0), illuminant, observer);
  return xyz_to_lab(spectrum_to_xyz(r, illuminant, observer), white);
}

/// CIELAB under D65 and the CIE 1964 10 degree observer (standard grid only).
inline LabColor spectrum_to_lab(const Spectrum& r) {
  static const Spectrum d65 = builtin_illuminant(Builtin::D65);
  static const Eigen::MatrixXd cmf = builtin_cmf_matrix();
  return spectrum_to_lab(r, d65, cmf);
}

/// CIEDE2000 colour difference with kL = kC = kH = 1.
inline double ciede2000(const LabColor& c1, const LabColor& c2) {
  constexpr double pi = std::numbers::pi;
  const auto deg = [](double rad) { return rad * 180.0 / pi; };
  const auto rad = [](double d) { return d * pi / 180.0; };
  const double pow25_7 = 6103515625.0;  // 25^7

  const double cab1 = std::hypot(c1.a, c1.b), cab2 = std::hypot(c2.a, c2.b);
  const double cbar = 0.5 * (cab1 + cab2);
  const double c7 = std::pow(cbar, 7);
  const double gfac = 0.5 * (1.0 - std::sqrt(c7 / (c7 + pow25_7)));
  const double a1 = (1.0 + gfac) * c1.a, a2 = (1.0 + gfac) * c2.a;
  const double cp1 = std::hypot(a1, c1.b), cp2 = std::hypot(a2, c2.b);
  const auto hue = [&](double b, double a) {
    if (a == 0.0 && b == 0.0) return 0.0;
    double h = deg(std::atan2(b, a));
    return h < 0.0 ? h + 360.0 : h;
  };
  const double hp1 = hue(c1.b, a1), hp2 = hue(c2.b, a2);

  const double dl = c2.L - c1.L;
  const double dc = cp2 - cp1;
  double dh = 0.0;
  if (cp1 * cp2 != 0.0) {
    dh = hp2 - hp1;
    if (dh > 180.0) dh -= 360.0;
    else if (dh < -180.0) dh += 360.0;
  }
  const double dhh = 2.0 * std::sqrt(cp1 * cp2) * std::sin(rad(dh) / 2.0);

  const double lbar = 0.5 * (c1.L + c2.L);
  const double cpbar = 0.5 * (cp1 + cp2);
  double hbar = hp1 + hp2;
  if (cp1 * cp2 != 0.0) {
    if (std::abs(hp1 - hp2) <= 180.0) hbar *= 0.5;
    else if (hp1 + hp2 < 360.0) hbar = 0.5 * (hp1 + hp2 + 360.0);
    else hbar = 0.5 * (hp1 + hp2 - 360.0);
  }
  const double t = 1.0 - 0.17 * std::cos(rad(hbar - 30.0)) + 0.24 * std::cos(rad(2.0 * hbar)) +
                   0.32 * std::cos(rad(3.0 * hbar + 6.0)) - 0.20 * std::cos(rad(4.0 * hbar - 63.0));
  const double dtheta = 30.0 * std::exp(-std::pow((hbar - 275.0) / 25.0, 2));
  const double cp7 = std::pow(cpbar, 7);
  const double rc = 2.0 * std::sqrt(cp7 / (cp7 + pow25_7));
  const double l50 = (lbar - 50.0) * (lbar - 50.0);
  const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double sc = 1.0 + 0.045 * cpbar;
  const double sh = 1.0 + 0.015 * cpbar * t;
  const double rt = -std::sin(rad(2.0 * dtheta)) * rc;

  const double tl = dl / sl, tc = dc / sc, th = dhh / sh;
  return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

/// CIEDE2000 between two reflectances under D65 / 10 degree observer.
inline double ciede2000(const Spectrum& r1, const Spectrum& r2) {
  return ciede2000(spectrum_to_lab(r1), spectrum_to_lab(r2));
}

}  // namespace vcavity
