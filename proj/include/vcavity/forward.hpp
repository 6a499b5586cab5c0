// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// Irradiance, radiance and camera values for a uniformly coloured cavity.

#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "vcavity/errors.hpp"
#include "vcavity/geometry.hpp"
#include "vcavity/parallel.hpp"
#include "vcavity/spectra.hpp"

namespace vcavity {

/// Per-facet, per-band quantity (m x q): irradiance or radiance.
struct SpectralField {
  WavelengthGrid grid;
  Eigen::MatrixXd values;

  int facets() const noexcept { return int(values.rows()); }
  int bands() const noexcept { return int(values.cols()); }
};
using IrradianceField = SpectralField;

/// Camera values for m facets and s channels, channel-major:
/// values[c * m + i] is channel c at facet i.
class RgbObservation {
 public:
  RgbObservation(int m, int s, Eigen::VectorXd values) : m_(m), s_(s), values_(std::move(values)) {
    if (m < 1 || s < 1 || values_.size() != Eigen::Index(m) * s)
      throw ArgumentError("RgbObservation: expected " + std::to_string(m) + " x " +
                          std::to_string(s) + " values");
    if (!values_.allFinite() || (values_.array() < 0.0).any())
      throw ArgumentError("RgbObservation: values must be finite and non-negative");
  }

  int facets() const noexcept { return m_; }
  int channels() const noexcept { return s_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  double operator()(int channel, int facet) const { return values_[Eigen::Index(channel) * m_ + facet]; }
  auto channel(int c) const { return values_.segment(Eigen::Index(c) * m_, m_); }

  RgbObservation scaled(double f) const { return {m_, s_, values_ * f}; }

 private:
  int m_, s_;
  Eigen::VectorXd values_;
};

enum class IlluminationMode { uniform, cosine };

namespace detail {

inline void check_reflectance(const Spectrum& r, const WavelengthGrid& grid, const char* who) {
  if (!(r.grid() == grid)) throw ArgumentError(std::string(who) + ": wavelength grids differ");
  if (!(r.values().array() > 0.0).all() || !(r.values().array() <= 1.0).all())
    throw ArgumentError(std::string(who) + ": reflectance must lie in (0, 1]");
}

inline void check_field(const KernelMatrix& k, const SpectralField& e0, const char* who) {
  if (e0.facets() != k.m() || e0.bands() != e0.grid.count())
    throw ArgumentError(std::string(who) + ": field shape does not match kernel/grid");
}

}  // namespace detail

/// Direct irradiance E0 on each facet. `uniform` gives every facet the SPD;
/// `cosine` weights it by the incidence cosine of a beam travelling down the
/// bisector into the cavity.
inline IrradianceField direct_irradiance(const VCavity& cav, const Spectrum& spd,
                                         IlluminationMode mode = IlluminationMode::uniform) {
  if ((spd.values().array() < 0.0).any())
    throw ArgumentError("direct_irradiance: SPD must be non-negative");
  const int m = cav.facet_count();
  Eigen::MatrixXd e(m, spd.size());
  for (int i = 0; i < m; ++i) {
    double w = 1.0;
    if (mode == IlluminationMode::cosine) w = std::max(0.0, cav.facet(i).normal.dot(cav.bisector()));
    e.row(i) = w * spd.values().transpose();
  }
  return {spd.grid(), std::move(e)};
}

/// Partial geometric series E = sum_{b=0..n} (r K)^b E0, band by band.
inline IrradianceField bounce_irradiance(const KernelMatrix& k, const Spectrum& r,
                                         const IrradianceField& e0, int n_bounces) {
  if (n_bounces < 0) throw ArgumentError("bounce_irradiance: n_bounces must be >= 0");
  detail::check_field(k, e0, "bounce_irradiance");
  detail::check_reflectance(r, e0.grid, "bounce_irradiance");
  Eigen::MatrixXd e = e0.values;
  Eigen::MatrixXd term = e0.values;
  for (int b = 0; b < n_bounces; ++b) {
    term = k.matrix() * term;
    term *= r.values().asDiagonal();
    e += term;
  }
  return {e0.grid, std::move(e)};
}

/// Infinite-bounce irradiance E = (I - r K)^-1 E0, one LU solve per band.
inline IrradianceField closed_form_irradiance(const KernelMatrix& k, const Spectrum& r,
                                              const IrradianceField& e0) {
  detail::check_field(k, e0, "closed_form_irradiance");
  detail::check_reflectance(r, e0.grid, "closed_form_irradiance");
  const int m = k.m();
  Eigen::MatrixXd e(m, e0.bands());
  parallel_for(e0.bands(), [&](int band) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) - r[band] * k.matrix();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    e.col(band) = lu.solve(e0.values.col(band));
  });
  if (!e.allFinite()) throw NumericError("closed_form_irradiance: singular system");
  return {e0.grid, std::move(e)};
}

/// Reflected radiance L = r E / pi with E the infinite-bounce irradiance.
inline SpectralField radiance(const KernelMatrix& k, const Spectrum& r, const IrradianceField& e0) {
  SpectralField e = closed_form_irradiance(k, r, e0);
  e.values = e.values * (r.values() / std::numbers::pi).asDiagonal();
  return e;
}

/// rho = C L dlambda per facet (Riemann sum), assembled channel-major.
inline RgbObservation project_camera(const SpectralField& l, const CameraModel& camera) {
  if (!(l.grid == camera.grid()))
    throw ArgumentError("project_camera: radiance and camera grids differ");
  const int m = l.facets(), s = camera.channels();
  Eigen::VectorXd rho(Eigen::Index(m) * s);
  const Eigen::MatrixXd prod = l.values * camera.response().transpose() * l.grid.step();  // m x s
  for (int c = 0; c < s; ++c) rho.segment(Eigen::Index(c) * m, m) = prod.col(c).cwiseMax(0.0);
  return {m, s, std::move(rho)};
}

// ---------------------------------------------------------------------------

/// K = Q diag(g) Q^T for a symmetric kernel.
struct EigenKernel {
  Eigen::MatrixXd Q;
  Eigen::VectorXd g;
  Eigen::MatrixXd Qinv;

  int m() const noexcept { return int(g.size()); }
};

inline EigenKernel eigen_prepare(const KernelMatrix& k) {
  const double scale = std::max(1.0, k.matrix().cwiseAbs().maxCoeff());
  if (k.symmetry_residual() > 1e-8 * scale)
    throw ArgumentError(
        "eigen_prepare: kernel is not symmetric; use closed_form_irradiance/radiance instead");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.matrix());
  if (es.info() != Eigen::Success) throw NumericError("eigen_prepare: eigensolver failed");
  EigenKernel eig{es.eigenvectors(), es.eigenvalues(), es.eigenvectors().transpose()};
  const Eigen::MatrixXd rebuilt = eig.Q * eig.g.asDiagonal() * eig.Qinv;
  const double inf_norm = k.matrix().cwiseAbs().rowwise().sum().maxCoeff();
  if ((rebuilt - k.matrix()).cwiseAbs().rowwise().sum().maxCoeff() > 1e-8 * std::max(inf_norm, 1e-300))
    throw NumericError("eigen_prepare: decomposition does not reproduce the kernel");
  if (!(eig.g.cwiseAbs().maxCoeff() < 1.0))
    throw NumericError("eigen_prepare: spectral radius >= 1, kernel is not substochastic");
  return eig;
}

/// Radiance through the eigenbasis: per band L = (1/pi) Q diag(1/(1/r - g)) Q^T E0.
inline SpectralField radiance_eigen(const EigenKernel& eig, const Spectrum& r,
                                    const IrradianceField& e0) {
  if (e0.facets() != eig.m()) throw ArgumentError("radiance_eigen: field/kernel size mismatch");
  detail::check_reflectance(r, e0.grid, "radiance_eigen");
  Eigen::MatrixXd d(eig.m(), e0.bands());
  for (int band = 0; band < e0.bands(); ++band) {
    const Eigen::ArrayXd denom = 1.0 / r[band] - eig.g.array();
    if ((denom.abs() <= 1e-12).any())
      throw NumericError("radiance_eigen: 1/r coincides with a kernel eigenvalue");
    d.col(band) = denom.inverse().matrix();
  }
  const Eigen::MatrixXd et = eig.Qinv * e0.values;
  return {e0.grid, eig.Q * et.cwiseProduct(d) / std::numbers::pi};
}

/// Camera values of a uniform-reflectance cavity via the eigenbasis.
inline RgbObservation forward_uniform(const EigenKernel& eig, const Spectrum& r,
                                      const IrradianceField& e0, const CameraModel& camera) {
  return project_camera(radiance_eigen(eig, r, e0), camera);
}

/// Same with the uniform direct irradiance E0(lambda) = spd(lambda) on every facet.
inline RgbObservation forward_uniform(const EigenKernel& eig, const Spectrum& r,
                                      const Spectrum& spd, const CameraModel& camera) {
  IrradianceField e0{spd.grid(), spd.values().transpose().replicate(eig.m(), 1)};
  return forward_uniform(eig, r, e0, camera);
}

/// Reference path: per-band LU solve followed by camera projection.
inline RgbObservation forward_direct(const KernelMatrix& k, const Spectrum& r,
                                     const IrradianceField& e0, const CameraModel& camera) {
  return project_camera(radiance(k, r, e0), camera);
}

}  // namespace vcavity
