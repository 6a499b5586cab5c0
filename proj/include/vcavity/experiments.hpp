// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// Simulation and evaluation pipelines: synthetic round trip, angle/facet
// sweep and the bent-metamer experiment.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcavity/config.hpp"
#include "vcavity/forward.hpp"
#include "vcavity/geometry.hpp"
#include "vcavity/inverse.hpp"
#include "vcavity/io.hpp"
#include "vcavity/metrics.hpp"
#include "vcavity/parallel.hpp"
#include "vcavity/spectra.hpp"

namespace vcavity {

inline Spectrum load_illuminant(const Source& src) {
  if (!src.file) return builtin_illuminant(builtin_from_name(src.name));
  const auto list = load_spectra_csv(*src.file);
  if (list.empty()) throw ParseError(src.file->string(), 0, 0, "no illuminant column");
  const Spectrum s = resample(list.front().spectrum, WavelengthGrid::standard());
  return {s.grid(), s.values(), SpectrumKind::spd};
}

inline CameraModel load_camera(const Source& src) {
  if (!src.file) return builtin_camera(builtin_camera_from_name(src.name));
  return load_camera_csv(*src.file);
}

/// Named reflectances on the standard grid, clamped into [1e-6, 1].
inline std::vector<NamedSpectrum> load_reflectances(const Source& src) {
  if (!src.file) return builtin(src.name);
  std::vector<NamedSpectrum> out;
  for (const auto& s : load_spectra_csv(*src.file)) {
    const Spectrum r = resample(s.spectrum, WavelengthGrid::standard());
    out.push_back({s.name, Spectrum::clamped_reflectance(r.grid(), r.values())});
  }
  return out;
}

/// First column of a spectra CSV as a reflectance on the standard grid.
inline Spectrum load_single_reflectance(const std::filesystem::path& path) {
  const auto list = load_reflectances({"", path});
  if (list.empty()) throw ParseError(path.string(), 0, 0, "no spectrum column");
  return list.front().spectrum;
}

inline KernelMatrix build_kernel(const VCavity& cav, const KernelConfig& k, std::uint64_t seed) {
  return k.method == KernelMethod::exact ? kernel_exact(cav, k.quadrature_order)
                                         : kernel_monte_carlo(cav, k.samples, seed);
}

/// Estimation settings with any init file resolved.
inline EstimationConfig resolve_estimation(const RunConfig& cfg) {
  EstimationConfig e = cfg.estimation;
  if (cfg.init_file) e.init = load_single_reflectance(*cfg.init_file);
  return e;
}

/// Everything the forward and inverse paths need for one cavity.
struct Scene {
  VCavity cavity;
  KernelMatrix kernel;
  EigenKernel eig;
  Spectrum spd;
  IrradianceField e0;
  CameraModel camera;
};

inline Scene make_scene(const CavityConfig& cc, const KernelConfig& kc, std::uint64_t seed, const Spectrum& spd,
                        const CameraModel& camera, IlluminationMode mode = IlluminationMode::uniform,
                        std::optional<KernelMatrix> kernel = std::nullopt) {
  VCavity cav = build_v_cavity(cc.panel_width_m, cc.panel_height_m, cc.angle_deg, cc.rows, cc.cols);
  if (kernel && kernel->m() != cav.facet_count())
    throw ArgumentError("kernel cache holds " + std::to_string(kernel->m()) + " facets, cavity has " +
                        std::to_string(cav.facet_count()));
  KernelMatrix k = kernel ? *kernel : build_kernel(cav, kc, seed);
  EigenKernel eig = eigen_prepare(k);
  IrradianceField e0 = direct_irradiance(cav, spd, mode);
  return {std::move(cav), std::move(k), std::move(eig), spd, std::move(e0), camera};
}

/// Scene for a run configuration; a kernel cache file is used when present.
inline Scene make_scene(const RunConfig& cfg) {
  std::optional<KernelMatrix> cached;
  if (cfg.kernel.cache && std::filesystem::exists(*cfg.kernel.cache)) cached = load_kernel_csv(*cfg.kernel.cache);
  return make_scene(cfg.cavity, cfg.kernel, cfg.seed, load_illuminant(cfg.illuminant), load_camera(cfg.camera),
                    cfg.illumination, std::move(cached));
}

/// Noiseless forward observation plus optional Gaussian noise with standard
/// deviation sigma * max(rho); negative values are clamped to 0.
inline RgbObservation simulate(const Scene& scene, const Spectrum& r, double sigma = 0.0, std::uint64_t seed = 1) {
  RgbObservation obs = forward_uniform(scene.eig, r, scene.e0, scene.camera);
  if (sigma <= 0.0) return obs;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma * obs.values().maxCoeff());
  Eigen::VectorXd v = obs.values();
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = std::max(0.0, v[k] + noise(rng));
  return {obs.facets(), obs.channels(), std::move(v)};
}

/// Camera values of the same surface laid flat (no interreflection).
inline RgbObservation flat_observation(const Scene& scene, const Spectrum& r) {
  SpectralField l = scene.e0;
  l.values = l.values * (r.values() / std::numbers::pi).asDiagonal();
  return project_camera(l, scene.camera);
}

inline SpectrumMetrics compare_spectra(const Spectrum& truth, const Spectrum& estimate) {
  return {rmse(truth, estimate), ciede2000(truth, estimate), pearson_distance(truth, estimate)};
}

struct PatchOutcome {
  std::string name;
  SpectrumMetrics metrics;
  EstimationResult result;
};

/// Simulates and re-estimates every spectrum; rows keep the input order.
inline std::vector<PatchOutcome> roundtrip(const Scene& scene, const std::vector<NamedSpectrum>& patches,
                                           const EstimationConfig& config, double sigma = 0.0,
                                           std::uint64_t seed = 1) {
  std::vector<std::optional<PatchOutcome>> slots(patches.size());
  parallel_for(int(patches.size()), [&](int p) {
    const auto& patch = patches[std::size_t(p)];
    const RgbObservation obs = simulate(scene, patch.spectrum, sigma, seed + std::uint64_t(p));
    EstimationResult res = estimate(obs, scene.eig, scene.e0, scene.camera, config);
    slots[std::size_t(p)] = PatchOutcome{patch.name, compare_spectra(patch.spectrum, res.reflectance), std::move(res)};
  });
  std::vector<PatchOutcome> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline SpectrumMetrics mean_metrics(const std::vector<PatchOutcome>& rows) {
  SpectrumMetrics m;
  for (const auto& r : rows) {
    m.rmse += r.metrics.rmse / double(rows.size());
    m.ciede00 += r.metrics.ciede00 / double(rows.size());
    m.pd += r.metrics.pd / double(rows.size());
  }
  return m;
}

struct SweepCell {
  double angle_deg = 0.0;
  int grid = 0;
  int facets_per_panel = 0;
  SpectrumMetrics mean;
};

/// Mean round-trip metrics over angles x (grid x grid facets per panel).
inline std::vector<SweepCell> sweep(const RunConfig& cfg, const std::vector<NamedSpectrum>& patches) {
  const Spectrum spd = load_illuminant(cfg.illuminant);
  const CameraModel camera = load_camera(cfg.camera);
  const EstimationConfig est = resolve_estimation(cfg);
  std::vector<SweepCell> cells;
  for (double angle : cfg.sweep.angles_deg)
    for (int grid : cfg.sweep.grids) {
      CavityConfig cc = cfg.cavity;
      cc.angle_deg = angle;
      cc.rows = cc.cols = grid;
      const Scene scene = make_scene(cc, cfg.kernel, cfg.seed, spd, camera, cfg.illumination);
      const auto rows = roundtrip(scene, patches, est, cfg.noise_sigma, cfg.seed);
      cells.push_back({angle, grid, grid * grid, mean_metrics(rows)});
    }
  return cells;
}

// ---------------------------------------------------------------------------
// Metamers

/// max |rho_A - rho_B| / max |rho_A| for the flat (unfolded) surfaces.
inline double flat_relative_difference(const Scene& scene, const Spectrum& a, const Spectrum& b) {
  const RgbObservation fa = flat_observation(scene, a), fb = flat_observation(scene, b);
  return (fa.values() - fb.values()).cwiseAbs().maxCoeff() / fa.values().cwiseAbs().maxCoeff();
}

/// Builds B = base + t * p, where p is a square wave of the given period
/// projected onto the null space of the flat camera map, and t is the largest
/// step (times 0.9) keeping B inside [0.05, 0.95].
inline Spectrum construct_metamer(const Scene& scene, const Spectrum& base, double period_nm) {
  const WavelengthGrid& grid = base.grid();
  const int q = grid.count();
  const Eigen::MatrixXd m = scene.camera.response() * scene.spd.values().asDiagonal();  // s x q
  Eigen::VectorXd p(q);
  for (int k = 0; k < q; ++k) {
    const double phase = std::fmod((grid.wavelength(k) - grid.start()) / period_nm, 1.0);
    p[k] = phase < 0.5 ? 1.0 : -1.0;
  }
  // p - M^T (M M^T)^-1 M p
  const Eigen::MatrixXd mmt = m * m.transpose();
  p -= m.transpose() * mmt.ldlt().solve(m * p);
  double t = std::numeric_limits<double>::infinity();
  for (int k = 0; k < q; ++k) {
    if (p[k] > 0) t = std::min(t, (0.95 - base[k]) / p[k]);
    if (p[k] < 0) t = std::min(t, (0.05 - base[k]) / p[k]);
  }
  if (!(t > 0) || !std::isfinite(t)) throw ArgumentError("construct_metamer: base must lie inside (0.05, 0.95)");
  return {grid, base.values() + 0.9 * t * p, SpectrumKind::reflectance};
}

struct MetamerReport {
  double flat_relative_difference = 0.0;
  double bent_divergence = 0.0;  // max facet-wise |rho_A - rho_B| / (max - min of rho_A)
  EstimationResult estimate_a;
  EstimationResult estimate_b;
  double rmse_a_to_a = 0.0, rmse_a_to_b = 0.0;
  double rmse_b_to_b = 0.0, rmse_b_to_a = 0.0;
};

/// Simulates A and B on the bent cavity and estimates both.
inline MetamerReport metamer_experiment(const Scene& scene, const Spectrum& a, const Spectrum& b,
                                        const EstimationConfig& config) {
  const RgbObservation oa = simulate(scene, a), ob = simulate(scene, b);
  const double range = oa.values().maxCoeff() - oa.values().minCoeff();
  EstimationResult ea = estimate(oa, scene.eig, scene.e0, scene.camera, config);
  EstimationResult eb = estimate(ob, scene.eig, scene.e0, scene.camera, config);
  MetamerReport rep{flat_relative_difference(scene, a, b),
                    range > 0 ? (oa.values() - ob.values()).cwiseAbs().maxCoeff() / range : 0.0, ea, eb};
  rep.rmse_a_to_a = rmse(ea.reflectance, a);
  rep.rmse_a_to_b = rmse(ea.reflectance, b);
  rep.rmse_b_to_b = rmse(eb.reflectance, b);
  rep.rmse_b_to_a = rmse(eb.reflectance, a);
  return rep;
}

}  // namespace vcavity
