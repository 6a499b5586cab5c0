// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// vcavity: kernel | simulate | estimate | roundtrip | sweep | metamer | calibrate
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vcavity/vcavity.hpp"

namespace fs = std::filesystem;
using namespace vcavity;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> samples;
  std::optional<int> threads;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_out) {
  sub->add_option("--config", c.config, "Run configuration (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Override the configuration seed");
  sub->add_option("--samples", c.samples, "Monte Carlo points per source facet (selects the monte_carlo kernel)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  c.out = default_out;
  sub->add_option("--out", c.out, "Output path")->capture_default_str();
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_run_config(json::object()) : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.samples) {
    cfg.kernel.method = KernelMethod::monte_carlo;
    cfg.kernel.samples = *c.samples;
  }
  if (c.threads) default_thread_count() = unsigned(*c.threads);
  return cfg;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path() && !fs::is_directory(p.parent_path()))
    throw ConfigError("output directory does not exist: " + p.parent_path().string());
}

std::vector<double> wavelengths(const WavelengthGrid& g) {
  std::vector<double> x;
  for (int k = 0; k < g.count(); ++k) x.push_back(g.wavelength(k));
  return x;
}

std::vector<double> as_vector(const Spectrum& s) { return {s.values().data(), s.values().data() + s.size()}; }

/// A reflectance given as a spectra CSV path or a patch name in the configured set.
NamedSpectrum resolve_reflectance(const RunConfig& cfg, const std::string& what) {
  if (fs::is_regular_file(what)) return {fs::path(what).stem().string(), load_single_reflectance(what)};
  for (auto& s : load_reflectances(cfg.reflectances))
    if (s.name == what) return s;
  throw LookupError("unknown reflectance '" + what + "' (not a file and not a patch of " + cfg.reflectances.name + ")");
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

Eigen::MatrixXd read_rgb_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, 0, "cannot open file");
  std::string line;
  std::size_t row = 0, ncols = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++row;
    if (detail::is_skippable(line)) continue;
    const auto cells = detail::split_csv(line);
    if (ncols == 0) {
      ncols = cells.size();
      if (ncols < 2) throw ParseError(path.string(), row, 1, "need a label column and channel columns");
      continue;
    }
    if (cells.size() != ncols) throw ParseError(path.string(), row, std::min(cells.size(), ncols) + 1, "ragged row");
    std::vector<double> v;
    for (std::size_t c = 1; c < ncols; ++c) {
      double x = 0;
      if (!detail::parse_double(cells[c], x)) throw ParseError(path.string(), row, c + 1, "non-numeric value");
      v.push_back(x);
    }
    rows.push_back(std::move(v));
  }
  Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(ncols ? ncols - 1 : 0));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c + 1 < ncols; ++c) m(Eigen::Index(i), Eigen::Index(c)) = rows[i][c];
  return m;
}

// ---------------------------------------------------------------------------

int cmd_kernel(const Common& c) {
  const RunConfig cfg = load_config(c);
  const fs::path out = c.out;
  ensure_parent(out);
  const VCavity cav = build_v_cavity(cfg.cavity.panel_width_m, cfg.cavity.panel_height_m, cfg.cavity.angle_deg,
                                     cfg.cavity.rows, cfg.cavity.cols);
  const KernelMatrix k = build_kernel(cav, cfg.kernel, cfg.seed);
  save_kernel_csv(out, k);
  std::printf("facets            %d\n", k.m());
  std::printf("method            %s\n", cfg.kernel.method == KernelMethod::exact ? "exact" : "monte_carlo");
  std::printf("max column sum    %.12g\n", k.max_column_sum());
  std::printf("symmetry residual %.3g\n", k.symmetry_residual());
  if (cfg.kernel.method == KernelMethod::monte_carlo) {
    const KernelMatrix ex = kernel_exact(cav, cfg.kernel.quadrature_order);
    std::printf("exact max column sum    %.12g\n", ex.max_column_sum());
    std::printf("max column sum diff     %.3g\n",
                (k.matrix().colwise().sum() - ex.matrix().colwise().sum()).cwiseAbs().maxCoeff());
  }
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_simulate(const Common& c, const std::string& reflectance, std::optional<double> sigma) {
  const RunConfig cfg = load_config(c);
  const fs::path out = c.out;
  ensure_parent(out);
  const NamedSpectrum r = resolve_reflectance(cfg, reflectance);
  const double s = sigma.value_or(cfg.noise_sigma);
  if (!(s >= 0.0)) throw ConfigError("--sigma must be >= 0");
  const Scene scene = make_scene(cfg);
  const RgbObservation obs = simulate(scene, r.spectrum, s, cfg.seed);
  save_observation_csv(out, obs, scene.camera.channel_names());
  std::printf("simulated '%s' on %d facets, wrote %s\n", r.name.c_str(), obs.facets(), out.string().c_str());
  return 0;
}

struct EstimateArgs {
  std::string observation;
  std::string image;
  std::vector<double> quads;
  std::string truth;
  std::string precalibration;
  std::string svg;
};

int cmd_estimate(const Common& c, const EstimateArgs& a) {
  RunConfig cfg = load_config(c);
  const fs::path out = c.out;
  ensure_parent(out);
  if (!a.svg.empty()) ensure_parent(a.svg);
  if (a.observation.empty() == a.image.empty()) throw ConfigError("give exactly one of --observation or --image");
  if (!a.image.empty() && a.quads.size() != 16) throw ConfigError("--quads needs 16 numbers (two panels x 4 corners x y)");
  if (!a.precalibration.empty()) cfg.precalibration = a.precalibration;
  std::optional<NamedSpectrum> truth;
  if (!a.truth.empty()) truth = resolve_reflectance(cfg, a.truth);
  const EstimationConfig est = resolve_estimation(cfg);

  RgbObservation obs = [&] {
    if (!a.observation.empty()) return load_observation_csv(a.observation);
    std::array<PanelQuad, 2> quads;
    for (int p = 0; p < 2; ++p)
      for (int k = 0; k < 4; ++k)
        quads[std::size_t(p)][std::size_t(k)] = {a.quads[std::size_t(p * 8 + k * 2)], a.quads[std::size_t(p * 8 + k * 2 + 1)]};
    return observation_from_image(read_ppm(a.image), quads, cfg.cavity.rows, cfg.cavity.cols);
  }();
  if (cfg.precalibration) obs = apply_precalibration(load_calibration_json(*cfg.precalibration), obs);

  const Scene scene = make_scene(cfg);
  const EstimationResult res = estimate(obs, scene.eig, scene.e0, scene.camera, est);
  std::optional<SpectrumMetrics> metrics;
  if (truth) metrics = compare_spectra(truth->spectrum, res.reflectance);
  json report = estimation_report(res, est, metrics);
  write_json(out, report);
  for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("objective %.6g, iterations %d, %s (%s)\n", res.objective_value, res.iterations,
              res.converged ? "converged" : "not converged", res.stop_reason.c_str());
  if (metrics) std::printf("rmse %.5f  ciede00 %.4f  pd %.5f\n", metrics->rmse, metrics->ciede00, metrics->pd);
  if (!a.svg.empty()) {
    std::vector<ChartSeries> series{{"estimate", as_vector(res.reflectance), "#d62728"}};
    if (truth) series.insert(series.begin(), {"ground truth", as_vector(truth->spectrum), "#1f77b4", true});
    save_svg_chart(a.svg, "Estimated reflectance", wavelengths(res.reflectance.grid()), series);
  }
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_roundtrip(const Common& c, const std::string& svg_dir) {
  const RunConfig cfg = load_config(c);
  const fs::path out = c.out;
  ensure_parent(out);
  if (!svg_dir.empty() && !fs::is_directory(svg_dir)) throw ConfigError("--svg directory does not exist: " + svg_dir);
  const auto patches = load_reflectances(cfg.reflectances);
  const EstimationConfig est = resolve_estimation(cfg);
  const Scene scene = make_scene(cfg);
  const auto rows = roundtrip(scene, patches, est, cfg.noise_sigma, cfg.seed);
  std::vector<MetricsRow> table;
  for (const auto& r : rows) table.push_back({r.name, r.metrics});
  std::ofstream f(out);
  if (!f) throw Error("cannot write " + out.string());
  write_metrics_csv(f, table);
  const SpectrumMetrics mean = mean_metrics(rows);
  int unconverged = 0;
  for (const auto& r : rows) unconverged += r.result.converged ? 0 : 1;
  std::printf("%zu patches  mean rmse %.5f  mean ciede00 %.4f  mean pd %.5f  unconverged %d\n", rows.size(), mean.rmse,
              mean.ciede00, mean.pd, unconverged);
  if (!svg_dir.empty()) {
    for (std::size_t p = 0; p < rows.size(); ++p) {
      std::ostringstream name;
      name << "patch_" << (p < 9 ? "0" : "") << p + 1 << ".svg";
      save_svg_chart(fs::path(svg_dir) / name.str(), rows[p].name, wavelengths(patches[p].spectrum.grid()),
                     {{"ground truth", as_vector(patches[p].spectrum), "#1f77b4", true},
                      {"estimate", as_vector(rows[p].result.reflectance), "#d62728"}});
    }
  }
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_sweep(const Common& c) {
  const RunConfig cfg = load_config(c);
  const fs::path out = c.out;
  ensure_parent(out);
  const auto patches = load_reflectances(cfg.reflectances);
  const auto cells = sweep(cfg, patches);
  std::ofstream f(out);
  if (!f) throw Error("cannot write " + out.string());
  f << "angle_deg,facets_per_panel,mean_rmse,mean_ciede00,mean_pd\n";
  f.precision(10);
  for (const auto& cell : cells) {
    f << cell.angle_deg << ',' << cell.facets_per_panel << ',' << cell.mean.rmse << ',' << cell.mean.ciede00 << ','
      << cell.mean.pd << '\n';
    std::printf("angle %5.1f  facets/panel %4d  rmse %.5f  ciede00 %.4f\n", cell.angle_deg, cell.facets_per_panel,
                cell.mean.rmse, cell.mean.ciede00);
  }
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_metamer(const Common& c, const std::string& file_a, const std::string& file_b, const std::string& svg) {
  RunConfig cfg = load_config(c);
  const fs::path out = c.out;
  ensure_parent(out);
  if (!svg.empty()) ensure_parent(svg);
  if (file_b.size() && file_a.empty()) throw ConfigError("--b needs --a");
  cfg.cavity.angle_deg = cfg.metamer.angle_deg;
  EstimationConfig est = resolve_estimation(cfg);
  est.alpha = 0.0;
  const Scene scene = make_scene(cfg);
  const WavelengthGrid grid = WavelengthGrid::standard();
  const Spectrum a = !file_a.empty()       ? load_single_reflectance(file_a)
                     : cfg.metamer.base_file ? load_single_reflectance(*cfg.metamer.base_file)
                                             : Spectrum::constant(grid, cfg.metamer.base_value, SpectrumKind::reflectance);
  const Spectrum b = !file_b.empty() ? load_single_reflectance(file_b) : construct_metamer(scene, a, cfg.metamer.period_nm);
  const double flat = flat_relative_difference(scene, a, b);
  if (flat > 1e-6) {
    std::fprintf(stderr, "error: spectra are not flat metamers (relative flat difference %.3g > 1e-6)\n", flat);
    return 1;
  }
  const MetamerReport rep = metamer_experiment(scene, a, b, est);
  json j;
  j["angle_deg"] = cfg.metamer.angle_deg;
  j["wavelengths"] = wavelengths(grid);
  j["spectrum_a"] = as_vector(a);
  j["spectrum_b"] = as_vector(b);
  j["flat_relative_difference"] = rep.flat_relative_difference;
  j["bent_divergence"] = rep.bent_divergence;
  j["estimate_a"] = as_vector(rep.estimate_a.reflectance);
  j["estimate_b"] = as_vector(rep.estimate_b.reflectance);
  j["rmse"] = {{"a_to_a", rep.rmse_a_to_a}, {"a_to_b", rep.rmse_a_to_b}, {"b_to_b", rep.rmse_b_to_b}, {"b_to_a", rep.rmse_b_to_a}};
  const bool separated = rep.rmse_a_to_a < rep.rmse_a_to_b && rep.rmse_b_to_b < rep.rmse_b_to_a;
  j["estimates_separated"] = separated;
  write_json(out, j);
  std::printf("flat difference %.3g  bent divergence %.4f\n", rep.flat_relative_difference, rep.bent_divergence);
  std::printf("rmse  est A: to A %.4f, to B %.4f   est B: to B %.4f, to A %.4f   %s\n", rep.rmse_a_to_a, rep.rmse_a_to_b,
              rep.rmse_b_to_b, rep.rmse_b_to_a, separated ? "separated" : "not separated");
  if (!svg.empty())
    save_svg_chart(svg, "Bent metamers", wavelengths(grid),
                   {{"A", as_vector(a), "#1f77b4", true},
                    {"B", as_vector(b), "#2ca02c", true},
                    {"estimate A", as_vector(rep.estimate_a.reflectance), "#1f77b4"},
                    {"estimate B", as_vector(rep.estimate_b.reflectance), "#2ca02c"}});
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_calibrate(const std::string& measured, const std::string& expected, const std::string& out) {
  ensure_parent(out);
  const Eigen::MatrixXd m = read_rgb_table(measured), e = read_rgb_table(expected);
  const CalibrationMap map = fit_precalibration(m, e);
  write_json(out, calibration_json(map));
  for (int c = 0; c < map.channels(); ++c)
    std::printf("channel %d: %.6g x^2 + %.6g x + %.6g  (rms %.4g)\n", c, map.coefficients(c, 0), map.coefficients(c, 1),
                map.coefficients(c, 2), map.residual_rms[c]);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral reflectance from interreflections in a V-shaped cavity"};
  app.require_subcommand(1);

  Common kc, sc, ec, rc, wc, mc;
  auto* kernel = app.add_subcommand("kernel", "Build the kernel matrix and save it as CSV");
  add_common(kernel, kc, "kernel.csv");

  auto* sim = app.add_subcommand("simulate", "Simulate per-facet camera values for one reflectance");
  add_common(sim, sc, "observation.csv");
  std::string sim_refl;
  std::optional<double> sim_sigma;
  sim->add_option("--reflectance", sim_refl, "Patch name in the reflectance set, or a spectra CSV")->required();
  sim->add_option("--sigma", sim_sigma, "Sensor noise, as a fraction of the peak value");

  auto* est = app.add_subcommand("estimate", "Estimate the reflectance from an observation");
  add_common(est, ec, "report.json");
  EstimateArgs ea;
  est->add_option("--observation", ea.observation, "Observation CSV (facet,panel,R,G,B)")->check(CLI::ExistingFile);
  est->add_option("--image", ea.image, "Binary PPM image instead of an observation CSV")->check(CLI::ExistingFile);
  est->add_option("--quads", ea.quads, "16 numbers: panel 0 then panel 1 corners (x y) joint/first row, outer/first row, outer/last row, joint/last row")
      ->delimiter(',');
  est->add_option("--truth", ea.truth, "Ground-truth reflectance (patch name or spectra CSV)");
  est->add_option("--precalibration", ea.precalibration, "Calibration JSON applied before estimation")
      ->check(CLI::ExistingFile);
  est->add_option("--svg", ea.svg, "Write a spectrum plot");

  auto* rt = app.add_subcommand("roundtrip", "Simulate and re-estimate every reflectance in the set");
  add_common(rt, rc, "roundtrip.csv");
  std::string rt_svg;
  rt->add_option("--svg", rt_svg, "Directory for per-patch spectrum plots");

  auto* sw = app.add_subcommand("sweep", "Round trip over cavity angles and facet counts");
  add_common(sw, wc, "sweep.csv");

  auto* mm = app.add_subcommand("metamer", "Bend two flat metamers and estimate both");
  add_common(mm, mc, "metamer.json");
  std::string ma, mb, msvg;
  mm->add_option("--a", ma, "Spectrum A (spectra CSV); default from the configuration")->check(CLI::ExistingFile);
  mm->add_option("--b", mb, "Spectrum B (spectra CSV); default is constructed from A")->check(CLI::ExistingFile);
  mm->add_option("--svg", msvg, "Write a spectrum plot");

  auto* cal = app.add_subcommand("calibrate", "Fit per-channel quadratic pre-calibration from chart values");
  std::string cal_m, cal_e, cal_out = "calibration.json";
  cal->add_option("--measured", cal_m, "Measured values CSV (label,R,G,B)")->required()->check(CLI::ExistingFile);
  cal->add_option("--expected", cal_e, "Expected values CSV (label,R,G,B)")->required()->check(CLI::ExistingFile);
  cal->add_option("--out", cal_out, "Output JSON")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*kernel) return cmd_kernel(kc);
    if (*sim) return cmd_simulate(sc, sim_refl, sim_sigma);
    if (*est) return cmd_estimate(ec, ea);
    if (*rt) return cmd_roundtrip(rc, rt_svg);
    if (*sw) return cmd_sweep(wc);
    if (*mm) return cmd_metamer(mc, ma, mb, msvg);
    if (*cal) return cmd_calibrate(cal_m, cal_e, cal_out);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 2;
  } catch (const FitError& e) {
    std::fprintf(stderr, "fit error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
