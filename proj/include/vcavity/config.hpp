// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// JSON run configuration. Every key is optional; unknown keys are rejected.
//
// {
//   "cavity":     {"panel_width_m": 0.02, "panel_height_m": 0.02, "angle_deg": 45, "rows": 10, "cols": 10},
//   "kernel":     {"method": "exact" | "monte_carlo", "samples": 64, "quadrature_order": 6, "cache": "k.csv"},
//   "illuminant": "D65" | "D50" | "<spectra csv>",
//   "illumination_mode": "uniform" | "cosine",
//   "camera":     "sigma_sdmerrill" | "nikon_d5100" | "<srf csv>",
//   "reflectances": "ColorChecker24" | "<spectra csv>",
//   "estimation": {"alpha": 2.5, "max_iters": 500, "grad_tol": 1e-8, "step_tol": 1e-12,
//                  "lower_bound": 1e-6, "upper_bound": 1.0, "normalization": "none" | "sum",
//                  "init": 0.5 | "<spectra csv>", "continuation": true},
//   "noise_sigma": 0.0,
//   "seed": 1,
//   "precalibration": "<calibration json>",
//   "sweep":   {"angles_deg": [30, 45, 60, 90], "grids": [8, 10, 16]},
//   "metamer": {"angle_deg": 60, "base": 0.5 | "<spectra csv>", "period_nm": 150}
// }
//
// Relative paths are resolved against the directory holding the config file.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcavity/errors.hpp"
#include "vcavity/forward.hpp"
#include "vcavity/geometry.hpp"
#include "vcavity/inverse.hpp"
#include "vcavity/io.hpp"
#include "vcavity/spectra.hpp"

namespace vcavity {

/// Invalid or inconsistent run configuration.
class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

enum class KernelMethod { exact, monte_carlo };

struct CavityConfig {
  double panel_width_m = 0.02;
  double panel_height_m = 0.02;
  double angle_deg = 45.0;
  int rows = 10;
  int cols = 10;
};

struct KernelConfig {
  KernelMethod method = KernelMethod::exact;
  int samples = 64;
  int quadrature_order = 6;
  std::optional<std::filesystem::path> cache;
};

struct SweepConfig {
  std::vector<double> angles_deg{30.0, 45.0, 60.0, 90.0};
  std::vector<int> grids{8, 10, 16};  // facets per panel = grid^2
};

struct MetamerConfig {
  double angle_deg = 60.0;
  double base_value = 0.5;
  std::optional<std::filesystem::path> base_file;
  double period_nm = 150.0;
};

/// A dataset given either by builtin name or by file.
struct Source {
  std::string name;
  std::optional<std::filesystem::path> file;
};

struct RunConfig {
  CavityConfig cavity;
  KernelConfig kernel;
  Source illuminant{"D65", {}};
  IlluminationMode illumination = IlluminationMode::uniform;
  Source camera{"sigma_sdmerrill", {}};
  Source reflectances{"ColorChecker24", {}};
  EstimationConfig estimation;
  std::optional<std::filesystem::path> init_file;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> precalibration;
  SweepConfig sweep;
  MetamerConfig metamer;
};

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

inline double get_number(const json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError("config: '" + where + key + "' must be a number");
  return obj[key].get<double>();
}

inline int get_int(const json& obj, const char* key, int fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) throw ConfigError("config: '" + where + key + "' must be an integer");
  return obj[key].get<int>();
}

inline std::string get_string(const json& obj, const char* key, const std::string& fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) throw ConfigError("config: '" + where + key + "' must be a string");
  return obj[key].get<std::string>();
}

inline std::filesystem::path existing_file(const std::filesystem::path& base, const std::string& p,
                                           const std::string& what) {
  std::filesystem::path path = p;
  if (path.is_relative()) path = base / path;
  if (!std::filesystem::is_regular_file(path))
    throw ConfigError("config: " + what + " file not found: " + path.string());
  return path;
}

}  // namespace detail

/// Parses and fully validates a configuration document.
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir = ".") {
  using namespace detail;
  RunConfig c;
  check_keys(j, {"cavity", "kernel", "illuminant", "illumination_mode", "camera", "reflectances", "estimation",
                 "noise_sigma", "seed", "precalibration", "sweep", "metamer"},
             "");
  if (j.contains("cavity")) {
    const json& o = j["cavity"];
    check_keys(o, {"panel_width_m", "panel_height_m", "angle_deg", "rows", "cols"}, "cavity");
    c.cavity.panel_width_m = get_number(o, "panel_width_m", c.cavity.panel_width_m, "cavity.");
    c.cavity.panel_height_m = get_number(o, "panel_height_m", c.cavity.panel_height_m, "cavity.");
    c.cavity.angle_deg = get_number(o, "angle_deg", c.cavity.angle_deg, "cavity.");
    c.cavity.rows = get_int(o, "rows", c.cavity.rows, "cavity.");
    c.cavity.cols = get_int(o, "cols", c.cavity.cols, "cavity.");
  }
  try {
    (void)build_v_cavity(c.cavity.panel_width_m, c.cavity.panel_height_m, c.cavity.angle_deg, c.cavity.rows,
                         c.cavity.cols);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: cavity: ") + e.what());
  }

  if (j.contains("kernel")) {
    const json& o = j["kernel"];
    check_keys(o, {"method", "samples", "quadrature_order", "cache"}, "kernel");
    const std::string m = get_string(o, "method", "exact", "kernel.");
    if (m == "exact") c.kernel.method = KernelMethod::exact;
    else if (m == "monte_carlo") c.kernel.method = KernelMethod::monte_carlo;
    else throw ConfigError("config: kernel.method must be 'exact' or 'monte_carlo'");
    c.kernel.samples = get_int(o, "samples", c.kernel.samples, "kernel.");
    c.kernel.quadrature_order = get_int(o, "quadrature_order", c.kernel.quadrature_order, "kernel.");
    if (o.contains("cache")) {
      std::filesystem::path p = get_string(o, "cache", "", "kernel.");
      c.kernel.cache = p.is_relative() ? base_dir / p : p;
    }
  }
  if (c.kernel.samples < 1) throw ConfigError("config: kernel.samples must be >= 1");
  if (c.kernel.quadrature_order < 1 || c.kernel.quadrature_order > 64)
    throw ConfigError("config: kernel.quadrature_order must lie in [1, 64]");

  auto source = [&](const char* key, Source& dst, auto&& is_builtin) {
    if (!j.contains(key)) return;
    const std::string v = get_string(j, key, "", "");
    if (is_builtin(v)) dst = {v, {}};
    else dst = {v, existing_file(base_dir, v, key)};
  };
  source("illuminant", c.illuminant, [](const std::string& v) { return v == "D65" || v == "D50"; });
  source("camera", c.camera, [](const std::string& v) {
    try {
      (void)builtin_camera_from_name(v);
      return true;
    } catch (const LookupError&) {
      return false;
    }
  });
  source("reflectances", c.reflectances, [](const std::string& v) { return v == "ColorChecker24"; });

  const std::string mode = get_string(j, "illumination_mode", "uniform", "");
  if (mode == "uniform") c.illumination = IlluminationMode::uniform;
  else if (mode == "cosine") c.illumination = IlluminationMode::cosine;
  else throw ConfigError("config: illumination_mode must be 'uniform' or 'cosine'");

  if (j.contains("estimation")) {
    const json& o = j["estimation"];
    check_keys(o, {"alpha", "max_iters", "grad_tol", "step_tol", "lower_bound", "upper_bound", "normalization",
                   "init", "continuation"},
               "estimation");
    EstimationConfig& e = c.estimation;
    e.alpha = get_number(o, "alpha", e.alpha, "estimation.");
    e.max_iters = get_int(o, "max_iters", e.max_iters, "estimation.");
    e.grad_tol = get_number(o, "grad_tol", e.grad_tol, "estimation.");
    e.step_tol = get_number(o, "step_tol", e.step_tol, "estimation.");
    e.lower_bound = get_number(o, "lower_bound", e.lower_bound, "estimation.");
    e.upper_bound = get_number(o, "upper_bound", e.upper_bound, "estimation.");
    const std::string n = get_string(o, "normalization", "none", "estimation.");
    if (n == "none") e.normalization = Normalization::none;
    else if (n == "sum") e.normalization = Normalization::sum;
    else throw ConfigError("config: estimation.normalization must be 'none' or 'sum'");
    if (o.contains("init")) {
      if (o["init"].is_number()) e.init_value = o["init"].get<double>();
      else if (o["init"].is_string()) c.init_file = existing_file(base_dir, o["init"].get<std::string>(), "estimation.init");
      else throw ConfigError("config: estimation.init must be a number or a file path");
    }
    if (o.contains("continuation")) {
      if (!o["continuation"].is_boolean()) throw ConfigError("config: estimation.continuation must be a boolean");
      e.continuation = o["continuation"].get<bool>();
    }
  }
  try {
    c.estimation.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: estimation: ") + e.what());
  }

  c.noise_sigma = get_number(j, "noise_sigma", 0.0, "");
  if (!(c.noise_sigma >= 0.0)) throw ConfigError("config: noise_sigma must be >= 0");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("config: seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("precalibration"))
    c.precalibration = existing_file(base_dir, get_string(j, "precalibration", "", ""), "precalibration");

  if (j.contains("sweep")) {
    const json& o = j["sweep"];
    check_keys(o, {"angles_deg", "grids"}, "sweep");
    if (o.contains("angles_deg")) {
      if (!o["angles_deg"].is_array() || o["angles_deg"].empty())
        throw ConfigError("config: sweep.angles_deg must be a non-empty array");
      c.sweep.angles_deg.clear();
      for (const auto& v : o["angles_deg"]) {
        if (!v.is_number() || !(v.get<double>() > 0 && v.get<double>() < 180))
          throw ConfigError("config: sweep.angles_deg entries must lie in (0, 180)");
        c.sweep.angles_deg.push_back(v.get<double>());
      }
    }
    if (o.contains("grids")) {
      if (!o["grids"].is_array() || o["grids"].empty()) throw ConfigError("config: sweep.grids must be a non-empty array");
      c.sweep.grids.clear();
      for (const auto& v : o["grids"]) {
        if (!v.is_number_integer() || v.get<int>() < 1) throw ConfigError("config: sweep.grids entries must be >= 1");
        c.sweep.grids.push_back(v.get<int>());
      }
    }
  }
  if (j.contains("metamer")) {
    const json& o = j["metamer"];
    check_keys(o, {"angle_deg", "base", "period_nm"}, "metamer");
    c.metamer.angle_deg = get_number(o, "angle_deg", c.metamer.angle_deg, "metamer.");
    c.metamer.period_nm = get_number(o, "period_nm", c.metamer.period_nm, "metamer.");
    if (o.contains("base")) {
      if (o["base"].is_number()) c.metamer.base_value = o["base"].get<double>();
      else if (o["base"].is_string()) c.metamer.base_file = existing_file(base_dir, o["base"].get<std::string>(), "metamer.base");
      else throw ConfigError("config: metamer.base must be a number or a file path");
    }
  }
  if (!(c.metamer.angle_deg > 0 && c.metamer.angle_deg < 180))
    throw ConfigError("config: metamer.angle_deg must lie in (0, 180)");
  if (!(c.metamer.base_value > 0 && c.metamer.base_value < 1))
    throw ConfigError("config: metamer.base must lie in (0, 1)");
  if (!(c.metamer.period_nm > 0)) throw ConfigError("config: metamer.period_nm must be positive");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace vcavity
