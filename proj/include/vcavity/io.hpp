// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// File formats: observation CSV, binary PPM ingestion, JSON reports,
// metrics tables and SVG line charts.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vcavity/errors.hpp"
#include "vcavity/forward.hpp"
#include "vcavity/inverse.hpp"
#include "vcavity/spectra.hpp"

namespace vcavity {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Observation CSV: `facet,panel,R,G,B`, one row per facet in index order.

inline void write_observation_csv(std::ostream& out, const RgbObservation& obs,
                                  const std::vector<std::string>& channel_names) {
  if (int(channel_names.size()) != obs.channels())
    throw ArgumentError("write_observation_csv: channel name count mismatch");
  const int half = obs.facets() / 2;
  out << "facet,panel";
  for (const auto& n : channel_names) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (int i = 0; i < obs.facets(); ++i) {
    out << i << ',' << (half > 0 && i >= half ? 1 : 0);
    for (int c = 0; c < obs.channels(); ++c) out << ',' << obs(c, i);
    out << '\n';
  }
}

inline void save_observation_csv(const std::filesystem::path& path, const RgbObservation& obs,
                                 const std::vector<std::string>& channel_names) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_observation_csv(out, obs, channel_names);
}

inline RgbObservation parse_observation_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t row = 0;
  std::size_t ncols = 0;
  std::vector<std::vector<double>> channels;
  int next_facet = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::is_skippable(line)) continue;
    const auto cells = detail::split_csv(line);
    if (ncols == 0) {
      if (cells.size() < 3 || cells[0] != "facet" || cells[1] != "panel")
        throw ParseError(source, row, 1, "header must be 'facet,panel,<channels...>'");
      ncols = cells.size();
      channels.resize(ncols - 2);
      continue;
    }
    if (cells.size() != ncols)
      throw ParseError(source, row, std::min(cells.size(), ncols) + 1,
                       "expected " + std::to_string(ncols) + " cells");
    double v = 0;
    if (!detail::parse_double(cells[0], v) || v != next_facet)
      throw ParseError(source, row, 1, "facets must be numbered 0, 1, 2, ... in order");
    ++next_facet;
    for (std::size_t c = 2; c < ncols; ++c) {
      if (!detail::parse_double(cells[c], v)) throw ParseError(source, row, c + 1, "non-numeric value");
      if (v < 0) throw ParseError(source, row, c + 1, "negative sensor value");
      channels[c - 2].push_back(v);
    }
  }
  if (ncols == 0 || next_facet == 0) throw ParseError(source, 0, 0, "no observation rows");
  const int m = next_facet, s = int(channels.size());
  Eigen::VectorXd values(Eigen::Index(m) * s);
  for (int c = 0; c < s; ++c)
    for (int i = 0; i < m; ++i) values[Eigen::Index(c) * m + i] = channels[std::size_t(c)][std::size_t(i)];
  return {m, s, std::move(values)};
}

inline RgbObservation load_observation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, 0, "cannot open file");
  return parse_observation_csv(in, path.string());
}

// ---------------------------------------------------------------------------
// Binary PPM (P6), 8 or 16 bit.

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major, 3 values per pixel, in [0, maxval]

  double at(int x, int y, int c) const {
    return pixels[(std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3 + std::size_t(c)];
  }
};

inline RgbImage read_ppm(const std::filesystem::path& path) {
  const std::string src = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(src, 0, 0, "cannot open file");
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P6") throw ParseError(src, 1, 1, "not a binary PPM (P6) file");
  RgbImage img;
  long maxval = 0;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw ParseError(src, 1, 0, "malformed PPM header");
  }
  if (img.width < 1 || img.height < 1 || maxval < 1 || maxval > 65535)
    throw ParseError(src, 1, 0, "invalid PPM dimensions or maxval");
  const std::size_t n = std::size_t(img.width) * std::size_t(img.height) * 3;
  const std::size_t bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(n * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (std::size_t(in.gcount()) != raw.size()) throw ParseError(src, 0, 0, "truncated pixel data");
  img.pixels.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    img.pixels[k] = bytes == 1 ? raw[k] : double((raw[2 * k] << 8) | raw[2 * k + 1]);
  return img;
}

/// Image-space quadrilateral of one panel, corners ordered
/// (joint, first row), (outer edge, first row), (outer edge, last row), (joint, last row).
using PanelQuad = std::array<Eigen::Vector2d, 4>;

/// Mean RGB per facet cell. Each panel quad is split bilinearly into
/// rows x cols cells; each cell is averaged over a samples x samples grid of
/// nearest pixels.
inline RgbObservation observation_from_image(const RgbImage& img, const std::array<PanelQuad, 2>& quads,
                                             int rows, int cols, int samples = 8) {
  if (rows < 1 || cols < 1 || samples < 1) throw ArgumentError("observation_from_image: bad grid");
  const int m = 2 * rows * cols;
  Eigen::VectorXd values(Eigen::Index(m) * 3);
  for (int p = 0; p < 2; ++p) {
    const PanelQuad& q = quads[std::size_t(p)];
    auto map = [&](double u, double v) {  // u: joint->outer, v: first->last row
      return (1 - u) * (1 - v) * q[0] + u * (1 - v) * q[1] + u * v * q[2] + (1 - u) * v * q[3];
    };
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        std::array<double, 3> acc{0, 0, 0};
        for (int a = 0; a < samples; ++a)
          for (int b = 0; b < samples; ++b) {
            const Eigen::Vector2d xy = map((c + (a + 0.5) / samples) / cols, (r + (b + 0.5) / samples) / rows);
            const int x = int(std::floor(xy.x())), y = int(std::floor(xy.y()));
            if (x < 0 || y < 0 || x >= img.width || y >= img.height)
              throw RangeError("observation_from_image: facet region falls outside the image");
            for (int ch = 0; ch < 3; ++ch) acc[std::size_t(ch)] += img.at(x, y, ch);
          }
        const int i = p * rows * cols + r * cols + c;
        for (int ch = 0; ch < 3; ++ch)
          values[Eigen::Index(ch) * m + i] = acc[std::size_t(ch)] / (samples * samples);
      }
  }
  return {m, 3, std::move(values)};
}

// ---------------------------------------------------------------------------
// Reports and tables

struct SpectrumMetrics {
  double rmse = 0.0;
  double ciede00 = 0.0;
  double pd = 0.0;
};

inline const char* to_string(Normalization n) { return n == Normalization::sum ? "sum" : "none"; }

inline json estimation_config_json(const EstimationConfig& c) {
  json j;
  j["alpha"] = c.alpha;
  j["max_iters"] = c.max_iters;
  j["grad_tol"] = c.grad_tol;
  j["step_tol"] = c.step_tol;
  j["lower_bound"] = c.lower_bound;
  j["upper_bound"] = c.upper_bound;
  j["normalization"] = to_string(c.normalization);
  if (c.init) j["init"] = "custom";
  else j["init"] = c.init_value;
  j["continuation"] = c.continuation;
  return j;
}

inline json estimation_report(const EstimationResult& r, const EstimationConfig& config,
                              const std::optional<SpectrumMetrics>& metrics = std::nullopt) {
  json j;
  const WavelengthGrid& grid = r.reflectance.grid();
  std::vector<double> wl, refl;
  for (int k = 0; k < grid.count(); ++k) {
    wl.push_back(grid.wavelength(k));
    refl.push_back(r.reflectance[k]);
  }
  j["reflectance"] = refl;
  j["wavelengths"] = wl;
  j["objective"] = r.objective_value;
  j["data_residual"] = r.data_residual;
  j["smoothness_penalty"] = r.smoothness_penalty;
  if (metrics) {
    j["rmse"] = metrics->rmse;
    j["ciede00"] = metrics->ciede00;
    j["pd"] = metrics->pd;
  }
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["stop_reason"] = r.stop_reason;
  j["trace"] = r.per_iteration_trace;
  j["warnings"] = r.warnings;
  j["config"] = estimation_config_json(config);
  return j;
}

struct MetricsRow {
  std::string patch;
  SpectrumMetrics m;
};

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows, bool with_mean = true) {
  out << "patch,rmse,ciede00,pd\n" << std::setprecision(10);
  SpectrumMetrics mean;
  for (const auto& r : rows) {
    out << r.patch << ',' << r.m.rmse << ',' << r.m.ciede00 << ',' << r.m.pd << '\n';
    mean.rmse += r.m.rmse / double(rows.size());
    mean.ciede00 += r.m.ciede00 / double(rows.size());
    mean.pd += r.m.pd / double(rows.size());
  }
  if (with_mean && !rows.empty())
    out << "mean," << mean.rmse << ',' << mean.ciede00 << ',' << mean.pd << '\n';
}

struct ChartSeries {
  std::string name;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

/// Minimal SVG line chart with axes, ticks and a legend.
inline void write_svg_chart(std::ostream& out, const std::string& title, const std::vector<double>& x,
                            const std::vector<ChartSeries>& series, const std::string& x_label = "wavelength (nm)",
                            const std::string& y_label = "reflectance") {
  if (x.size() < 2) throw ArgumentError("write_svg_chart: need at least two x values");
  const double w = 640, h = 400, l = 60, r = 150, t = 40, b = 50;
  double ymin = 0.0, ymax = 0.0;
  for (const auto& s : series) {
    if (s.y.size() != x.size()) throw ArgumentError("write_svg_chart: series length mismatch");
    for (double v : s.y) ymax = std::max(ymax, v), ymin = std::min(ymin, v);
  }
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double x0 = x.front(), x1 = x.back();
  auto px = [&](double v) { return l + (v - x0) / (x1 - x0) * (w - l - r); };
  auto py = [&](double v) { return h - b - (v - ymin) / (ymax - ymin) * (h - t - b); };
  auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '&') o += "&amp;";
      else if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else o += c;
    }
    return o;
  };
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << esc(title) << "</text>\n";
  out << "<line x1=\"" << l << "\" y1=\"" << h - b << "\" x2=\"" << w - r << "\" y2=\"" << h - b
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << l << "\" y1=\"" << t << "\" x2=\"" << l << "\" y2=\"" << h - b << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0, yv = ymin + (ymax - ymin) * k / 5.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << h - b + 16 << "\" text-anchor=\"middle\">"
        << std::setprecision(0) << xv << "</text>\n";
    out << "<text x=\"" << l - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3)
        << yv << "</text>\n";
    out << std::setprecision(2);
  }
  out << "<text x=\"" << (l + w - r) / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">" << esc(x_label)
      << "</text>\n";
  out << "<text x=\"15\" y=\"" << (t + h - b) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << (t + h - b) / 2 << ")\">" << esc(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    out << "<polyline fill=\"none\" stroke=\"" << ser.color << "\" stroke-width=\"2\""
        << (ser.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
    for (std::size_t k = 0; k < x.size(); ++k) out << (k ? " " : "") << px(x[k]) << ',' << py(ser.y[k]);
    out << "\"/>\n";
    const double ly = t + 10 + 18.0 * double(s);
    out << "<line x1=\"" << w - r + 10 << "\" y1=\"" << ly << "\" x2=\"" << w - r + 35 << "\" y2=\"" << ly
        << "\" stroke=\"" << ser.color << "\" stroke-width=\"2\"" << (ser.dashed ? " stroke-dasharray=\"6 4\"" : "")
        << "/>\n";
    out << "<text x=\"" << w - r + 40 << "\" y=\"" << ly + 4 << "\">" << esc(ser.name) << "</text>\n";
  }
  out << "</svg>\n";
}

inline void save_svg_chart(const std::filesystem::path& path, const std::string& title,
                           const std::vector<double>& x, const std::vector<ChartSeries>& series) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_svg_chart(out, title, x, series);
}

inline json calibration_json(const CalibrationMap& map) {
  json j;
  j["coefficients"] = json::array();
  for (int c = 0; c < map.channels(); ++c)
    j["coefficients"].push_back({map.coefficients(c, 0), map.coefficients(c, 1), map.coefficients(c, 2)});
  j["residual_rms"] = std::vector<double>(map.residual_rms.data(), map.residual_rms.data() + map.residual_rms.size());
  return j;
}

inline CalibrationMap load_calibration_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, 0, "cannot open file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, 0, e.what());
  }
  if (!j.is_object() || !j.contains("coefficients") || !j["coefficients"].is_array() || j["coefficients"].empty())
    throw ParseError(path.string(), 0, 0, "expected {\"coefficients\": [[a, b, c], ...]}");
  const auto& co = j["coefficients"];
  CalibrationMap map{Eigen::MatrixXd(Eigen::Index(co.size()), 3), Eigen::VectorXd::Zero(Eigen::Index(co.size()))};
  for (std::size_t c = 0; c < co.size(); ++c) {
    if (!co[c].is_array() || co[c].size() != 3)
      throw ParseError(path.string(), 0, 0, "each channel needs three coefficients");
    for (std::size_t k = 0; k < 3; ++k) {
      if (!co[c][k].is_number()) throw ParseError(path.string(), 0, 0, "coefficients must be numbers");
      map.coefficients(Eigen::Index(c), Eigen::Index(k)) = co[c][k].get<double>();
    }
  }
  return map;
}

}  // namespace vcavity
