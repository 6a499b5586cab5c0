// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "common.hpp"

using namespace vcavity;
using vctest::kGrid;

namespace {

RunConfig parse(const std::string& text, const std::filesystem::path& base = ".") {
  return parse_run_config(json::parse(text), base);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST(ObservationCsvTest, RoundTrip) {
  Eigen::VectorXd v(12);
  for (int k = 0; k < 12; ++k) v[k] = 0.1 * k + 1.0 / 3.0;
  const RgbObservation obs(4, 3, v);
  std::stringstream ss;
  write_observation_csv(ss, obs, {"R", "G", "B"});
  const RgbObservation back = parse_observation_csv(ss);
  EXPECT_EQ(back.facets(), 4);
  EXPECT_EQ(back.channels(), 3);
  EXPECT_EQ(back.values(), obs.values());
}

TEST(ObservationCsvTest, Errors) {
  std::istringstream out_of_order("facet,panel,R,G,B\n1,0,1,2,3\n0,1,1,2,3\n");
  EXPECT_THROW(parse_observation_csv(out_of_order), ParseError);
  std::istringstream negative("facet,panel,R,G,B\n0,0,1,-2,3\n1,1,1,2,3\n");
  EXPECT_THROW(parse_observation_csv(negative), Error);
  std::istringstream ragged("facet,panel,R,G,B\n0,0,1,2\n");
  try {
    parse_observation_csv(ragged);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(PpmTest, ReadAndSampleFacets) {
  const auto dir = vctest::scratch_dir("ppm");
  const int w = 40, h = 20;
  {
    std::ofstream out(dir / "img.ppm", std::ios::binary);
    out << "P6\n# test\n" << w << " " << h << "\n65535\n";
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const int v = 1000 * (x / 10) + 100 * (y / 10) + c;
          out.put(char(v >> 8)).put(char(v & 0xff));
        }
  }
  const RgbImage img = read_ppm(dir / "img.ppm");
  EXPECT_EQ(img.width, w);
  EXPECT_EQ(img.height, h);
  EXPECT_EQ(img.at(25, 15, 2), 2102.0);

  // panel 0 occupies x in [0, 20) with the joint at x = 20, panel 1 x in [20, 40)
  const std::array<PanelQuad, 2> quads{
      PanelQuad{Eigen::Vector2d(20, 0), Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 20), Eigen::Vector2d(20, 20)},
      PanelQuad{Eigen::Vector2d(20, 0), Eigen::Vector2d(40, 0), Eigen::Vector2d(40, 20), Eigen::Vector2d(20, 20)}};
  const RgbObservation obs = observation_from_image(img, quads, 2, 2);
  ASSERT_EQ(obs.facets(), 8);
  EXPECT_EQ(obs(0, 0), 1000.0);  // panel 0, row 0, joint column
  EXPECT_EQ(obs(0, 1), 0.0);
  EXPECT_EQ(obs(1, 2), 1101.0);
  EXPECT_EQ(obs(2, 4 + 1), 3002.0);

  const std::array<PanelQuad, 2> outside{quads[0], PanelQuad{Eigen::Vector2d(20, 0), Eigen::Vector2d(90, 0),
                                                              Eigen::Vector2d(90, 20), Eigen::Vector2d(20, 20)}};
  EXPECT_THROW(observation_from_image(img, outside, 2, 2), RangeError);

  write_text(dir / "bad.ppm", "P3\n1 1\n255\n0 0 0\n");
  EXPECT_THROW(read_ppm(dir / "bad.ppm"), ParseError);
}

TEST(ReportTest, MetricsCsvHasMeanRow) {
  std::ostringstream out;
  write_metrics_csv(out, {{"a", {0.1, 1.0, 0.01}}, {"b", {0.3, 2.0, 0.03}}});
  EXPECT_EQ(out.str(), "patch,rmse,ciede00,pd\na,0.1,1,0.01\nb,0.3,2,0.03\nmean,0.2,1.5,0.02\n");
}

TEST(ReportTest, SvgChart) {
  std::ostringstream out;
  write_svg_chart(out, "t <1>", {400, 500, 600}, {{"truth", {0.1, 0.2, 0.3}}, {"est", {0.1, 0.25, 0.3}, "#f00", true}});
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
  EXPECT_NE(s.find("t &lt;1&gt;"), std::string::npos);
  EXPECT_EQ(std::count(s.begin(), s.end(), '<') - std::count(s.begin(), s.end(), '>'), 0);
  EXPECT_THROW(write_svg_chart(out, "x", {1, 2}, {{"bad", {1}}}), ArgumentError);
}

TEST(ReportTest, CalibrationJsonRoundTrip) {
  const auto dir = vctest::scratch_dir("calib");
  CalibrationMap map = CalibrationMap::identity(3);
  map.coefficients(1, 0) = 0.25;
  map.coefficients(2, 2) = -3.5;
  std::ofstream(dir / "c.json") << calibration_json(map).dump();
  EXPECT_EQ(load_calibration_json(dir / "c.json").coefficients, map.coefficients);
  write_text(dir / "bad.json", "{\"coefficients\": [[1, 2]]}");
  EXPECT_THROW(load_calibration_json(dir / "bad.json"), ParseError);
}

TEST(ReportTest, EstimationReportFields) {
  EstimationResult r{Spectrum::constant(kGrid, 0.5), 1.0, 0.5, 0.2, 7, true, "gradient", {3.0, 1.0}, false, {}};
  const json j = estimation_report(r, EstimationConfig{});
  EXPECT_EQ(j["reflectance"].size(), 61u);
  EXPECT_FALSE(j.contains("rmse"));
  EXPECT_EQ(j["config"]["alpha"], 2.5);
  EXPECT_TRUE(estimation_report(r, EstimationConfig{}, SpectrumMetrics{0.1, 0.2, 0.3}).contains("rmse"));
}

// ---------------------------------------------------------------------------
// configuration

TEST(ConfigTest, Defaults) {
  const RunConfig c = parse("{}");
  EXPECT_EQ(c.cavity.angle_deg, 45.0);
  EXPECT_EQ(c.cavity.rows, 10);
  EXPECT_EQ(c.kernel.method, KernelMethod::exact);
  EXPECT_EQ(c.illuminant.name, "D65");
  EXPECT_EQ(c.estimation.alpha, 2.5);
  EXPECT_EQ(c.estimation.normalization, Normalization::none);
  EXPECT_EQ(c.seed, 1u);
}

TEST(ConfigTest, ParsesValues) {
  const RunConfig c = parse(R"({"cavity": {"angle_deg": 60, "rows": 4, "cols": 5},
    "kernel": {"method": "monte_carlo", "samples": 100},
    "illuminant": "D50", "camera": "nikon_d5100", "illumination_mode": "cosine",
    "estimation": {"alpha": 0, "normalization": "sum", "init": 0.3, "continuation": false},
    "noise_sigma": 0.01, "seed": 42,
    "sweep": {"angles_deg": [30, 90], "grids": [4]},
    "metamer": {"angle_deg": 70, "base": 0.4, "period_nm": 120}})");
  EXPECT_EQ(c.cavity.angle_deg, 60.0);
  EXPECT_EQ(c.cavity.cols, 5);
  EXPECT_EQ(c.kernel.method, KernelMethod::monte_carlo);
  EXPECT_EQ(c.kernel.samples, 100);
  EXPECT_EQ(c.illuminant.name, "D50");
  EXPECT_EQ(c.camera.name, "nikon_d5100");
  EXPECT_EQ(c.illumination, IlluminationMode::cosine);
  EXPECT_EQ(c.estimation.alpha, 0.0);
  EXPECT_EQ(c.estimation.normalization, Normalization::sum);
  EXPECT_EQ(c.estimation.init_value, 0.3);
  EXPECT_FALSE(c.estimation.continuation);
  EXPECT_EQ(c.noise_sigma, 0.01);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.sweep.angles_deg, (std::vector<double>{30, 90}));
  EXPECT_EQ(c.metamer.period_nm, 120.0);
}

TEST(ConfigTest, RejectsUnknownKeys) {
  EXPECT_THROW(parse(R"({"cavty": {}})"), ConfigError);
  EXPECT_THROW(parse(R"({"cavity": {"angle": 45}})"), ConfigError);
  EXPECT_THROW(parse(R"({"estimation": {"alpha": 1, "beta": 2}})"), ConfigError);
  EXPECT_THROW(parse(R"({"metamer": {"shift": 2}})"), ConfigError);
}

TEST(ConfigTest, RejectsBadValues) {
  EXPECT_THROW(parse(R"({"cavity": {"angle_deg": 180}})"), ConfigError);
  EXPECT_THROW(parse(R"({"cavity": {"rows": 2.5}})"), ConfigError);
  EXPECT_THROW(parse(R"({"kernel": {"method": "center"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"kernel": {"samples": 0}})"), ConfigError);
  EXPECT_THROW(parse(R"({"illuminant": "no_such_file.csv"})"), ConfigError);
  EXPECT_THROW(parse(R"({"estimation": {"alpha": -1}})"), ConfigError);
  EXPECT_THROW(parse(R"({"estimation": {"normalization": "max"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"noise_sigma": -0.1})"), ConfigError);
  EXPECT_THROW(parse(R"({"seed": -3})"), ConfigError);
  EXPECT_THROW(parse(R"({"sweep": {"grids": []}})"), ConfigError);
  EXPECT_THROW(parse(R"({"metamer": {"base": 1.5}})"), ConfigError);
  EXPECT_THROW(parse(R"([1, 2])"), ConfigError);
}

TEST(ConfigTest, ResolvesRelativePaths) {
  const auto dir = vctest::scratch_dir("config");
  std::filesystem::create_directories(dir / "sub");
  write_text(dir / "sub" / "r.csv", "wavelength_nm,x\n400,0.2\n700,0.6\n");
  write_text(dir / "run.json", R"({"reflectances": "sub/r.csv", "kernel": {"cache": "k.csv"}})");
  const RunConfig c = load_run_config(dir / "run.json");
  ASSERT_TRUE(c.reflectances.file.has_value());
  EXPECT_EQ(*c.reflectances.file, dir / "sub" / "r.csv");
  EXPECT_EQ(*c.kernel.cache, dir / "k.csv");
  const auto refl = load_reflectances(c.reflectances);
  ASSERT_EQ(refl.size(), 1u);
  EXPECT_NEAR(refl[0].spectrum[30], 0.4, 1e-12);

  write_text(dir / "broken.json", "{\"cavity\": ");
  EXPECT_THROW(load_run_config(dir / "broken.json"), ConfigError);
  EXPECT_THROW(load_run_config(dir / "missing.json"), ConfigError);
}

TEST(ExperimentsTest, SimulateNoiseStatistics) {
  RunConfig cfg;
  const Scene scene = make_scene(cfg);
  const Spectrum r = vctest::patch("light skin");
  const RgbObservation clean = simulate(scene, r);
  const RgbObservation noisy = simulate(scene, r, 0.01, 5);
  EXPECT_EQ(simulate(scene, r, 0.01, 5).values(), noisy.values());
  const Eigen::ArrayXd d = (noisy.values() - clean.values()).array() / clean.values().maxCoeff();
  const double sd = std::sqrt((d - d.mean()).square().sum() / double(d.size() - 1));
  EXPECT_NEAR(sd, 0.01, 0.002);
}

TEST(ExperimentsTest, MetamerConstruction) {
  RunConfig cfg;
  cfg.cavity.angle_deg = 60;
  const Scene scene = make_scene(cfg);
  const Spectrum a = Spectrum::constant(kGrid, 0.5, SpectrumKind::reflectance);
  const Spectrum b = construct_metamer(scene, a, 150);
  EXPECT_LE(flat_relative_difference(scene, a, b), 1e-12);
  EXPECT_GE(b.values().minCoeff(), 0.05);
  EXPECT_LE(b.values().maxCoeff(), 0.95);
  EXPECT_GT(rmse(a, b), 0.1);
  const MetamerReport same = metamer_experiment(scene, a, a, {});
  EXPECT_EQ(same.bent_divergence, 0.0);
}
