// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

#include <gtest/gtest.h>

#include "common.hpp"

using namespace vcavity;
using vctest::kGrid;

namespace {

struct Bench {
  VCavity cav;
  KernelMatrix k;
  EigenKernel eig;
  IrradianceField e0;
};

Bench make_bench(double angle, int grid, const Spectrum& spd = vctest::d65()) {
  VCavity cav = build_v_cavity(0.02, 0.02, angle, grid, grid);
  KernelMatrix k = kernel_exact(cav);
  EigenKernel eig = eigen_prepare(k);
  IrradianceField e0 = direct_irradiance(cav, spd);
  return {std::move(cav), std::move(k), std::move(eig), std::move(e0)};
}

/// Data term through the direct per-band solve.
double direct_data_term(const Bench& s, const Spectrum& r, const RgbObservation& obs, Normalization norm) {
  Eigen::VectorXd model = forward_direct(s.k, r, s.e0, vctest::sigma_camera()).values();
  Eigen::VectorXd target = obs.values();
  if (norm == Normalization::sum) {  // unit mean
    model *= double(model.size()) / model.sum();
    target *= double(target.size()) / target.sum();
  }
  return (model - target).squaredNorm();
}

double fd_gradient_error(const Bench& s, const Spectrum& r, const RgbObservation& obs, const EstimationConfig& cfg) {
  const ObjectiveValue f = objective(r, s.eig, s.e0, vctest::sigma_camera(), obs, cfg);
  const double h = 1e-6;
  Eigen::VectorXd fd(61);
  for (int k = 0; k < 61; ++k) {
    Eigen::VectorXd up = r.values(), dn = r.values();
    up[k] += h;
    dn[k] -= h;
    fd[k] = (objective(Spectrum(kGrid, up), s.eig, s.e0, vctest::sigma_camera(), obs, cfg).value -
             objective(Spectrum(kGrid, dn), s.eig, s.e0, vctest::sigma_camera(), obs, cfg).value) /
            (2 * h);
  }
  return (f.gradient - fd).norm() / std::max(fd.norm(), 1e-300);
}

}  // namespace

TEST(SmoothnessTest, Examples) {
  EXPECT_EQ(smoothness_penalty(Spectrum::constant(kGrid, 0.3)).first, 0.0);
  Eigen::VectorXd ramp(61);
  for (int k = 0; k < 61; ++k) ramp[k] = 0.1 + 0.01 * k;
  EXPECT_NEAR(smoothness_penalty(ramp).first, 0.0, 1e-28);
  EXPECT_DOUBLE_EQ(smoothness_penalty(Eigen::Vector3d(0, 1, 0)).first, 4.0);

  Eigen::VectorXd bumps(61);
  for (int k = 0; k < 61; ++k) bumps[k] = k % 3 == 1 ? 1.0 : 0.0;
  double ref = 0.0;
  for (int k = 1; k < 60; ++k) ref += std::pow(bumps[k + 1] - 2 * bumps[k] + bumps[k - 1], 2);
  EXPECT_DOUBLE_EQ(smoothness_penalty(bumps).first, ref);
}

TEST(SmoothnessTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd r = vctest::random_reflectance(rng).values();
  const Eigen::VectorXd g = smoothness_penalty(r).second;
  for (int k = 0; k < 61; ++k) {
    Eigen::VectorXd up = r, dn = r;
    up[k] += 1e-6;
    dn[k] -= 1e-6;
    EXPECT_NEAR(g[k], (smoothness_penalty(up).first - smoothness_penalty(dn).first) / 2e-6, 1e-6);
  }
}

TEST(ObjectiveTest, VanishesAtTruth) {
  const Bench s = make_bench(45, 6);
  const Spectrum truth = vctest::patch("moderate red");
  const RgbObservation obs = forward_direct(s.k, truth, s.e0, vctest::sigma_camera());
  EstimationConfig cfg;
  cfg.alpha = 0.0;
  const ObjectiveValue f = objective(truth, s.eig, s.e0, vctest::sigma_camera(), obs, cfg);
  EXPECT_LE(f.value, 1e-18 * obs.values().squaredNorm());
}

TEST(ObjectiveTest, DataTermMatchesDirectOracle) {
  std::mt19937_64 rng(17);
  const Bench s = make_bench(60, 5);
  for (auto norm : {Normalization::none, Normalization::sum}) {
    const RgbObservation obs = forward_direct(s.k, vctest::random_reflectance(rng), s.e0, vctest::sigma_camera());
    const Spectrum r = vctest::random_reflectance(rng);
    EstimationConfig cfg;
    cfg.normalization = norm;
    const ObjectiveValue f = objective(r, s.eig, s.e0, vctest::sigma_camera(), obs, cfg);
    const double ref = direct_data_term(s, r, obs, norm);
    EXPECT_NEAR(f.data, ref, (norm == Normalization::sum ? 1e-6 : 1e-9) * ref);
    EXPECT_NEAR(f.value, f.data + 2.5 * smoothness_penalty(r).first, 1e-12 * f.value);
  }
}

TEST(ObjectiveTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 6; ++t) {
    const VCavity cav = vctest::random_cavity(rng, 5);
    const KernelMatrix k = kernel_exact(cav);
    const Bench s{cav, k, eigen_prepare(k), direct_irradiance(cav, vctest::random_spd(rng))};
    const RgbObservation obs = forward_direct(s.k, vctest::random_reflectance(rng), s.e0, vctest::sigma_camera());
    const Spectrum r = vctest::random_reflectance(rng, 0.1, 0.9);
    for (auto norm : {Normalization::none, Normalization::sum}) {
      EstimationConfig cfg;
      cfg.normalization = norm;
      cfg.alpha = t % 2 ? 0.0 : 2.5;
      EXPECT_LE(fd_gradient_error(s, r, obs, cfg), 1e-4) << "trial " << t;
    }
  }
}

TEST(ObjectiveTest, ClampsBelowLowerBound) {
  const Bench s = make_bench(45, 4);
  const RgbObservation obs = forward_direct(s.k, vctest::patch("cyan"), s.e0, vctest::sigma_camera());
  Eigen::VectorXd v = Eigen::VectorXd::Constant(61, 0.4);
  v[3] = -0.2;
  const ObjectiveValue f = objective(Spectrum(kGrid, v), s.eig, s.e0, vctest::sigma_camera(), obs, {});
  EXPECT_TRUE(f.clamped);
  EXPECT_TRUE(std::isfinite(f.value));
}

TEST(EstimateTest, RecoversConstantWithoutPenalty) {
  const Bench s = make_bench(45, 10);
  const Spectrum truth = Spectrum::constant(kGrid, 0.5, SpectrumKind::reflectance);
  const RgbObservation obs = forward_uniform(s.eig, truth, s.e0, vctest::sigma_camera());
  EstimationConfig cfg;
  cfg.alpha = 0.0;
  const EstimationResult res = estimate(obs, s.eig, s.e0, vctest::sigma_camera(), cfg);
  EXPECT_LE((res.reflectance.values().array() - 0.5).abs().maxCoeff(), 1e-3);
}

TEST(EstimateTest, RoundTripSinglePatch) {
  const Bench s = make_bench(45, 10);
  const Spectrum truth = vctest::patch("green");
  const RgbObservation obs = forward_uniform(s.eig, truth, s.e0, vctest::sigma_camera());
  const EstimationResult res = estimate(obs, s.eig, s.e0, vctest::sigma_camera());
  EXPECT_LE(rmse(truth, res.reflectance), 0.02);
  EXPECT_TRUE(res.converged) << res.stop_reason;
  EXPECT_FALSE(res.low_contrast);
  EXPECT_GT(res.iterations, 0);
}

TEST(EstimateTest, TraceIsNonIncreasing) {
  const Bench s = make_bench(60, 8);
  const RgbObservation obs = forward_uniform(s.eig, vctest::patch("purple"), s.e0, vctest::sigma_camera());
  for (bool cont : {true, false}) {
    EstimationConfig cfg;
    cfg.continuation = cont;
    const EstimationResult res = estimate(obs, s.eig, s.e0, vctest::sigma_camera(), cfg);
    ASSERT_FALSE(res.per_iteration_trace.empty());
    for (std::size_t k = 1; k < res.per_iteration_trace.size(); ++k)
      EXPECT_LE(res.per_iteration_trace[k], res.per_iteration_trace[k - 1]);
    EXPECT_DOUBLE_EQ(res.per_iteration_trace.back(), res.objective_value);
  }
}

TEST(EstimateTest, RespectsBounds) {
  const Bench s = make_bench(45, 6);
  const RgbObservation obs = forward_uniform(s.eig, vctest::patch("white 9.5 (.05 D)"), s.e0, vctest::sigma_camera());
  EstimationConfig cfg;
  cfg.lower_bound = 0.1;
  cfg.upper_bound = 0.6;
  const EstimationResult res = estimate(obs, s.eig, s.e0, vctest::sigma_camera(), cfg);
  EXPECT_GE(res.reflectance.values().minCoeff(), 0.1);
  EXPECT_LE(res.reflectance.values().maxCoeff(), 0.6);
  EXPECT_DOUBLE_EQ(res.reflectance.values().maxCoeff(), 0.6);
}

TEST(EstimateTest, StrongPenaltyGivesAffineSpectrum) {
  const Bench s = make_bench(45, 6);
  const RgbObservation obs = forward_uniform(s.eig, vctest::patch("orange"), s.e0, vctest::sigma_camera());
  EstimationConfig cfg;
  cfg.alpha = 1e16;
  const EstimationResult res = estimate(obs, s.eig, s.e0, vctest::sigma_camera(), cfg);
  EXPECT_LT(smoothness_penalty(res.reflectance).first, 1e-10);
}

TEST(EstimateTest, SumModeIgnoresObservationScale) {
  const Bench s = make_bench(45, 8);
  const RgbObservation obs = forward_uniform(s.eig, vctest::patch("yellow"), s.e0, vctest::sigma_camera());
  EstimationConfig cfg;
  cfg.normalization = Normalization::sum;
  const EstimationResult a = estimate(obs, s.eig, s.e0, vctest::sigma_camera(), cfg);
  const EstimationResult b = estimate(obs.scaled(3.0), s.eig, s.e0, vctest::sigma_camera(), cfg);
  EXPECT_EQ(a.reflectance.values(), b.reflectance.values());
  EXPECT_LE(rmse(vctest::patch("yellow"), a.reflectance), 0.06);
}

TEST(EstimateTest, SumModeIgnoresIlluminantScale) {
  const Bench s = make_bench(45, 8);
  const RgbObservation obs = forward_uniform(s.eig, vctest::patch("blue"), s.e0, vctest::sigma_camera());
  EstimationConfig cfg;
  cfg.normalization = Normalization::sum;
  const EstimationResult ref = estimate(obs, s.eig, vctest::d65(), vctest::sigma_camera(), cfg);
  for (double f : {0.1, 10.0}) {
    const EstimationResult res = estimate(obs, s.eig, vctest::d65().scaled(f), vctest::sigma_camera(), cfg);
    EXPECT_EQ(res.reflectance.values(), ref.reflectance.values()) << f;
    EXPECT_EQ(res.iterations, ref.iterations);
  }
}

TEST(EstimateTest, StartingPointDoesNotMatter) {
  const VCavity cav = build_v_cavity(0.02, 0.02, 45, 10, 10);
  const KernelMatrix k = kernel_exact(cav);
  const Scene scene{cav, k, eigen_prepare(k), vctest::d65(), direct_irradiance(cav, vctest::d65()),
                    vctest::sigma_camera()};
  const auto patches = builtin(Builtin::ColorChecker24);
  std::vector<std::vector<PatchOutcome>> runs;
  for (double start : {0.2, 0.5, 0.8}) {
    EstimationConfig cfg;
    cfg.init_value = start;
    runs.push_back(roundtrip(scene, patches, cfg));
  }
  for (std::size_t p = 0; p < patches.size(); ++p)
    for (std::size_t r = 1; r < runs.size(); ++r)
      EXPECT_LE(rmse(runs[0][p].result.reflectance, runs[r][p].result.reflectance), 1e-3) << patches[p].name;
}

TEST(EstimateTest, FlatObservationWarnsLowContrast) {
  const KernelMatrix flat(Eigen::MatrixXd::Zero(8, 8));
  const EigenKernel eig = eigen_prepare(flat);
  const IrradianceField e0{kGrid, vctest::d65().values().transpose().replicate(8, 1)};
  const RgbObservation obs = forward_direct(flat, vctest::patch("foliage"), e0, vctest::sigma_camera());
  const EstimationResult res = estimate(obs, eig, e0, vctest::sigma_camera());
  EXPECT_TRUE(res.low_contrast);
  EXPECT_FALSE(res.warnings.empty());
}

TEST(EstimateTest, RejectsBadInput) {
  const Bench s = make_bench(45, 3);
  const RgbObservation wrong(5, 3, Eigen::VectorXd::Ones(15));
  EXPECT_THROW(estimate(wrong, s.eig, s.e0, vctest::sigma_camera()), ArgumentError);
  const RgbObservation obs = forward_uniform(s.eig, vctest::patch("red"), s.e0, vctest::sigma_camera());
  EstimationConfig cfg;
  cfg.alpha = -1.0;
  EXPECT_THROW(estimate(obs, s.eig, s.e0, vctest::sigma_camera(), cfg), ArgumentError);
  cfg = {};
  cfg.lower_bound = 0.7;
  cfg.upper_bound = 0.6;
  EXPECT_THROW(estimate(obs, s.eig, s.e0, vctest::sigma_camera(), cfg), ArgumentError);
  const CameraModel two(kGrid, vctest::sigma_camera().response().topRows(2));
  EXPECT_THROW(estimate(RgbObservation(18, 2, Eigen::VectorXd::Ones(36)), s.eig, s.e0, two), ArgumentError);
}

// ---------------------------------------------------------------------------
// pre-calibration

TEST(PrecalibrationTest, IdentityAndAffine) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(10.0, 900.0);
  Eigen::MatrixXd measured(24, 3);
  for (Eigen::Index k = 0; k < measured.size(); ++k) measured.data()[k] = u(rng);

  const CalibrationMap id = fit_precalibration(measured, measured);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(id.coefficients(c, 0), 0.0, 1e-10);
    EXPECT_NEAR(id.coefficients(c, 1), 1.0, 1e-10);
    EXPECT_NEAR(id.coefficients(c, 2), 0.0, 1e-10);
  }
  const CalibrationMap aff = fit_precalibration(measured, (2.0 * measured.array() + 1.0).matrix());
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(aff.coefficients(c, 0), 0.0, 1e-10);
    EXPECT_NEAR(aff.coefficients(c, 1), 2.0, 1e-10);
    EXPECT_NEAR(aff.coefficients(c, 2), 1.0, 1e-8);
  }
}

TEST(PrecalibrationTest, NoisyQuadratic) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  const Eigen::Matrix3d gen{{0.8, 0.5, 0.1}, {-0.4, 1.3, 0.2}, {0.3, 0.9, 0.15}};
  Eigen::MatrixXd measured(24, 3), expected(24, 3);
  for (int n = 0; n < 24; ++n)
    for (int c = 0; c < 3; ++c) {
      const double x = u(rng);
      measured(n, c) = x;
      expected(n, c) = ((gen(c, 0) * x + gen(c, 1)) * x + gen(c, 2)) * (1.0 + noise(rng));
    }
  const CalibrationMap map = fit_precalibration(measured, expected);
  for (int c = 0; c < 3; ++c) {
    // coefficient standard errors of this design under 1% relative noise
    Eigen::MatrixXd design(24, 3);
    Eigen::VectorXd sd(24);
    for (int n = 0; n < 24; ++n) {
      const double x = measured(n, c);
      design.row(n) << x * x, x, 1.0;
      sd[n] = 0.01 * ((gen(c, 0) * x + gen(c, 1)) * x + gen(c, 2));
    }
    const Eigen::MatrixXd pinv = design.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::VectorXd se = (pinv * sd.cwiseAbs2().asDiagonal() * pinv.transpose()).diagonal().cwiseSqrt();
    for (int j = 0; j < 3; ++j)
      EXPECT_NEAR(map.coefficients(c, j), gen(c, j), std::max(0.05 * std::abs(gen(c, j)), 4.0 * se[j]))
          << "channel " << c << " coefficient " << j << " se " << se[j];
    for (int n = 0; n < 24; ++n) {
      const double truth = ((gen(c, 0) * measured(n, c) + gen(c, 1)) * measured(n, c) + gen(c, 2));
      EXPECT_NEAR(map.apply(c, measured(n, c)), truth, 0.05 * std::abs(truth));
    }
  }
}

TEST(PrecalibrationTest, RankDeficient) {
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(24, 3, 0.4);
  EXPECT_THROW(fit_precalibration(flat, flat), FitError);
  Eigen::MatrixXd two(24, 3);
  for (int n = 0; n < 24; ++n) two.row(n).setConstant(n % 2 ? 0.2 : 0.7);
  EXPECT_THROW(fit_precalibration(two, two), FitError);
  EXPECT_THROW(fit_precalibration(flat, Eigen::MatrixXd::Zero(10, 3)), ArgumentError);
}

TEST(PrecalibrationTest, Apply) {
  const RgbObservation obs(2, 3, (Eigen::VectorXd(6) << 1, 2, 3, 4, 5, 6).finished());
  EXPECT_EQ(apply_precalibration(CalibrationMap::identity(3), obs).values(), obs.values());
  CalibrationMap twice = CalibrationMap::identity(3);
  twice.coefficients.col(1).setConstant(2.0);
  EXPECT_EQ(apply_precalibration(twice, obs).values(), 2.0 * obs.values());
  CalibrationMap neg = CalibrationMap::identity(3);
  neg.coefficients.col(2).setConstant(-10.0);
  EXPECT_EQ(apply_precalibration(neg, obs).values().maxCoeff(), 0.0);
}

TEST(PrecalibrationTest, FitReducesResidual) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd measured(24, 3), expected(24, 3);
  for (int n = 0; n < 24; ++n)
    for (int c = 0; c < 3; ++c) {
      measured(n, c) = u(rng);
      expected(n, c) = 0.9 * std::pow(measured(n, c), 1.3) + 0.02;
    }
  const CalibrationMap map = fit_precalibration(measured, expected);
  double fitted = 0.0, raw = 0.0;
  for (int n = 0; n < 24; ++n)
    for (int c = 0; c < 3; ++c) {
      fitted += std::abs(map.apply(c, measured(n, c)) - expected(n, c));
      raw += std::abs(measured(n, c) - expected(n, c));
    }
  EXPECT_LT(fitted, 0.2 * raw);
}
