// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// Uniform reflectance estimation from one per-facet camera observation.
//
// The data term is evaluated in the kernel eigenbasis: with Q orthogonal,
// ||rho_img - rho(r)||^2 = ||Q^T rho_img - Q^T rho(r)||^2, and Q^T rho(r) is
// a cheap diagonal expression in r.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcavity/errors.hpp"
#include "vcavity/forward.hpp"
#include "vcavity/spectra.hpp"

namespace vcavity {

enum class Normalization { none, sum };

struct EstimationConfig {
  double alpha = 2.5;
  int max_iters = 500;  // per continuation stage
  double grad_tol = 1e-8;
  double step_tol = 1e-12;
  double lower_bound = kReflectanceFloor;
  double upper_bound = 1.0;
  Normalization normalization = Normalization::none;
  double init_value = 0.5;
  std::optional<Spectrum> init;  // overrides init_value
  bool continuation = true;      // warm start by decreasing alpha from alpha*1e8

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ArgumentError("alpha must be >= 0");
    if (max_iters < 1) throw ArgumentError("max_iters must be >= 1");
    if (!(grad_tol >= 0.0) || !(step_tol >= 0.0)) throw ArgumentError("tolerances must be >= 0");
    if (!(lower_bound > 0.0 && lower_bound < upper_bound && upper_bound <= 1.0))
      throw ArgumentError("bounds must satisfy 0 < lower_bound < upper_bound <= 1");
    if (!(init_value > 0.0 && init_value <= 1.0)) throw ArgumentError("init_value must lie in (0, 1]");
  }
};

struct EstimationResult {
  Spectrum reflectance;
  double objective_value = 0.0;
  double data_residual = 0.0;
  double smoothness_penalty = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> per_iteration_trace;
  bool low_contrast = false;
  std::vector<std::string> warnings;
};

/// Sum of squared second differences and its gradient.
inline std::pair<double, Eigen::VectorXd> smoothness_penalty(const Eigen::VectorXd& r) {
  const Eigen::Index q = r.size();
  if (q < 3) throw ArgumentError("smoothness_penalty: need at least 3 bands");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(q);
  double value = 0.0;
  for (Eigen::Index k = 1; k + 1 < q; ++k) {
    const double d = r[k + 1] - 2.0 * r[k] + r[k - 1];
    value += d * d;
    grad[k - 1] += 2.0 * d;
    grad[k] -= 4.0 * d;
    grad[k + 1] += 2.0 * d;
  }
  return {value, grad};
}

inline std::pair<double, Eigen::VectorXd> smoothness_penalty(const Spectrum& r) {
  return smoothness_penalty(r.values());
}

namespace detail {

inline Eigen::MatrixXd second_difference_gram(int q) {
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(q - 2, q);
  for (int k = 0; k + 2 < q; ++k) {
    d2(k, k) = 1.0;
    d2(k, k + 1) = -2.0;
    d2(k, k + 2) = 1.0;
  }
  return d2.transpose() * d2;
}

/// Unit-sum rescaling rounded to single precision, so inputs that differ by a
/// positive factor map to the same bits.
inline Eigen::MatrixXd canonical_unit_sum(const Eigen::MatrixXd& x) {
  const double s = x.sum();
  if (!(s > 0.0)) throw ArgumentError("sum normalization: input sums to zero");
  return (x / s).cast<float>().cast<double>();
}

}  // namespace detail

struct ObjectiveValue {
  double value = 0.0;
  double data = 0.0;
  double penalty = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd gauss_newton;  // filled only on request
  bool clamped = false;
};

/// The objective for one observation, with all r-independent terms precomputed.
class UniformProblem {
 public:
  UniformProblem(const EigenKernel& eig, const IrradianceField& e0, const CameraModel& camera,
                 const RgbObservation& rho_img, Normalization normalization)
      : norm_(normalization), m_(eig.m()), s_(camera.channels()), q_(e0.bands()), grid_(e0.grid), g_(eig.g) {
    if (e0.facets() != m_) throw ArgumentError("estimate: irradiance field does not match kernel size");
    if (!(e0.grid == camera.grid())) throw ArgumentError("estimate: camera and illuminant grids differ");
    if (rho_img.facets() != m_ || rho_img.channels() != s_)
      throw ArgumentError("estimate: observation has " + std::to_string(rho_img.facets()) + " facets x " +
                          std::to_string(rho_img.channels()) + " channels, expected " +
                          std::to_string(m_) + " x " + std::to_string(s_));
    if (q_ < 3) throw ArgumentError("estimate: need at least 3 bands");

    Eigen::MatrixXd e = e0.values;
    Eigen::MatrixXd rho = Eigen::Map<const Eigen::MatrixXd>(rho_img.values().data(), m_, s_);
    if (norm_ == Normalization::sum) {
      e = detail::canonical_unit_sum(e);
      rho = detail::canonical_unit_sum(rho);
      // residuals in unit-mean units, so alpha weighs alike in both modes
      data_weight_ = double(m_) * s_ * double(m_) * s_;
    }
    et_ = eig.Qinv * e / std::numbers::pi;
    a_ = camera.response() * e0.grid.step();
    ata_ = a_.transpose() * a_;
    a_sum_ = a_.colwise().sum().transpose();
    w_ = eig.Qinv * Eigen::VectorXd::Ones(m_);
    rho_t_ = eig.Qinv * rho;
    gram_ = detail::second_difference_gram(q_);
  }

  int bands() const noexcept { return q_; }
  const WavelengthGrid& grid() const noexcept { return grid_; }

  /// Objective at r (clamped into [lb, ub]) with gradient and optionally the
  /// Gauss-Newton Hessian.
  ObjectiveValue evaluate(Eigen::VectorXd r, double alpha, double lb, double ub,
                          bool want_hessian = false) const {
    ObjectiveValue out;
    if ((r.array() < lb).any() || (r.array() > ub).any()) {
      out.clamped = true;
      r = r.cwiseMax(lb).cwiseMin(ub);
    }
    // D = 1/(1/r - g), dD/dr = D^2 / r^2, both m x q.
    Eigen::ArrayXXd d = (-g_).replicate(1, q_).array().rowwise() + r.array().inverse().transpose();
    d = d.inverse();
    const Eigen::ArrayXXd dp = d.square().rowwise() * r.array().square().inverse().transpose();
    const Eigen::MatrixXd mz = (et_.array() * d).matrix();
    const Eigen::MatrixXd b = (et_.array() * dp).matrix();
    const Eigen::MatrixXd z = mz * a_.transpose();  // m x s

    Eigen::MatrixXd res;
    Eigen::VectorXd jt_res;  // J_model^T res
    Eigen::MatrixXd jtj;
    const Eigen::MatrixXd bt_res_base = b.transpose();  // q x m
    if (norm_ == Normalization::none) {
      res = rho_t_ - z;
      jt_res = (a_.transpose().array() * (bt_res_base * res).array()).rowwise().sum();
      if (want_hessian) jtj = ata_.cwiseProduct(b.transpose() * b);
    } else {
      const double s = w_.dot(z.rowwise().sum());
      if (!(s > 0.0) || !std::isfinite(s)) throw NumericError(dump("model sum is not positive", r));
      const Eigen::VectorXd ds = a_sum_.cwiseProduct(b.transpose() * w_);
      res = rho_t_ - z / s;
      const Eigen::VectorXd jz_res =
          (a_.transpose().array() * (bt_res_base * res).array()).rowwise().sum();
      const double z_res = z.cwiseProduct(res).sum();
      jt_res = jz_res / s - ds * (z_res / (s * s));
      if (want_hessian) {
        const Eigen::VectorXd u = (a_.transpose().array() * (bt_res_base * z).array()).rowwise().sum();
        jtj = ata_.cwiseProduct(b.transpose() * b) / (s * s) -
              (u * ds.transpose() + ds * u.transpose()) / (s * s * s) +
              ds * ds.transpose() * (z.squaredNorm() / (s * s * s * s));
      }
    }
    out.data = data_weight_ * res.squaredNorm();
    auto [pen, pen_grad] = smoothness_penalty(r);
    out.penalty = pen;
    out.value = out.data + alpha * pen;
    out.gradient = -2.0 * data_weight_ * jt_res + alpha * pen_grad;
    if (want_hessian) out.gauss_newton = 2.0 * data_weight_ * jtj + 2.0 * alpha * gram_;
    if (!std::isfinite(out.value) || !out.gradient.allFinite())
      throw NumericError(dump("non-finite objective", r));
    return out;
  }

 private:
  static std::string dump(const std::string& what, const Eigen::VectorXd& r) {
    std::ostringstream os;
    os << what << " at iterate r = [";
    os.precision(17);
    for (Eigen::Index k = 0; k < r.size(); ++k) os << (k ? ", " : "") << r[k];
    os << "]";
    return os.str();
  }

  Normalization norm_;
  int m_, s_, q_;
  WavelengthGrid grid_;
  Eigen::VectorXd g_;
  Eigen::MatrixXd et_;     // Q^T E0 / pi, m x q
  Eigen::MatrixXd a_;      // C dlambda, s x q
  Eigen::MatrixXd ata_;    // q x q
  Eigen::VectorXd a_sum_;  // column sums of a_
  Eigen::VectorXd w_;      // Q^T 1
  Eigen::MatrixXd rho_t_;  // Q^T rho_img, m x s
  Eigen::MatrixXd gram_;   // D2^T D2
  double data_weight_ = 1.0;
};

/// Objective value and analytic gradient at r. r below the lower bound (or
/// above the upper) is clamped and flagged.
inline ObjectiveValue objective(const Spectrum& r, const EigenKernel& eig, const IrradianceField& e0,
                                const CameraModel& camera, const RgbObservation& rho_img,
                                const EstimationConfig& config) {
  config.validate();
  if (!(r.grid() == e0.grid)) throw ArgumentError("objective: reflectance grid differs");
  const UniformProblem p(eig, e0, camera, rho_img, config.normalization);
  return p.evaluate(r.values(), config.alpha, config.lower_bound, config.upper_bound);
}

namespace detail {

struct StageOutcome {
  Eigen::VectorXd x;
  ObjectiveValue f;
  int iterations = 0;
  bool converged = false;
  std::string reason;
  std::vector<double> trace;
};

/// Projected Levenberg-Marquardt on the box [lb, ub]. A step is accepted only
/// if it lowers the objective, so the trace is non-increasing.
inline StageOutcome lm_stage(const UniformProblem& p, Eigen::VectorXd x, double alpha,
                             const EstimationConfig& cfg) {
  const double lb = cfg.lower_bound, ub = cfg.upper_bound;
  const int q = int(x.size());
  x = x.cwiseMax(lb).cwiseMin(ub);
  StageOutcome out;
  ObjectiveValue f = p.evaluate(x, alpha, lb, ub, true);
  out.trace.push_back(f.value);
  double mu = 1e-3, nu = 2.0;

  while (true) {
    Eigen::VectorXd pg = f.gradient;
    std::vector<int> free;
    for (int k = 0; k < q; ++k) {
      const bool at_lb = x[k] <= lb && f.gradient[k] > 0.0;
      const bool at_ub = x[k] >= ub && f.gradient[k] < 0.0;
      if (at_lb || at_ub) pg[k] = 0.0;
      else free.push_back(k);
    }
    if (pg.cwiseAbs().maxCoeff() <= cfg.grad_tol * (1.0 + f.value)) {
      out.converged = true;
      out.reason = "gradient";
      break;
    }
    if (out.iterations >= cfg.max_iters) {
      out.reason = "max_iters";
      break;
    }
    const int nf = int(free.size());
    Eigen::MatrixXd hf(nf, nf);
    Eigen::VectorXd gf(nf);
    for (int a = 0; a < nf; ++a) {
      gf[a] = f.gradient[free[std::size_t(a)]];
      for (int b = 0; b < nf; ++b) hf(a, b) = f.gauss_newton(free[std::size_t(a)], free[std::size_t(b)]);
    }
    Eigen::MatrixXd damped = hf;
    damped.diagonal() += mu * hf.diagonal().cwiseMax(1e-300);
    const Eigen::VectorXd pf = damped.ldlt().solve(-gf);
    Eigen::VectorXd xn = x;
    for (int a = 0; a < nf; ++a) xn[free[std::size_t(a)]] += pf[a];
    xn = xn.cwiseMax(lb).cwiseMin(ub);
    const Eigen::VectorXd step = xn - x;
    const double pred = -(f.gradient.dot(step) + 0.5 * step.dot(f.gauss_newton * step));

    bool accepted = false;
    if (pf.allFinite() && pred > 0.0) {
      ObjectiveValue fn = p.evaluate(xn, alpha, lb, ub, true);
      const double rho = (f.value - fn.value) / pred;
      if (rho > 0.0 && fn.value < f.value) {
        accepted = true;
        x = xn;
        f = std::move(fn);
        out.trace.push_back(f.value);
        ++out.iterations;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        if (step.cwiseAbs().maxCoeff() <= cfg.step_tol) {
          out.converged = true;
          out.reason = "step";
          break;
        }
      }
    }
    if (!accepted) {
      mu *= nu;
      nu *= 2.0;
      if (mu > 1e20) {
        // No step along the damped model lowers f in floating point.
        out.converged = true;
        out.reason = "no_decrease";
        break;
      }
    }
  }
  out.x = std::move(x);
  out.f = std::move(f);
  return out;
}

/// Mean over channels of (max - min) / max across facets.
inline double observation_contrast(const RgbObservation& rho) {
  double acc = 0.0;
  for (int c = 0; c < rho.channels(); ++c) {
    const auto ch = rho.channel(c);
    const double hi = ch.maxCoeff();
    acc += hi > 0.0 ? (hi - ch.minCoeff()) / hi : 0.0;
  }
  return acc / rho.channels();
}

}  // namespace detail

/// Box-constrained estimate of a uniform reflectance from one observation.
/// Solver: projected Levenberg-Marquardt, warm-started by continuation in alpha
/// (alpha_ref * 1e8, 1e7, ..., 10, then alpha, with alpha_ref = alpha or 1 when
/// alpha = 0). The trace covers the final stage; iterations count all stages.
inline EstimationResult estimate(const RgbObservation& rho_img, const EigenKernel& eig,
                                 const IrradianceField& e0, const CameraModel& camera,
                                 const EstimationConfig& config = {}) {
  config.validate();
  if (camera.channels() < 3) throw ArgumentError("estimate: camera needs at least 3 channels");
  const UniformProblem problem(eig, e0, camera, rho_img, config.normalization);
  const int q = problem.bands();

  Eigen::VectorXd x;
  if (config.init) {
    if (!(config.init->grid() == e0.grid)) throw ArgumentError("estimate: init spectrum grid differs");
    x = config.init->values();
  } else {
    x = Eigen::VectorXd::Constant(q, config.init_value);
  }

  std::vector<double> alphas;
  if (config.continuation) {
    const double ref = config.alpha > 0.0 ? config.alpha : 1.0;
    for (int k = 8; k >= 1; --k) alphas.push_back(ref * std::pow(10.0, k));
  }
  alphas.push_back(config.alpha);

  int total = 0;
  detail::StageOutcome stage;
  for (double a : alphas) {
    stage = detail::lm_stage(problem, x, a, config);
    total += stage.iterations;
    x = stage.x;
  }

  EstimationResult res{Spectrum::clamped_reflectance(e0.grid, x),
                       stage.f.value,
                       stage.f.data,
                       stage.f.penalty,
                       total,
                       stage.converged,
                       stage.reason,
                       std::move(stage.trace),
                       false,
                       {}};
  if (detail::observation_contrast(rho_img) < 0.02) {
    res.low_contrast = true;
    res.warnings.push_back(
        "inter-facet variation below 2% of signal range; interreflections are weak and the estimate "
        "is poorly constrained");
  }
  return res;
}

inline EstimationResult estimate(const RgbObservation& rho_img, const EigenKernel& eig,
                                 const Spectrum& spd, const CameraModel& camera,
                                 const EstimationConfig& config = {}) {
  IrradianceField e0{spd.grid(), spd.values().transpose().replicate(eig.m(), 1)};
  return estimate(rho_img, eig, e0, camera, config);
}

// ---------------------------------------------------------------------------
// Pre-calibration: per channel, expected = a * measured^2 + b * measured + c.

struct CalibrationMap {
  Eigen::MatrixXd coefficients;  // channels x 3, columns (a, b, c)
  Eigen::VectorXd residual_rms;  // per channel, on the fitting set

  int channels() const noexcept { return int(coefficients.rows()); }
  double apply(int channel, double v) const {
    const auto c = coefficients.row(channel);
    return (c[0] * v + c[1]) * v + c[2];
  }
  static CalibrationMap identity(int channels) {
    CalibrationMap m{Eigen::MatrixXd::Zero(channels, 3), Eigen::VectorXd::Zero(channels)};
    m.coefficients.col(1).setOnes();
    return m;
  }
};

/// measured and expected are n x s (one row per chart patch).
inline CalibrationMap fit_precalibration(const Eigen::MatrixXd& measured, const Eigen::MatrixXd& expected) {
  if (measured.rows() != expected.rows() || measured.cols() != expected.cols() || measured.cols() < 1)
    throw ArgumentError("fit_precalibration: measured and expected shapes differ");
  const Eigen::Index n = measured.rows(), s = measured.cols();
  CalibrationMap map{Eigen::MatrixXd(s, 3), Eigen::VectorXd(s)};
  for (Eigen::Index c = 0; c < s; ++c) {
    std::vector<double> xs(measured.col(c).data(), measured.col(c).data() + n);
    std::sort(xs.begin(), xs.end());
    if (std::unique(xs.begin(), xs.end()) - xs.begin() < 3)
      throw FitError("fit_precalibration: channel " + std::to_string(c) +
                     " needs at least 3 distinct measured values");
    Eigen::MatrixXd design(n, 3);
    design.col(0) = measured.col(c).array().square().matrix();
    design.col(1) = measured.col(c);
    design.col(2).setOnes();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < 3) throw FitError("fit_precalibration: rank-deficient design");
    const Eigen::Vector3d coef = qr.solve(expected.col(c));
    map.coefficients.row(c) = coef.transpose();
    map.residual_rms[c] = std::sqrt((design * coef - expected.col(c)).squaredNorm() / double(n));
  }
  return map;
}

/// Applies the per-channel polynomial; negative outputs are clamped to 0.
inline RgbObservation apply_precalibration(const CalibrationMap& map, const RgbObservation& obs) {
  if (map.channels() != obs.channels())
    throw ArgumentError("apply_precalibration: channel count mismatch");
  Eigen::VectorXd v(obs.values().size());
  for (int c = 0; c < obs.channels(); ++c)
    for (int i = 0; i < obs.facets(); ++i)
      v[Eigen::Index(c) * obs.facets() + i] = std::max(0.0, map.apply(c, obs(c, i)));
  return {obs.facets(), obs.channels(), std::move(v)};
}

}  // namespace vcavity
