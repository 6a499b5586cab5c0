// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

// V-shaped cavity discretization and the geometrical kernel matrix.
//
// Conventions: the two panels meet along the joint edge (the y axis in the
// canonical frame). Column index counts facets away from the joint, row index
// runs along it. Facets are numbered panel-major then row-major:
// index = panel * rows * cols + row * cols + col.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vcavity/errors.hpp"
#include "vcavity/parallel.hpp"
#include "vcavity/spectra.hpp"

namespace vcavity {

struct Facet {
  Eigen::Vector3d center;
  Eigen::Vector3d normal;  // unit, pointing into the cavity
  double area = 0.0;       // m^2
  int panel = 0;
  int row = 0;
  int col = 0;
};

class VCavity {
 public:
  double panel_width() const noexcept { return width_; }
  double panel_height() const noexcept { return height_; }
  double angle_deg() const noexcept { return angle_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int facet_count() const noexcept { return 2 * rows_ * cols_; }
  int facets_per_panel() const noexcept { return rows_ * cols_; }
  const std::vector<Facet>& facets() const noexcept { return facets_; }
  const Facet& facet(int i) const { return facets_.at(std::size_t(i)); }
  int index(int panel, int row, int col) const noexcept {
    return panel * rows_ * cols_ + row * cols_ + col;
  }

  /// Corner of the facet grid: row in [0, rows], col in [0, cols].
  const Eigen::Vector3d& vertex(int panel, int row, int col) const {
    return vertices_[std::size_t(panel)][std::size_t(row * (cols_ + 1) + col)];
  }
  const Eigen::Vector3d& panel_normal(int panel) const { return normals_[std::size_t(panel)]; }
  /// Unit vector along the bisecting plane, pointing out of the cavity opening.
  const Eigen::Vector3d& bisector() const noexcept { return bisector_; }

  /// Point on facet (panel,row,col) at local coordinates (u along cols, v along rows) in [0,1]^2.
  Eigen::Vector3d facet_point(int panel, int row, int col, double u, double v) const {
    const Eigen::Vector3d& o = vertex(panel, row, col);
    return o + u * (vertex(panel, row, col + 1) - o) + v * (vertex(panel, row + 1, col) - o);
  }

  /// Copy mapped by x -> scale * rotation * x + translation.
  VCavity transformed(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
                      double scale = 1.0) const {
    if (!(scale > 0.0) || !std::isfinite(scale))
      throw ArgumentError("transformed: scale must be positive");
    if (!(rotation.transpose() * rotation).isApprox(Eigen::Matrix3d::Identity(), 1e-12))
      throw ArgumentError("transformed: rotation is not orthogonal");
    VCavity out = *this;
    out.width_ *= scale;
    out.height_ *= scale;
    for (auto& panel : out.vertices_)
      for (auto& v : panel) v = scale * (rotation * v) + translation;
    for (auto& n : out.normals_) n = rotation * n;
    out.bisector_ = rotation * bisector_;
    for (auto& f : out.facets_) {
      f.center = scale * (rotation * f.center) + translation;
      f.normal = rotation * f.normal;
      f.area *= scale * scale;
    }
    return out;
  }

  friend VCavity build_v_cavity(double, double, double, int, int);

 private:
  VCavity() = default;

  double width_ = 0, height_ = 0, angle_ = 0;
  int rows_ = 0, cols_ = 0;
  std::array<std::vector<Eigen::Vector3d>, 2> vertices_;
  std::array<Eigen::Vector3d, 2> normals_;
  Eigen::Vector3d bisector_;
  std::vector<Facet> facets_;
};

/// Two panels of panel_width x panel_height metres meeting at angle_deg,
/// each split into rows x cols equal facets.
inline VCavity build_v_cavity(double panel_width, double panel_height, double angle_deg, int rows,
                              int cols) {
  if (!(panel_width > 0.0) || !(panel_height > 0.0) || !std::isfinite(panel_width) ||
      !std::isfinite(panel_height))
    throw ArgumentError("build_v_cavity: panel dimensions must be positive");
  if (!(angle_deg > 0.0 && angle_deg < 180.0))
    throw ArgumentError("build_v_cavity: angle must lie strictly between 0 and 180 degrees");
  if (rows < 1 || cols < 1) throw ArgumentError("build_v_cavity: rows and cols must be >= 1");

  VCavity cav;
  cav.width_ = panel_width;
  cav.height_ = panel_height;
  cav.angle_ = angle_deg;
  cav.rows_ = rows;
  cav.cols_ = cols;
  cav.bisector_ = Eigen::Vector3d::UnitZ();

  const double half = angle_deg * std::numbers::pi / 360.0;
  const double s = std::sin(half), c = std::cos(half);
  const std::array<Eigen::Vector3d, 2> dir = {Eigen::Vector3d(-s, 0, c), Eigen::Vector3d(s, 0, c)};
  cav.normals_ = {Eigen::Vector3d(c, 0, s), Eigen::Vector3d(-c, 0, s)};
  const Eigen::Vector3d along = Eigen::Vector3d::UnitY();
  const double fw = panel_width / cols, fh = panel_height / rows;

  for (int p = 0; p < 2; ++p) {
    auto& verts = cav.vertices_[std::size_t(p)];
    verts.reserve(std::size_t((rows + 1) * (cols + 1)));
    for (int r = 0; r <= rows; ++r)
      for (int k = 0; k <= cols; ++k) verts.push_back(dir[std::size_t(p)] * (k * fw) + along * (r * fh));
  }
  cav.facets_.reserve(std::size_t(2 * rows * cols));
  for (int p = 0; p < 2; ++p)
    for (int r = 0; r < rows; ++r)
      for (int k = 0; k < cols; ++k) {
        Facet f;
        f.center = dir[std::size_t(p)] * ((k + 0.5) * fw) + along * ((r + 0.5) * fh);
        f.normal = cav.normals_[std::size_t(p)];
        f.area = fw * fh;
        f.panel = p;
        f.row = r;
        f.col = k;
        cav.facets_.push_back(f);
      }
  return cav;
}

// ---------------------------------------------------------------------------

/// m x m kernel; entry (i,j) is the fraction of radiosity leaving facet j that
/// arrives as irradiance on facet i, with 1/pi and the source area folded in.
class KernelMatrix {
 public:
  explicit KernelMatrix(Eigen::MatrixXd k) : k_(std::move(k)) {
    if (k_.rows() != k_.cols() || k_.rows() == 0)
      throw ArgumentError("KernelMatrix: matrix must be square and non-empty");
    if (!k_.allFinite()) throw NumericError("KernelMatrix: non-finite entry");
  }

  const Eigen::MatrixXd& matrix() const noexcept { return k_; }
  int m() const noexcept { return int(k_.rows()); }
  double operator()(int i, int j) const { return k_(i, j); }

  double max_column_sum() const { return k_.colwise().sum().maxCoeff(); }
  double symmetry_residual() const { return (k_ - k_.transpose()).cwiseAbs().maxCoeff(); }

 private:
  Eigen::MatrixXd k_;
};

/// Point-pair coupling term (N_i . P_iP_j)(N_j . P_jP_i) V / |P_iP_j|^4 with
/// unnormalised direction vectors. Facing-away pairs give 0.
inline double kernel_pair(const Eigen::Vector3d& pi, const Eigen::Vector3d& ni,
                          const Eigen::Vector3d& pj, const Eigen::Vector3d& nj,
                          double visibility) {
  const Eigen::Vector3d d = pj - pi;
  const double d2 = d.squaredNorm();
  if (!(d2 > 0.0)) throw ArgumentError("kernel_pair: coincident points");
  const double a = ni.dot(d);
  const double b = -nj.dot(d);
  if (a <= 0.0 || b <= 0.0 || visibility == 0.0) return 0.0;
  return a * b * visibility / (d2 * d2);
}

/// Kernel evaluated once at facet centres. Accurate only for facet pairs far
/// apart relative to their size; near the joint its column sums exceed 1.
inline KernelMatrix kernel_center_point(const VCavity& cav) {
  const int m = cav.facet_count();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j) {
    const Facet& fj = cav.facet(j);
    for (int i = 0; i < m; ++i) {
      const Facet& fi = cav.facet(i);
      if (fi.panel == fj.panel) continue;
      k(i, j) = kernel_pair(fi.center, fi.normal, fj.center, fj.normal, 1.0) * fj.area /
                std::numbers::pi;
    }
  }
  return KernelMatrix(std::move(k));
}

namespace detail {

/// Form factors from a point x with normal n to every facet of `panel`
/// (Lambert contour integral). Each directed edge of the facet grid is
/// evaluated once and shared by its two neighbours.
class PanelFormFactors {
 public:
  PanelFormFactors(const VCavity& cav, int panel)
      : cav_(cav), panel_(panel), rows_(cav.rows()), cols_(cav.cols()),
        unit_(std::size_t((rows_ + 1) * (cols_ + 1))),
        h_(std::size_t((rows_ + 1) * cols_)),
        v_(std::size_t(rows_ * (cols_ + 1))) {}

  /// Adds weight * F(x -> facet) to out[facet index within panel].
  void accumulate(const Eigen::Vector3d& x, const Eigen::Vector3d& n, double weight,
                  double* out) {
    for (int r = 0; r <= rows_; ++r)
      for (int c = 0; c <= cols_; ++c)
        unit_[idx(r, c)] = (cav_.vertex(panel_, r, c) - x).normalized();
    for (int r = 0; r <= rows_; ++r)
      for (int c = 0; c < cols_; ++c) h_[std::size_t(r * cols_ + c)] = edge(idx(r, c), idx(r, c + 1), n);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c <= cols_; ++c) v_[idx(r, c)] = edge(idx(r, c), idx(r + 1, c), n);
    const double scale = weight / (2.0 * std::numbers::pi);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) {
        const double s = h_[std::size_t(r * cols_ + c)] + v_[idx(r, c + 1)] -
                         h_[std::size_t((r + 1) * cols_ + c)] - v_[idx(r, c)];
        out[r * cols_ + c] += scale * std::abs(s);
      }
  }

 private:
  std::size_t idx(int r, int c) const { return std::size_t(r * (cols_ + 1) + c); }

  double edge(std::size_t a, std::size_t b, const Eigen::Vector3d& n) const {
    const Eigen::Vector3d cr = unit_[a].cross(unit_[b]);
    const double cn = cr.norm();
    if (cn < 1e-300) return 0.0;
    return std::atan2(cn, unit_[a].dot(unit_[b])) * n.dot(cr) / cn;
  }

  const VCavity& cav_;
  int panel_, rows_, cols_;
  std::vector<Eigen::Vector3d> unit_;
  std::vector<double> h_, v_;
};

/// Integrates point-to-facet form factors over each source facet using the
/// (u, v, weight) rule produced by `rule(j)`, then symmetrises.
template <class Rule>
KernelMatrix integrate_kernel(const VCavity& cav, Rule&& rule) {
  const int m = cav.facet_count();
  const int per_panel = cav.facets_per_panel();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
  parallel_for(m, [&](int j) {
    const Facet& fj = cav.facet(j);
    const int other = 1 - fj.panel;
    PanelFormFactors ff(cav, other);
    std::vector<double> col(std::size_t(per_panel), 0.0);
    for (const auto& [u, v, w] : rule(j))
      ff.accumulate(cav.facet_point(fj.panel, fj.row, fj.col, u, v), fj.normal, w, col.data());
    for (int i = 0; i < per_panel; ++i) k(other * per_panel + i, j) = col[std::size_t(i)];
  });
  Eigen::MatrixXd sym = 0.5 * (k + k.transpose());
  return KernelMatrix(std::move(sym));
}

struct RuleNode {
  double u, v, w;
};

/// Gauss-Legendre nodes and weights on [0, 1] via the Golub-Welsch eigenproblem.
inline std::vector<std::pair<double, double>> gauss_legendre_unit(int n) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jac(k - 1, k) = jac(k, k - 1) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  std::vector<std::pair<double, double>> out;
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    out.emplace_back(0.5 * (es.eigenvalues()[k] + 1.0), v0 * v0);
  }
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform in the open interval (0, 1), a pure function of its arguments.
inline double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ (c + 0x85157AF5ULL));
  return (double(h >> 11) + 0.5) * 0x1p-53;
}

}  // namespace detail

/// Facet-integrated kernel. The inner integral over the receiving facet is
/// closed form; the outer one over the source facet uses an order x order
/// Gauss-Legendre rule. Column sums are at most 1.
inline KernelMatrix kernel_exact(const VCavity& cav, int order = 6) {
  if (order < 1) throw ArgumentError("kernel_exact: quadrature order must be >= 1");
  const auto gl = detail::gauss_legendre_unit(order);
  std::vector<detail::RuleNode> nodes;
  for (const auto& [u, wu] : gl)
    for (const auto& [v, wv] : gl) nodes.push_back({u, v, wu * wv});
  return detail::integrate_kernel(cav, [&](int) -> const std::vector<detail::RuleNode>& { return nodes; });
}

/// Monte Carlo kernel: `samples` stratified jittered points on each source
/// facet (rounded to a square count), each integrated exactly over the
/// receiving facets. The stream depends only on (seed, facet, sample index).
inline KernelMatrix kernel_monte_carlo(const VCavity& cav, int samples, std::uint64_t seed) {
  if (samples < 1) throw ArgumentError("kernel_monte_carlo: samples must be >= 1");
  const int k = std::max(1, int(std::lround(std::sqrt(double(samples)))));
  const double w = 1.0 / (double(k) * k);
  return detail::integrate_kernel(cav, [&](int j) {
    std::vector<detail::RuleNode> nodes;
    nodes.reserve(std::size_t(k * k));
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        const auto t = std::uint64_t(a * k + b);
        nodes.push_back({(a + detail::counter_uniform(seed, std::uint64_t(j), t, 0)) / k,
                         (b + detail::counter_uniform(seed, std::uint64_t(j), t, 1)) / k, w});
      }
    return nodes;
  });
}

// ---------------------------------------------------------------------------
// Kernel cache: first line holds m, then m rows of m comma-separated values.

inline void save_kernel_csv(const std::filesystem::path& path, const KernelMatrix& k) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << k.m() << '\n' << std::setprecision(17);
  for (int i = 0; i < k.m(); ++i) {
    for (int j = 0; j < k.m(); ++j) out << (j ? "," : "") << k(i, j);
    out << '\n';
  }
}

inline KernelMatrix load_kernel_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  const std::string src = path.string();
  if (!in) throw ParseError(src, 0, 0, "cannot open file");
  std::string line;
  std::size_t row = 0;
  long m = -1;
  while (m < 0 && std::getline(in, line)) {
    ++row;
    if (detail::is_skippable(line)) continue;
    double v = 0;
    if (!detail::parse_double(detail::trim(line), v) || v < 1 || v != std::floor(v))
      throw ParseError(src, row, 1, "header must be the matrix size m");
    m = long(v);
  }
  if (m < 0) throw ParseError(src, 0, 0, "empty kernel file");
  Eigen::MatrixXd k(m, m);
  long i = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::is_skippable(line)) continue;
    if (i >= m) throw ParseError(src, row, 1, "more than m data rows");
    const auto cells = detail::split_csv(line);
    if (long(cells.size()) != m)
      throw ParseError(src, row, cells.size() + 1, "expected " + std::to_string(m) + " values");
    for (long j = 0; j < m; ++j)
      if (!detail::parse_double(cells[std::size_t(j)], k(i, j)))
        throw ParseError(src, row, std::size_t(j + 1), "non-numeric value");
    ++i;
  }
  if (i != m) throw ParseError(src, row, 0, "expected " + std::to_string(m) + " data rows");
  return KernelMatrix(std::move(k));
}

}  // namespace vcavity
