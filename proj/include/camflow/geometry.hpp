#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "camflow/common.hpp"

namespace camflow {

/// Image lattice. Column j maps to normalized x = -1 + 2j/(width-1) and row i
/// to y = -1 + 2i/(height-1); a single-sample axis maps to 0.
struct PixelGrid {
  int height = 0;
  int width = 0;

  PixelGrid() = default;
  PixelGrid(int h, int w) : height(h), width(w) {
    if (h <= 0 || w <= 0) {
      throw InputError("PixelGrid: dimensions must be positive, got " + std::to_string(h) +
                       "x" + std::to_string(w));
    }
  }

  double x(int col) const { return width == 1 ? 0.0 : -1.0 + 2.0 * col / (width - 1); }
  double y(int row) const { return height == 1 ? 0.0 : -1.0 + 2.0 * row / (height - 1); }

  // Normalized-to-pixel scale per axis. A single-sample axis has no extent,
  // so its scale is defined as 1.
  double scale_x() const { return width == 1 ? 1.0 : 0.5 * (width - 1); }
  double scale_y() const { return height == 1 ? 1.0 : 0.5 * (height - 1); }

  double to_col(double x) const { return (x + (width == 1 ? 0.0 : 1.0)) * scale_x(); }
  double to_row(double y) const { return (y + (height == 1 ? 0.0 : 1.0)) * scale_y(); }

  Eigen::Index size() const { return Eigen::Index(height) * width; }

  friend bool operator==(const PixelGrid&, const PixelGrid&) = default;
};

std::string to_string(const PixelGrid& grid);

/// Dense per-pixel displacement (u, v) in normalized units; arrays are
/// height x width.
template <typename Scalar>
struct FlowFieldT {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  PixelGrid grid;
  Array u;
  Array v;

  FlowFieldT() = default;
  explicit FlowFieldT(const PixelGrid& g)
      : grid(g), u(Array::Zero(g.height, g.width)), v(Array::Zero(g.height, g.width)) {}
  FlowFieldT(const PixelGrid& g, Array uu, Array vv)
      : grid(g), u(std::move(uu)), v(std::move(vv)) {
    if (u.rows() != g.height || u.cols() != g.width || v.rows() != g.height ||
        v.cols() != g.width) {
      throw GridMismatchError("FlowField: component arrays do not match grid " + to_string(g));
    }
  }

  static FlowFieldT constant(const PixelGrid& g, Scalar du, Scalar dv) {
    return FlowFieldT(g, Array::Constant(g.height, g.width, du),
                      Array::Constant(g.height, g.width, dv));
  }

  bool all_finite() const { return u.allFinite() && v.allFinite(); }

  /// Frobenius norm over both components.
  Scalar norm() const { return std::sqrt(u.square().sum() + v.square().sum()); }

  template <typename Other>
  FlowFieldT<Other> cast() const {
    return FlowFieldT<Other>(grid, u.template cast<Other>(), v.template cast<Other>());
  }
};

using FlowField = FlowFieldT<double>;

/// Projective transform with the lower-right entry gauge-fixed to 1.
template <typename Scalar>
class HomographyT {
 public:
  using Matrix = Eigen::Matrix<Scalar, 3, 3>;
  using Point = Eigen::Matrix<Scalar, 2, 1>;

  HomographyT() : m_(Matrix::Identity()) {}

  /// Divides by m(2,2). Throws DegeneracyError when that entry or the
  /// determinant vanishes.
  explicit HomographyT(const Matrix& m) {
    if (!m.allFinite()) throw DegeneracyError("Homography: non-finite coefficients");
    if (std::abs(m(2, 2)) < Scalar(1e-12)) {
      throw DegeneracyError("Homography: lower-right entry is zero, cannot fix h9 = 1");
    }
    m_ = m / m(2, 2);
    m_(2, 2) = Scalar(1);
    if (std::abs(m_.determinant()) <= Scalar(1e-12)) {
      throw DegeneracyError("Homography: singular matrix");
    }
  }

  /// Row-major coefficients h1..h9.
  static HomographyT from_coefficients(std::span<const Scalar> h) {
    if (h.size() != 9) throw InputError("Homography: expected 9 coefficients");
    Matrix m;
    m << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
    return HomographyT(m);
  }

  static HomographyT identity() { return HomographyT(); }

  static HomographyT translation(Scalar dx, Scalar dy) {
    Matrix m = Matrix::Identity();
    m(0, 2) = dx;
    m(1, 2) = dy;
    return HomographyT(m);
  }

  const Matrix& matrix() const { return m_; }

  /// 1-based coefficient access, h(1)..h(9) in row-major order.
  Scalar h(int i) const { return m_((i - 1) / 3, (i - 1) % 3); }

  Eigen::Matrix<Scalar, 9, 1> coefficients() const {
    Eigen::Matrix<Scalar, 9, 1> out;
    for (int i = 0; i < 9; ++i) out[i] = m_(i / 3, i % 3);
    return out;
  }

  bool is_affine() const { return m_(2, 0) == Scalar(0) && m_(2, 1) == Scalar(0); }

  HomographyT inverse() const { return HomographyT(m_.inverse()); }

 private:
  Matrix m_;
};

using Homography = HomographyT<double>;

inline constexpr double kHorizonThreshold = 1e-9;

/// Maps one point; throws HorizonError carrying `index` when the projective
/// denominator is below 1e-9 in magnitude.
template <typename Scalar>
typename HomographyT<Scalar>::Point apply_homography(const HomographyT<Scalar>& H,
                                                     const typename HomographyT<Scalar>::Point& p,
                                                     std::size_t index = 0) {
  const auto& m = H.matrix();
  const Scalar w = m(2, 0) * p.x() + m(2, 1) * p.y() + m(2, 2);
  if (!(std::abs(w) >= Scalar(kHorizonThreshold))) {
    throw HorizonError("apply_homography: point " + std::to_string(index) +
                           " lies on the horizon (|w| < 1e-9)",
                       index);
  }
  return {(m(0, 0) * p.x() + m(0, 1) * p.y() + m(0, 2)) / w,
          (m(1, 0) * p.x() + m(1, 1) * p.y() + m(1, 2)) / w};
}

template <typename Scalar>
std::vector<typename HomographyT<Scalar>::Point> apply_homography(
    const HomographyT<Scalar>& H, std::span<const typename HomographyT<Scalar>::Point> points) {
  std::vector<typename HomographyT<Scalar>::Point> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out.push_back(apply_homography(H, points[i], i));
  return out;
}

/// Per-pixel H(p) - p over the normalized grid.
template <typename Scalar>
FlowFieldT<Scalar> flow_from_homography(const HomographyT<Scalar>& H, const PixelGrid& grid) {
  FlowFieldT<Scalar> flow(grid);
  for (int c = 0; c < grid.width; ++c) {
    for (int r = 0; r < grid.height; ++r) {
      const typename HomographyT<Scalar>::Point p(Scalar(grid.x(c)), Scalar(grid.y(r)));
      const auto q =
          apply_homography(H, p, static_cast<std::size_t>(r) * grid.width + c);
      flow.u(r, c) = q.x() - p.x();
      flow.v(r, c) = q.y() - p.y();
    }
  }
  return flow;
}

/// H2 * H1: apply `first`, then `second`.
template <typename Scalar>
HomographyT<Scalar> compose(const HomographyT<Scalar>& first, const HomographyT<Scalar>& second) {
  return HomographyT<Scalar>(second.matrix() * first.matrix());
}

template <typename Scalar>
FlowFieldT<Scalar> add_flows(const FlowFieldT<Scalar>& a, const FlowFieldT<Scalar>& b) {
  if (!(a.grid == b.grid)) {
    throw GridMismatchError("add_flows: grid " + to_string(a.grid) + " vs " + to_string(b.grid));
  }
  return FlowFieldT<Scalar>(a.grid, a.u + b.u, a.v + b.v);
}

struct PointPairs {
  std::vector<Vec2> src;
  std::vector<Vec2> dst;
};

struct CameraPose {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();
  double d = 1.0;
};

/// Throws InputError when R is not a rotation, n is not unit, d <= 0 or K is
/// singular.
void validate_pose(const CameraPose& pose);

/// Plane-induced homography K (R + t n^T / d) K^-1.
Homography homography_from_pose(const CameraPose& pose);

/// Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rotation_from_euler(double roll, double pitch, double yaw);

struct DltResult {
  Homography H;
  double residual = 0.0;  // RMS reprojection distance over the pairs
};

/// Normalized DLT. Throws InputError for fewer than 4 pairs and
/// DegeneracyError for collinear or otherwise rank-deficient configurations.
DltResult fit_homography_dlt(const PointPairs& pairs);

/// Best single homography for a dense flow: DLT over every valid pixel.
DltResult fit_homography_to_flow(const FlowField& flow,
                                 const std::optional<MaskArray>& valid = std::nullopt);

struct NonlinearityReport {
  double sum_fit_residual = 0.0;
  double compose_fit_residual = 0.0;          // H2 * H1
  double compose_reverse_fit_residual = 0.0;  // H1 * H2
  double solution_spread = 0.0;
  int subsets = 0;
};

/// Near-identity homography: affine part I + U(-0.2, 0.2) per entry and
/// |h7|, |h8| ~ U(perspective_lo, perspective_hi) with random signs. Both
/// bounds zero gives an affine homography.
Homography random_homography(std::mt19937_64& rng, double perspective_lo, double perspective_hi);

/// Fits a single homography to the sum of the two homography flows and to the
/// flow of their composition, on `samples` seeded grid points.
NonlinearityReport nonlinearity_gap(const Homography& H1, const Homography& H2,
                                    const PixelGrid& grid, int samples, std::uint64_t seed);

}  // namespace camflow
