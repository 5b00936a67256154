#include "camflow/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <Eigen/Dense>

namespace camflow {

std::string to_string(const PixelGrid& grid) {
  return std::to_string(grid.height) + "x" + std::to_string(grid.width);
}

void validate_pose(const CameraPose& pose) {
  if (!pose.K.allFinite() || !pose.R.allFinite() || !pose.t.allFinite() || !pose.n.allFinite() ||
      !std::isfinite(pose.d)) {
    throw InputError("CameraPose: non-finite parameters");
  }
  if (((pose.R.transpose() * pose.R) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw InputError("CameraPose: R is not orthonormal");
  }
  if (std::abs(pose.R.determinant() - 1.0) > 1e-9) {
    throw InputError("CameraPose: det(R) != +1");
  }
  if (std::abs(pose.n.norm() - 1.0) > 1e-9) throw InputError("CameraPose: |n| != 1");
  if (!(pose.d > 0.0)) throw InputError("CameraPose: plane distance must be positive");
  if (std::abs(pose.K.determinant()) <= 1e-12) throw InputError("CameraPose: K is singular");
}

Homography homography_from_pose(const CameraPose& pose) {
  validate_pose(pose);
  const Mat3 m = pose.K * (pose.R + pose.t * pose.n.transpose() / pose.d) * pose.K.inverse();
  if (std::abs(m(2, 2)) < 1e-12) {
    throw DegeneracyError("homography_from_pose: degenerate pose (h9 entry is zero)");
  }
  return Homography(m);
}

Mat3 rotation_from_euler(double roll, double pitch, double yaw) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(yaw, Vec3::UnitZ()) * AngleAxisd(pitch, Vec3::UnitY()) *
          AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

namespace {

// Similarity moving the centroid to the origin with RMS distance sqrt(2).
Mat3 hartley_transform(const std::vector<Vec2>& pts) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double sq = 0.0;
  for (const auto& p : pts) sq += (p - centroid).squaredNorm();
  const double rms = std::sqrt(sq / static_cast<double>(pts.size()));
  if (!(rms > 1e-300)) throw DegeneracyError("fit_homography_dlt: all points coincide");
  const double s = std::sqrt(2.0) / rms;
  Mat3 T;
  T << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return T;
}

std::vector<Vec2> transform_points(const Mat3& T, const std::vector<Vec2>& pts) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back((T * p.homogeneous()).hnormalized());
  return out;
}

double collinearity(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
}

void check_source_configuration(const std::vector<Vec2>& src) {
  constexpr double kCollinear = 1e-9;
  const std::size_t n = src.size();
  // Minimal sets must be in general position.
  if (n == 4) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k)
          if (std::abs(collinearity(src[i], src[j], src[k])) < kCollinear) {
            throw DegeneracyError("fit_homography_dlt: three source points are collinear");
          }
  }
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : src) scatter += p * p.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scatter / static_cast<double>(n));
  if (es.eigenvalues()[0] < kCollinear * kCollinear) {
    throw DegeneracyError("fit_homography_dlt: source points are collinear");
  }
}

}  // namespace

DltResult fit_homography_dlt(const PointPairs& pairs) {
  if (pairs.src.size() != pairs.dst.size()) {
    throw InputError("fit_homography_dlt: src/dst length mismatch");
  }
  const std::size_t n = pairs.src.size();
  if (n < 4) throw InputError("fit_homography_dlt: need at least 4 pairs, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!pairs.src[i].allFinite() || !pairs.dst[i].allFinite()) {
      throw InputError("fit_homography_dlt: non-finite coordinate at pair " + std::to_string(i));
    }
  }

  const Mat3 Ts = hartley_transform(pairs.src);
  const Mat3 Td = hartley_transform(pairs.dst);
  const auto src = transform_points(Ts, pairs.src);
  const auto dst = transform_points(Td, pairs.dst);
  check_source_configuration(src);

  Eigen::Matrix<double, Eigen::Dynamic, 9> A(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = src[i].x(), y = src[i].y();
    const double xp = dst[i].x(), yp = dst[i].y();
    A.row(2 * i) << 0, 0, 0, -x, -y, -1, yp * x, yp * y, yp;
    A.row(2 * i + 1) << x, y, 1, 0, 0, 0, -xp * x, -xp * y, -xp;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 9>> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv[7] <= 1e-9 * sv[0]) {
    throw DegeneracyError("fit_homography_dlt: rank-deficient point configuration");
  }
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 Hn;
  Hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];

  DltResult result{Homography(Td.inverse() * Hn * Ts), 0.0};
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sq += (apply_homography(result.H, pairs.src[i], i) - pairs.dst[i]).squaredNorm();
  }
  result.residual = std::sqrt(sq / static_cast<double>(n));
  return result;
}

Homography random_homography(std::mt19937_64& rng, double perspective_lo,
                             double perspective_hi) {
  std::uniform_real_distribution<double> affine(-0.2, 0.2);
  std::uniform_real_distribution<double> magnitude(perspective_lo, perspective_hi);
  std::bernoulli_distribution sign(0.5);
  Mat3 m = Mat3::Identity();
  for (int i = 0; i < 6; ++i) m(i / 3, i % 3) += affine(rng);
  for (int i = 0; i < 2; ++i) {
    const double h = perspective_hi > 0.0 ? magnitude(rng) : 0.0;
    m(2, i) = sign(rng) ? h : -h;
  }
  return Homography(m);
}

namespace {

PointPairs sample_pairs(const FlowField& flow, std::span<const Eigen::Index> pixels) {
  PointPairs pairs;
  pairs.src.reserve(pixels.size());
  pairs.dst.reserve(pixels.size());
  const auto& g = flow.grid;
  for (const Eigen::Index idx : pixels) {
    const int r = static_cast<int>(idx / g.width);
    const int c = static_cast<int>(idx % g.width);
    const Vec2 p(g.x(c), g.y(r));
    pairs.src.push_back(p);
    pairs.dst.push_back(p + Vec2(flow.u(r, c), flow.v(r, c)));
  }
  return pairs;
}

}  // namespace

DltResult fit_homography_to_flow(const FlowField& flow, const std::optional<MaskArray>& valid) {
  const auto& g = flow.grid;
  if (valid && (valid->rows() != g.height || valid->cols() != g.width)) {
    throw GridMismatchError("fit_homography_to_flow: mask does not match grid " + to_string(g));
  }
  std::vector<Eigen::Index> pixels;
  for (Eigen::Index idx = 0; idx < g.size(); ++idx) {
    if (!valid || (*valid)(idx / g.width, idx % g.width)) pixels.push_back(idx);
  }
  return fit_homography_dlt(sample_pairs(flow, pixels));
}

NonlinearityReport nonlinearity_gap(const Homography& H1, const Homography& H2,
                                    const PixelGrid& grid, int samples, std::uint64_t seed) {
  if (samples < 8) throw InputError("nonlinearity_gap: samples must be >= 8");
  if (samples > grid.size()) throw InputError("nonlinearity_gap: more samples than grid pixels");

  const FlowField summed = add_flows(flow_from_homography(H1, grid), flow_from_homography(H2, grid));
  const FlowField composed = flow_from_homography(compose(H1, H2), grid);
  const FlowField reversed = flow_from_homography(compose(H2, H1), grid);

  std::vector<Eigen::Index> pixels(static_cast<std::size_t>(grid.size()));
  std::iota(pixels.begin(), pixels.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(pixels.begin(), pixels.end(), rng);
  pixels.resize(static_cast<std::size_t>(samples));

  NonlinearityReport report;
  report.sum_fit_residual = fit_homography_dlt(sample_pairs(summed, pixels)).residual;
  report.compose_fit_residual = fit_homography_dlt(sample_pairs(composed, pixels)).residual;
  report.compose_reverse_fit_residual = fit_homography_dlt(sample_pairs(reversed, pixels)).residual;

  report.subsets = samples >= 16 ? 4 : 2;
  const std::size_t chunk = static_cast<std::size_t>(samples / report.subsets);
  std::vector<Eigen::Matrix<double, 9, 1>> solutions;
  for (int s = 0; s < report.subsets; ++s) {
    const std::span<const Eigen::Index> subset(pixels.data() + s * chunk, chunk);
    solutions.push_back(fit_homography_dlt(sample_pairs(summed, subset)).H.coefficients());
  }
  for (std::size_t i = 0; i < solutions.size(); ++i)
    for (std::size_t j = i + 1; j < solutions.size(); ++j)
      report.solution_spread =
          std::max(report.solution_spread, (solutions[i] - solutions[j]).norm());
  return report;
}

}  // namespace camflow
