#include "camflow/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace camflow {

namespace {

void check_pairs(const PointPairs& pairs, const char* who) {
  if (pairs.src.empty()) throw InputError(std::string(who) + ": no point pairs");
  if (pairs.src.size() != pairs.dst.size()) {
    throw InputError(std::string(who) + ": src/dst length mismatch");
  }
}

double pixel_distance(const Vec2& a, const Vec2& b, const PixelGrid& grid) {
  return std::hypot((a.x() - b.x()) * grid.scale_x(), (a.y() - b.y()) * grid.scale_y());
}

void check_images(const ImageGray& a, const ImageGray& b, const std::optional<MaskArray>& valid,
                  const char* who) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw GridMismatchError(std::string(who) + ": image shapes differ");
  }
  if (valid && (valid->rows() != a.height() || valid->cols() != a.width())) {
    throw GridMismatchError(std::string(who) + ": validity mask shape differs");
  }
}

double sample_bilinear(const ArrayXXd& f, double col, double row) {
  const int w = static_cast<int>(f.cols()), h = static_cast<int>(f.rows());
  const int c0 = w == 1 ? 0 : std::min(static_cast<int>(std::floor(col)), w - 2);
  const int r0 = h == 1 ? 0 : std::min(static_cast<int>(std::floor(row)), h - 2);
  const double fx = w == 1 ? 0.0 : col - c0;
  const double fy = h == 1 ? 0.0 : row - r0;
  const int c1 = w == 1 ? c0 : c0 + 1;
  const int r1 = h == 1 ? r0 : r0 + 1;
  return (1.0 - fy) * ((1.0 - fx) * f(r0, c0) + fx * f(r0, c1)) +
         fy * ((1.0 - fx) * f(r1, c0) + fx * f(r1, c1));
}

}  // namespace

MetricReport pme(const Homography& motion, const PointPairs& pairs, const PixelGrid& grid) {
  check_pairs(pairs, "pme");
  double sum = 0.0;
  for (std::size_t i = 0; i < pairs.src.size(); ++i) {
    sum += pixel_distance(apply_homography(motion, pairs.src[i], i), pairs.dst[i], grid);
  }
  return {"pme", sum / static_cast<double>(pairs.src.size()), pairs.src.size(), 1.0};
}

MetricReport pme(const FlowField& motion, const PointPairs& pairs) {
  check_pairs(pairs, "pme");
  const auto& g = motion.grid;
  constexpr double kTol = 1e-9;
  double sum = 0.0;
  for (std::size_t i = 0; i < pairs.src.size(); ++i) {
    const double col = g.to_col(pairs.src[i].x());
    const double row = g.to_row(pairs.src[i].y());
    if (!(col >= -kTol && col <= g.width - 1 + kTol && row >= -kTol && row <= g.height - 1 + kTol)) {
      throw InputError("pme: source point " + std::to_string(i) + " lies outside the flow grid");
    }
    const double cc = std::clamp(col, 0.0, double(g.width - 1));
    const double rr = std::clamp(row, 0.0, double(g.height - 1));
    const Vec2 moved = pairs.src[i] + Vec2(sample_bilinear(motion.u, cc, rr),
                                           sample_bilinear(motion.v, cc, rr));
    sum += pixel_distance(moved, pairs.dst[i], g);
  }
  return {"pme", sum / static_cast<double>(pairs.src.size()), pairs.src.size(), 1.0};
}

MetricReport epe(const FlowField& pred, const FlowField& gt, const std::optional<MaskArray>& valid) {
  if (!(pred.grid == gt.grid)) {
    throw GridMismatchError("epe: grid " + to_string(pred.grid) + " vs " + to_string(gt.grid));
  }
  const auto& g = gt.grid;
  if (valid && (valid->rows() != g.height || valid->cols() != g.width)) {
    throw GridMismatchError("epe: validity mask does not match grid");
  }
  const double sx = g.scale_x(), sy = g.scale_y();
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (valid && !(*valid)(i)) continue;
    sum += std::hypot((pred.u(i) - gt.u(i)) * sx, (pred.v(i) - gt.v(i)) * sy);
    ++count;
  }
  if (count == 0) throw InputError("epe: empty valid set");
  return {"epe", sum / double(count), count, double(count) / double(g.size())};
}

MetricReport psnr(const ImageGray& a, const ImageGray& b, const std::optional<MaskArray>& valid) {
  check_images(a, b, valid, "psnr");
  double sq = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < a.data.size(); ++i) {
    if (valid && !(*valid)(i)) continue;
    const double d = a.data(i) - b.data(i);
    sq += d * d;
    ++count;
  }
  if (count == 0) throw InputError("psnr: empty valid set");
  const double mse = sq / double(count);
  const double db = mse > 0.0 ? std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse)) : kPsnrCap;
  return {"psnr", db, count, double(count) / double(a.data.size())};
}

MetricReport ssim(const ImageGray& a, const ImageGray& b, const std::optional<MaskArray>& valid) {
  check_images(a, b, valid, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  if (a.height() < kWin || a.width() < kWin) {
    throw InputError("ssim: image smaller than the 11x11 window");
  }
  Eigen::Matrix<double, kWin, kWin> window;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double di = i - kWin / 2, dj = j - kWin / 2;
      window(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
    }
  window /= window.sum();

  const int rows = a.height() - kWin + 1, cols = a.width() - kWin + 1;
  double sum = 0.0;
  std::size_t used = 0;
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      if (valid && !valid->block(r, c, kWin, kWin).all()) continue;
      const auto pa = a.data.block(r, c, kWin, kWin).matrix();
      const auto pb = b.data.block(r, c, kWin, kWin).matrix();
      const double mu_a = window.cwiseProduct(pa).sum();
      const double mu_b = window.cwiseProduct(pb).sum();
      const double var_a = window.cwiseProduct(pa.cwiseProduct(pa)).sum() - mu_a * mu_a;
      const double var_b = window.cwiseProduct(pb.cwiseProduct(pb)).sum() - mu_b * mu_b;
      const double cov = window.cwiseProduct(pa.cwiseProduct(pb)).sum() - mu_a * mu_b;
      sum += ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)) /
             ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
      ++used;
    }
  }
  if (used == 0) throw InputError("ssim: no window lies fully inside the valid region");
  return {"ssim", sum / double(used), used, double(used) / (double(rows) * cols)};
}

}  // namespace camflow
