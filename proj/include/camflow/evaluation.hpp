#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "camflow/imaging.hpp"

namespace camflow {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::size_t count = 0;   // pixels, windows or pairs used
  double coverage = 1.0;   // fraction of the candidate set that was evaluated
};

inline constexpr double kPsnrCap = 300.0;

/// Mean pixel-unit distance between H(src) and dst; `grid` fixes the
/// normalized-to-pixel scale.
MetricReport pme(const Homography& motion, const PointPairs& pairs, const PixelGrid& grid);

/// Same, moving each source point by the flow sampled bilinearly at it.
/// Throws InputError for points outside the grid.
MetricReport pme(const FlowField& motion, const PointPairs& pairs);

/// Mean pixel-unit end-point error over valid pixels.
MetricReport epe(const FlowField& pred, const FlowField& gt,
                 const std::optional<MaskArray>& valid = std::nullopt);

/// 10 log10(1 / MSE) at peak 1, capped at 300 dB.
MetricReport psnr(const ImageGray& a, const ImageGray& b,
                  const std::optional<MaskArray>& valid = std::nullopt);

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2. Windows touching an invalid pixel are skipped.
MetricReport ssim(const ImageGray& a, const ImageGray& b,
                  const std::optional<MaskArray>& valid = std::nullopt);

}  // namespace camflow
