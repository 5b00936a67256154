#pragma once

#include <filesystem>

#include "camflow/geometry.hpp"

namespace camflow {

/// Grayscale image, intensities in [0, 1], stored height x width.
struct ImageGray {
  ArrayXXd data;

  ImageGray() = default;
  explicit ImageGray(ArrayXXd d) : data(std::move(d)) {}
  static ImageGray constant(int height, int width, double value) {
    return ImageGray(ArrayXXd::Constant(height, width, value));
  }

  int height() const { return static_cast<int>(data.rows()); }
  int width() const { return static_cast<int>(data.cols()); }
  PixelGrid grid() const { return PixelGrid(height(), width()); }
};

struct WarpResult {
  ImageGray image;
  MaskArray valid;
};

/// out(p) = img(p + flow(p)) with bilinear sampling; pixels whose sample
/// footprint leaves the image are flagged invalid and set to 0.
WarpResult warp_backward(const ImageGray& img, const FlowField& flow);

/// True where p + flow(p) lands inside [0, width-1] x [0, height-1].
MaskArray valid_region(const FlowField& flow, int height, int width);

/// Binary PGM (P5). 8-bit or 16-bit (big-endian) payloads; intensities are
/// divided by maxval. Throws FormatError.
ImageGray read_pgm(const std::filesystem::path& path);

/// maxval must be 255 or 65535. Values are clamped to [0, 1] and rounded.
void write_pgm(const ImageGray& img, const std::filesystem::path& path, int maxval = 255);

/// Masks persist as 8-bit PGM with 0 / 255; any nonzero value reads as true.
void write_mask_pgm(const MaskArray& mask, const std::filesystem::path& path);
MaskArray read_mask_pgm(const std::filesystem::path& path);

/// Scales a nonnegative map by its maximum into an 8-bit heatmap image.
ImageGray magnitude_heatmap(const ArrayXXd& magnitude);

}  // namespace camflow
