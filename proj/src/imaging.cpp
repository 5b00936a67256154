#include "camflow/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <vector>

namespace camflow {

namespace {

// Sub-pixel slack so that exact integer landings survive round-off.
constexpr double kEdgeTolerance = 1e-9;

bool inside(double pos, int extent) {
  return pos >= -kEdgeTolerance && pos <= (extent - 1) + kEdgeTolerance;
}

void check_dims(const FlowField& flow, int height, int width, const char* who) {
  if (flow.grid.height != height || flow.grid.width != width) {
    throw GridMismatchError(std::string(who) + ": flow grid " + to_string(flow.grid) +
                            " does not match image " + std::to_string(height) + "x" +
                            std::to_string(width));
  }
}

double bilinear(const ArrayXXd& img, double col, double row) {
  const int w = static_cast<int>(img.cols()), h = static_cast<int>(img.rows());
  col = std::clamp(col, 0.0, double(w - 1));
  row = std::clamp(row, 0.0, double(h - 1));
  const int c0 = w == 1 ? 0 : std::min(static_cast<int>(std::floor(col)), w - 2);
  const int r0 = h == 1 ? 0 : std::min(static_cast<int>(std::floor(row)), h - 2);
  const double fx = w == 1 ? 0.0 : col - c0;
  const double fy = h == 1 ? 0.0 : row - r0;
  const int c1 = w == 1 ? c0 : c0 + 1;
  const int r1 = h == 1 ? r0 : r0 + 1;
  const double top = (1.0 - fx) * img(r0, c0) + fx * img(r0, c1);
  const double bottom = (1.0 - fx) * img(r1, c0) + fx * img(r1, c1);
  return (1.0 - fy) * top + fy * bottom;
}

}  // namespace

MaskArray valid_region(const FlowField& flow, int height, int width) {
  check_dims(flow, height, width, "valid_region");
  const auto& g = flow.grid;
  const double sx = g.scale_x(), sy = g.scale_y();
  MaskArray valid(height, width);
  for (int c = 0; c < width; ++c)
    for (int r = 0; r < height; ++r)
      valid(r, c) = inside(c + flow.u(r, c) * sx, width) && inside(r + flow.v(r, c) * sy, height);
  return valid;
}

WarpResult warp_backward(const ImageGray& img, const FlowField& flow) {
  check_dims(flow, img.height(), img.width(), "warp_backward");
  WarpResult out{ImageGray(ArrayXXd::Zero(img.height(), img.width())),
                 valid_region(flow, img.height(), img.width())};
  const double sx = flow.grid.scale_x(), sy = flow.grid.scale_y();
  for (int c = 0; c < img.width(); ++c) {
    for (int r = 0; r < img.height(); ++r) {
      if (!out.valid(r, c)) continue;
      out.image.data(r, c) = bilinear(img.data, c + flow.u(r, c) * sx, r + flow.v(r, c) * sy);
    }
  }
  return out;
}

namespace {

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t offset = 0;
};

PgmHeader parse_pgm_header(const std::vector<char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("read_pgm: not a binary PGM (P5): " + path.string());
  }
  std::size_t pos = 2;
  auto next_int = [&]() {
    while (pos < bytes.size()) {
      const unsigned char ch = static_cast<unsigned char>(bytes[pos]);
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(ch)) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw FormatError("read_pgm: malformed header in " + path.string());
    }
    long value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos++] - '0');
      if (value > (1L << 24)) throw FormatError("read_pgm: header value too large in " + path.string());
    }
    return static_cast<int>(value);
  };
  PgmHeader h;
  h.width = next_int();
  h.height = next_int();
  h.maxval = next_int();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("read_pgm: malformed header in " + path.string());
  }
  h.offset = pos + 1;
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
    throw FormatError("read_pgm: invalid header values in " + path.string());
  }
  return h;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

ImageGray read_pgm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const PgmHeader h = parse_pgm_header(bytes, path);
  const std::size_t sample = h.maxval < 256 ? 1 : 2;
  const std::size_t need = h.offset + sample * std::size_t(h.width) * std::size_t(h.height);
  if (bytes.size() < need) throw FormatError("read_pgm: truncated payload in " + path.string());
  ArrayXXd data(h.height, h.width);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + h.offset);
  for (int r = 0; r < h.height; ++r) {
    for (int c = 0; c < h.width; ++c) {
      unsigned value = sample == 1 ? p[0] : (unsigned(p[0]) << 8) | p[1];
      p += sample;
      if (value > unsigned(h.maxval)) throw FormatError("read_pgm: sample exceeds maxval in " + path.string());
      data(r, c) = double(value) / h.maxval;
    }
  }
  return ImageGray(std::move(data));
}

void write_pgm(const ImageGray& img, const std::filesystem::path& path, int maxval) {
  if (maxval != 255 && maxval != 65535) throw InputError("write_pgm: maxval must be 255 or 65535");
  std::string bytes = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) +
                      "\n" + std::to_string(maxval) + "\n";
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const double x = img.data(r, c);
      if (!std::isfinite(x)) throw InputError("write_pgm: non-finite intensity");
      const auto q = static_cast<unsigned>(std::lround(std::clamp(x, 0.0, 1.0) * maxval));
      if (maxval == 65535) bytes.push_back(static_cast<char>(q >> 8));
      bytes.push_back(static_cast<char>(q & 0xffu));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("write_pgm: cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_mask_pgm(const MaskArray& mask, const std::filesystem::path& path) {
  write_pgm(ImageGray(mask.cast<double>()), path, 255);
}

MaskArray read_mask_pgm(const std::filesystem::path& path) {
  return read_pgm(path).data > 0.0;
}

ImageGray magnitude_heatmap(const ArrayXXd& magnitude) {
  const double peak = magnitude.size() ? magnitude.maxCoeff() : 0.0;
  if (!(peak > 0.0)) return ImageGray(ArrayXXd::Zero(magnitude.rows(), magnitude.cols()));
  return ImageGray(magnitude / peak);
}

}  // namespace camflow
