#include "camflow/flo_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace camflow {

namespace {

constexpr char kMagic[4] = {'P', 'I', 'E', 'H'};

template <typename T>
void put_le(std::vector<char>& out, T value) {
  static_assert(sizeof(T) == 4);
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

template <typename T>
T get_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<T>(bits);
}

float to_pixels(double normalized, double scale) { return static_cast<float>(normalized * scale); }
double to_normalized(float pixels, double scale) { return static_cast<double>(pixels) / scale; }

}  // namespace

FlowField quantize_for_flo(const FlowField& flow) {
  FlowField out(flow.grid);
  const double sx = flow.grid.scale_x(), sy = flow.grid.scale_y();
  out.u = flow.u.unaryExpr([sx](double u) { return to_normalized(to_pixels(u, sx), sx); });
  out.v = flow.v.unaryExpr([sy](double v) { return to_normalized(to_pixels(v, sy), sy); });
  return out;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  const auto& g = flow.grid;
  std::vector<char> bytes;
  bytes.reserve(12 + 8 * static_cast<std::size_t>(g.size()));
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_le(bytes, static_cast<std::int32_t>(g.width));
  put_le(bytes, static_cast<std::int32_t>(g.height));
  const double sx = g.scale_x(), sy = g.scale_y();
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const float u = to_pixels(flow.u(r, c), sx);
      const float v = to_pixels(flow.v(r, c), sy);
      if (!std::isfinite(u) || !std::isfinite(v)) {
        throw InputError("write_flo: non-finite value at row " + std::to_string(r) + ", col " +
                         std::to_string(c) + " for " + path.string());
      }
      put_le(bytes, u);
      put_le(bytes, v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("write_flo: cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write_flo: write failed for " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_flo: cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw FormatError("read_flo: truncated header in " + path.string());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("read_flo: bad magic in " + path.string());
  }
  const auto width = get_le<std::int32_t>(bytes.data() + 4);
  const auto height = get_le<std::int32_t>(bytes.data() + 8);
  if (width <= 0 || height <= 0 || width > (1 << 20) || height > (1 << 20)) {
    throw FormatError("read_flo: invalid dimensions in " + path.string());
  }
  const std::size_t expected = 12 + 8 * std::size_t(width) * std::size_t(height);
  if (bytes.size() < expected) throw FormatError("read_flo: truncated payload in " + path.string());
  if (bytes.size() > expected) throw FormatError("read_flo: trailing bytes in " + path.string());

  const PixelGrid grid(height, width);
  FlowField flow(grid);
  const double sx = grid.scale_x(), sy = grid.scale_y();
  const char* p = bytes.data() + 12;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c, p += 8) {
      const float u = get_le<float>(p);
      const float v = get_le<float>(p + 4);
      if (!std::isfinite(u) || !std::isfinite(v)) {
        throw FormatError("read_flo: non-finite value in " + path.string());
      }
      flow.u(r, c) = to_normalized(u, sx);
      flow.v(r, c) = to_normalized(v, sy);
    }
  }
  return flow;
}

}  // namespace camflow
