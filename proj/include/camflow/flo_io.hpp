#pragma once

#include <filesystem>

#include "camflow/geometry.hpp"

namespace camflow {

// Middlebury .flo: "PIEH", int32 width, int32 height, then row-major
// interleaved float32 (u, v), all little-endian. Values on disk are in pixel
// units; in memory they are normalized.

/// Throws FormatError on bad magic, bad dimensions, truncation, trailing
/// bytes or non-finite values.
FlowField read_flo(const std::filesystem::path& path);

/// Throws InputError if any value is non-finite in float32 pixel units.
void write_flo(const FlowField& flow, const std::filesystem::path& path);

/// Rounds a flow to what write_flo can store, so write/read is bit-exact.
FlowField quantize_for_flo(const FlowField& flow);

}  // namespace camflow
