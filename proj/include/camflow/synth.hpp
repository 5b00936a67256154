#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "camflow/imaging.hpp"

namespace camflow {

/// Convex region in normalized coordinates: the intersection of half-planes
/// a x + b y + c >= 0. No half-planes means the whole grid.
struct Region {
  std::vector<std::array<double, 3>> halfplanes;

  static Region all() { return {}; }
  static Region halfplane(double a, double b, double c) { return {{{a, b, c}}}; }
  /// Inclusive rectangle [x0, x1] x [y0, y1].
  static Region rect(double x0, double y0, double x1, double y1) {
    return {{{1, 0, -x0}, {-1, 0, x1}, {0, 1, -y0}, {0, -1, y1}}};
  }

  bool contains(double x, double y) const {
    for (const auto& h : halfplanes)
      if (!(h[0] * x + h[1] * y + h[2] >= 0.0)) return false;
    return true;
  }
};

struct PlaneSpec {
  Vec3 n = Vec3::UnitZ();
  double d = 1.0;
  Region region;
};

struct DynamicObject {
  Region region;
  Vec2 motion = Vec2::Zero();  // normalized units
};

struct CameraSpec {
  double focal = 1.0;               // normalized units
  Vec2 principal = Vec2::Zero();    // normalized units
  Vec3 euler = Vec3::Zero();        // roll, pitch, yaw in radians
  Vec3 t = Vec3::Zero();

  Mat3 K() const;
  Mat3 R() const;
};

struct SceneSpec {
  PixelGrid grid{80, 144};
  CameraSpec camera;
  std::vector<PlaneSpec> planes;
  std::vector<DynamicObject> dynamic_objects;
  std::uint64_t texture_seed = 0;

  /// Checks plane parameters and finiteness; the partition property is
  /// checked by build_scene.
  void validate() const;
};

struct ImagePair {
  ImageGray a;
  ImageGray b;
};

struct SceneSample {
  SceneSpec spec;
  FlowField gt_flow;
  MaskArray valid;
  Eigen::ArrayXXi plane_ids;
  std::vector<Homography> homographies;
  std::optional<ImagePair> images;
};

/// Throws InputError when plane regions overlap or leave pixels unassigned,
/// DegeneracyError for degenerate plane homographies.
SceneSample build_scene(const SceneSpec& spec);

/// Seeded multi-octave value noise scaled to [0, 1].
ImageGray value_noise_texture(int height, int width, std::uint64_t seed);

/// I_b is the texture, I_a = warp_backward(I_b, gt_flow). Folds the warp
/// validity into sample.valid and stores the pair in sample.images.
ImagePair render_pair(SceneSample& sample, std::uint64_t texture_seed);

/// Motion magnitudes for random scene specs.
struct SceneRanges {
  double translation = 0.08;  // max |tx|, |ty|; |tz| up to half of it
  double rotation = 0.02;     // max |euler angle|, radians
  double tilt = 0.3;          // max plane-normal tilt, radians
};

/// Random scene with `planes` in {1, 2, 3} and nonzero translation.
SceneSpec random_scene_spec(const PixelGrid& grid, int planes, bool dynamic, std::uint64_t seed,
                            const SceneRanges& ranges = {});

/// Single fronto-parallel plane, in-plane rotation and lateral translation:
/// the induced homography is affine.
SceneSpec affine_scene_spec(const PixelGrid& grid, std::uint64_t seed);

/// Scene i uses child_seed(master_seed, i); plane count cycles 1, 2, 3,
/// dynamic objects alternate every 3 scenes, translation and rotation
/// magnitudes step through three levels.
std::vector<SceneSample> benchmark_suite(int count, std::uint64_t master_seed,
                                         const PixelGrid& grid = {80, 144}, bool render = true);

/// Writes gt_flow.flo, valid.pgm, plane_ids.pgm, homographies.json, spec.json
/// and, if rendered, i_a.pgm / i_b.pgm (16-bit).
void save_scene(const SceneSample& sample, const std::filesystem::path& dir);

}  // namespace camflow
