#include "camflow/synth.hpp"

#include <algorithm>
#include <random>

#include <Eigen/Geometry>

#include "camflow/flo_io.hpp"
#include "camflow/serialization.hpp"

namespace camflow {

Mat3 CameraSpec::K() const {
  Mat3 k;
  k << focal, 0, principal.x(), 0, focal, principal.y(), 0, 0, 1;
  return k;
}

Mat3 CameraSpec::R() const { return rotation_from_euler(euler[0], euler[1], euler[2]); }

void SceneSpec::validate() const {
  if (planes.empty()) throw InputError("SceneSpec: at least one plane is required");
  if (!(camera.focal > 0.0) || !camera.principal.allFinite() || !camera.euler.allFinite() ||
      !camera.t.allFinite()) {
    throw InputError("SceneSpec: invalid camera parameters");
  }
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const auto& p = planes[k];
    if (!(p.d > 0.0) || !std::isfinite(p.d)) {
      throw InputError("SceneSpec: plane " + std::to_string(k) + " has non-positive distance");
    }
    if (!p.n.allFinite() || std::abs(p.n.norm() - 1.0) > 1e-9) {
      throw InputError("SceneSpec: plane " + std::to_string(k) + " normal is not unit length");
    }
    for (const auto& h : p.region.halfplanes)
      if (!std::isfinite(h[0]) || !std::isfinite(h[1]) || !std::isfinite(h[2]))
        throw InputError("SceneSpec: non-finite region bounds");
  }
  for (const auto& o : dynamic_objects) {
    if (!o.motion.allFinite()) throw InputError("SceneSpec: non-finite object motion");
    for (const auto& h : o.region.halfplanes)
      if (!std::isfinite(h[0]) || !std::isfinite(h[1]) || !std::isfinite(h[2]))
        throw InputError("SceneSpec: non-finite region bounds");
  }
}

SceneSample build_scene(const SceneSpec& spec) {
  spec.validate();
  const PixelGrid& grid = spec.grid;
  SceneSample sample;
  sample.spec = spec;

  std::vector<FlowField> plane_flows;
  for (const auto& plane : spec.planes) {
    CameraPose pose;
    pose.K = spec.camera.K();
    pose.R = spec.camera.R();
    pose.t = spec.camera.t;
    pose.n = plane.n;
    pose.d = plane.d;
    sample.homographies.push_back(homography_from_pose(pose));
    plane_flows.push_back(flow_from_homography(sample.homographies.back(), grid));
  }

  sample.gt_flow = FlowField(grid);
  sample.plane_ids = Eigen::ArrayXXi::Constant(grid.height, grid.width, -1);
  for (int c = 0; c < grid.width; ++c) {
    for (int r = 0; r < grid.height; ++r) {
      const double x = grid.x(c), y = grid.y(r);
      for (std::size_t k = 0; k < spec.planes.size(); ++k) {
        if (!spec.planes[k].region.contains(x, y)) continue;
        if (sample.plane_ids(r, c) >= 0) {
          throw InputError("build_scene: plane regions " + std::to_string(sample.plane_ids(r, c)) +
                           " and " + std::to_string(k) + " overlap at row " + std::to_string(r) +
                           ", col " + std::to_string(c));
        }
        sample.plane_ids(r, c) = static_cast<int>(k);
        sample.gt_flow.u(r, c) = plane_flows[k].u(r, c);
        sample.gt_flow.v(r, c) = plane_flows[k].v(r, c);
      }
      if (sample.plane_ids(r, c) < 0) {
        throw InputError("build_scene: pixel at row " + std::to_string(r) + ", col " +
                         std::to_string(c) + " belongs to no plane");
      }
    }
  }

  MaskArray dynamic = MaskArray::Constant(grid.height, grid.width, false);
  for (const auto& object : spec.dynamic_objects) {
    for (int c = 0; c < grid.width; ++c) {
      for (int r = 0; r < grid.height; ++r) {
        if (!object.region.contains(grid.x(c), grid.y(r))) continue;
        sample.gt_flow.u(r, c) = object.motion.x();
        sample.gt_flow.v(r, c) = object.motion.y();
        dynamic(r, c) = true;
      }
    }
  }
  sample.valid = valid_region(sample.gt_flow, grid.height, grid.width) && !dynamic;
  return sample;
}

ImageGray value_noise_texture(int height, int width, std::uint64_t seed) {
  if (height <= 0 || width <= 0) throw InputError("value_noise_texture: bad dimensions");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  constexpr int kCells[] = {24, 12, 6};
  constexpr double kAmplitudes[] = {1.0, 0.5, 0.25};

  ArrayXXd sum = ArrayXXd::Zero(height, width);
  for (int o = 0; o < 3; ++o) {
    const int cell = kCells[o];
    const int lh = height / cell + 2, lw = width / cell + 2;
    ArrayXXd lattice(lh, lw);
    for (int j = 0; j < lw; ++j)
      for (int i = 0; i < lh; ++i) lattice(i, j) = uniform(rng);
    for (int c = 0; c < width; ++c) {
      const double gx = double(c) / cell;
      const int ix = static_cast<int>(gx);
      double fx = gx - ix;
      fx = fx * fx * (3.0 - 2.0 * fx);
      for (int r = 0; r < height; ++r) {
        const double gy = double(r) / cell;
        const int iy = static_cast<int>(gy);
        double fy = gy - iy;
        fy = fy * fy * (3.0 - 2.0 * fy);
        const double top = (1 - fx) * lattice(iy, ix) + fx * lattice(iy, ix + 1);
        const double bottom = (1 - fx) * lattice(iy + 1, ix) + fx * lattice(iy + 1, ix + 1);
        sum(r, c) += kAmplitudes[o] * ((1 - fy) * top + fy * bottom);
      }
    }
  }
  const double lo = sum.minCoeff(), hi = sum.maxCoeff();
  if (!(hi > lo)) return ImageGray::constant(height, width, 0.5);
  return ImageGray((sum - lo) / (hi - lo));
}

ImagePair render_pair(SceneSample& sample, std::uint64_t texture_seed) {
  const auto& g = sample.gt_flow.grid;
  ImagePair pair;
  pair.b = value_noise_texture(g.height, g.width, texture_seed);
  WarpResult warped = warp_backward(pair.b, sample.gt_flow);
  pair.a = std::move(warped.image);
  sample.valid = sample.valid && warped.valid;
  sample.images = pair;
  return pair;
}

namespace {

Vec3 tilted_normal(std::mt19937_64& rng, double tilt) {
  std::uniform_real_distribution<double> angle(-tilt, tilt);
  const double ax = angle(rng), ay = angle(rng);
  return (Eigen::AngleAxisd(ax, Vec3::UnitX()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
          Vec3::UnitZ())
      .normalized();
}

}  // namespace

SceneSpec random_scene_spec(const PixelGrid& grid, int planes, bool dynamic, std::uint64_t seed,
                            const SceneRanges& ranges) {
  if (planes < 1 || planes > 3) throw InputError("random_scene_spec: planes must be 1, 2 or 3");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  SceneSpec spec;
  spec.grid = grid;
  spec.texture_seed = mix64(seed);
  for (int i = 0; i < 3; ++i) spec.camera.euler[i] = uniform(-ranges.rotation, ranges.rotation);
  const double T = ranges.translation;
  do {
    spec.camera.t = Vec3(uniform(-T, T), uniform(-T, T), uniform(-0.5 * T, 0.5 * T));
  } while (spec.camera.t.head<2>().norm() < 0.25 * T);

  const double base_depth = uniform(1.0, 2.0);
  std::vector<Region> regions;
  if (planes == 1) {
    regions.push_back(Region::all());
  } else if (planes == 2) {
    const double theta = uniform(-0.5, 0.5);
    const double a = std::cos(theta), b = std::sin(theta), c = uniform(-0.3, 0.3);
    regions.push_back(Region::halfplane(a, b, c));
    regions.push_back(Region::halfplane(-a, -b, -c));
  } else {
    const double s1 = uniform(-0.6, -0.1), s2 = uniform(0.1, 0.6);
    regions.push_back(Region::halfplane(-1, 0, s1));
    regions.push_back(Region{{{1, 0, -s1}, {-1, 0, s2}}});
    regions.push_back(Region::halfplane(1, 0, -s2));
  }
  double depth = base_depth;
  for (std::size_t k = 0; k < regions.size(); ++k) {
    spec.planes.push_back({tilted_normal(rng, ranges.tilt), depth, regions[k]});
    depth *= uniform(1.8, 3.0);
  }

  if (dynamic) {
    const double cx = uniform(-0.6, 0.6), cy = uniform(-0.6, 0.6);
    const double hx = uniform(0.1, 0.2), hy = uniform(0.1, 0.2);
    spec.dynamic_objects.push_back(
        {Region::rect(cx - hx, cy - hy, cx + hx, cy + hy), Vec2(uniform(-0.1, 0.1), uniform(-0.1, 0.1))});
  }
  return spec;
}

SceneSpec affine_scene_spec(const PixelGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  SceneSpec spec;
  spec.grid = grid;
  spec.texture_seed = mix64(seed);
  spec.camera.euler = Vec3(0.0, 0.0, uniform(-0.02, 0.02));
  spec.camera.t = Vec3(uniform(-0.08, 0.08), uniform(-0.08, 0.08), 0.0);
  spec.planes.push_back({Vec3::UnitZ(), uniform(1.0, 2.0), Region::all()});
  return spec;
}

std::vector<SceneSample> benchmark_suite(int count, std::uint64_t master_seed,
                                         const PixelGrid& grid, bool render) {
  if (count < 1) throw InputError("benchmark_suite: count must be >= 1");
  std::vector<SceneSample> suite(static_cast<std::size_t>(count));
  parallel_for(suite.size(), [&](std::size_t i) {
    const std::uint64_t seed = child_seed(master_seed, i);
    const int planes = 1 + static_cast<int>(i % 3);
    const bool dynamic = (i / 3) % 2 == 1;
    SceneRanges ranges;
    ranges.translation = 0.04 * double(1 + (i / 6) % 3);
    ranges.rotation = 0.01 * double(1 + (i / 18) % 2);
    const SceneSpec spec = random_scene_spec(grid, planes, dynamic, seed, ranges);
    suite[i] = build_scene(spec);
    if (render) render_pair(suite[i], spec.texture_seed);
  });
  return suite;
}

void save_scene(const SceneSample& sample, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_flo(sample.gt_flow, dir / "gt_flow.flo");
  write_mask_pgm(sample.valid, dir / "valid.pgm");
  write_pgm(ImageGray(sample.plane_ids.cast<double>() / 255.0), dir / "plane_ids.pgm", 255);
  json homographies = json::array();
  for (const auto& H : sample.homographies) homographies.push_back(H);
  write_json_file(homographies, dir / "homographies.json");
  write_json_file(json(sample.spec), dir / "spec.json");
  if (sample.images) {
    write_pgm(sample.images->a, dir / "i_a.pgm", 65535);
    write_pgm(sample.images->b, dir / "i_b.pgm", 65535);
  }
}

}  // namespace camflow
