#include "camflow/serialization.hpp"

#include <fstream>

namespace camflow {

namespace {

json vec_json(const Eigen::Ref<const VecX>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const json& j) {
  if (!j.is_array() || j.size() != N) {
    throw FormatError("expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out[i] = j.at(i).get<double>();
  return out;
}

std::vector<Vec2> points_from(const json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back(vec_from<2>(p));
  return out;
}

}  // namespace

void to_json(json& j, const Homography& H) { j = vec_json(H.coefficients()); }

void from_json(const json& j, Homography& H) {
  if (!j.is_array() || j.size() != 9) throw FormatError("homography: expected 9 coefficients");
  std::array<double, 9> h{};
  for (int i = 0; i < 9; ++i) h[i] = j.at(i).get<double>();
  H = Homography::from_coefficients(std::span<const double>(h));
}

void to_json(json& j, const PointPairs& p) {
  j = json{{"src", json::array()}, {"dst", json::array()}};
  for (const auto& s : p.src) j["src"].push_back({s.x(), s.y()});
  for (const auto& d : p.dst) j["dst"].push_back({d.x(), d.y()});
}

void from_json(const json& j, PointPairs& p) {
  p.src = points_from(j.at("src"));
  p.dst = points_from(j.at("dst"));
  if (p.src.size() != p.dst.size()) throw FormatError("point pairs: src/dst length mismatch");
}

void to_json(json& j, const FitConfig& cfg) {
  j = json{{"max_iters", cfg.max_iters},   {"tol", cfg.tol},
           {"irls_delta", cfg.irls_delta}, {"sigma_min", cfg.sigma.min},
           {"sigma_max", cfg.sigma.max},   {"balance_weight", cfg.balance_weight}};
}

void from_json(const json& j, FitConfig& cfg) {
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.tol = j.value("tol", cfg.tol);
  cfg.irls_delta = j.value("irls_delta", cfg.irls_delta);
  cfg.sigma.min = j.value("sigma_min", cfg.sigma.min);
  cfg.sigma.max = j.value("sigma_max", cfg.sigma.max);
  cfg.balance_weight = j.value("balance_weight", cfg.balance_weight);
}

void to_json(json& j, const FitReport& r) {
  j = json{{"iterations", r.iterations},
           {"nll_trace", r.nll_trace},
           {"converged", r.converged},
           {"residual", r.residual}};
}

void to_json(json& j, const MetricReport& r) {
  j = json{{"name", r.name}, {"value", r.value}, {"count", r.count}, {"coverage", r.coverage}};
}

void to_json(json& j, const Region& r) {
  if (r.halfplanes.empty()) {
    j = "all";
    return;
  }
  j = json{{"halfplanes", json::array()}};
  for (const auto& h : r.halfplanes) j["halfplanes"].push_back({h[0], h[1], h[2]});
}

void from_json(const json& j, Region& r) {
  r.halfplanes.clear();
  if (j.is_string()) {
    if (j.get<std::string>() != "all") throw FormatError("region: unknown keyword");
    return;
  }
  if (j.contains("rect")) {
    const auto b = vec_from<4>(j.at("rect"));
    r = Region::rect(b[0], b[1], b[2], b[3]);
    return;
  }
  for (const auto& h : j.at("halfplanes")) {
    const auto v = vec_from<3>(h);
    r.halfplanes.push_back({v[0], v[1], v[2]});
  }
}

void to_json(json& j, const SceneSpec& s) {
  j = json{{"grid", {{"h", s.grid.height}, {"w", s.grid.width}}},
           {"camera",
            {{"focal", s.camera.focal},
             {"principal", vec_json(s.camera.principal)},
             {"euler", vec_json(s.camera.euler)},
             {"t", vec_json(s.camera.t)}}},
           {"planes", json::array()},
           {"dynamic_objects", json::array()},
           {"texture_seed", s.texture_seed}};
  for (const auto& p : s.planes) {
    j["planes"].push_back({{"n", vec_json(p.n)}, {"d", p.d}, {"region", p.region}});
  }
  for (const auto& o : s.dynamic_objects) {
    j["dynamic_objects"].push_back({{"region", o.region}, {"motion", vec_json(o.motion)}});
  }
}

void from_json(const json& j, SceneSpec& s) {
  s.grid = PixelGrid(j.at("grid").at("h").get<int>(), j.at("grid").at("w").get<int>());
  const auto& cam = j.at("camera");
  s.camera.focal = cam.value("focal", 1.0);
  s.camera.principal = cam.contains("principal") ? Vec2(vec_from<2>(cam.at("principal"))) : Vec2::Zero();
  s.camera.euler = cam.contains("euler") ? Vec3(vec_from<3>(cam.at("euler"))) : Vec3::Zero();
  s.camera.t = cam.contains("t") ? Vec3(vec_from<3>(cam.at("t"))) : Vec3::Zero();
  s.planes.clear();
  for (const auto& p : j.at("planes")) {
    s.planes.push_back({vec_from<3>(p.at("n")), p.at("d").get<double>(),
                        p.contains("region") ? p.at("region").get<Region>() : Region::all()});
  }
  s.dynamic_objects.clear();
  if (j.contains("dynamic_objects")) {
    for (const auto& o : j.at("dynamic_objects")) {
      s.dynamic_objects.push_back({o.at("region").get<Region>(), vec_from<2>(o.at("motion"))});
    }
  }
  s.texture_seed = j.value("texture_seed", std::uint64_t{0});
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace camflow
