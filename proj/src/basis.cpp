#include "camflow/basis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <json.hpp>

#include "camflow/checksum.hpp"
#include "camflow/flo_io.hpp"

namespace camflow {

std::string to_string(BasisKind kind) {
  return kind == BasisKind::physical ? "physical" : "stochastic";
}

BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "physical") return BasisKind::physical;
  if (s == "stochastic") return BasisKind::stochastic;
  throw FormatError("unknown basis kind '" + s + "'");
}

void BasisSpec::validate() const {
  if (grid.height < 2 || grid.width < 2) {
    throw InputError("BasisSpec: grid must be at least 2x2, got " + to_string(grid));
  }
  if (n < kPhysicalBasisCount) throw InputError("BasisSpec: n must be >= 12");
  if (num_random_samples < 0) throw InputError("BasisSpec: num_random_samples must be >= 0");
  if (!(gaussian_scale > 0.0) || !std::isfinite(gaussian_scale)) {
    throw InputError("BasisSpec: gaussian_scale must be positive");
  }
  const long long stochastic = n - kPhysicalBasisCount;
  const long long room = 2LL * grid.size() - kPhysicalBasisCount;
  if (stochastic > std::min<long long>(num_random_samples, room)) {
    throw InputError("BasisSpec: n - 12 = " + std::to_string(stochastic) +
                     " exceeds min(num_random_samples, 2HW - 12)");
  }
}

VecX flatten(const FlowField& flow) {
  const Eigen::Index m = flow.grid.size();
  VecX out(2 * m);
  out.head(m) = Eigen::Map<const VecX>(flow.u.data(), m);
  out.tail(m) = Eigen::Map<const VecX>(flow.v.data(), m);
  return out;
}

FlowField unflatten(const Eigen::Ref<const VecX>& vec, const PixelGrid& grid) {
  const Eigen::Index m = grid.size();
  if (vec.size() != 2 * m) throw GridMismatchError("unflatten: length does not match grid");
  FlowField flow(grid);
  Eigen::Map<VecX>(flow.u.data(), m) = vec.head(m);
  Eigen::Map<VecX>(flow.v.data(), m) = vec.tail(m);
  return flow;
}

MatX BasisSet::matrix() const {
  MatX B(2 * grid().size(), size());
  for (int i = 0; i < size(); ++i) B.col(i) = flatten(bases[i]);
  return B;
}

BasisSet BasisSet::subset(std::span<const int> indices) const {
  BasisSet out;
  out.spec = spec;
  out.spec.n = static_cast<int>(indices.size());
  for (const int i : indices) {
    if (i < 0 || i >= size()) throw InputError("BasisSet::subset: index out of range");
    out.bases.push_back(bases[i]);
    out.kinds.push_back(kinds[i]);
  }
  return out;
}

std::vector<FlowField> physical_monomial_flows(const PixelGrid& grid) {
  using Monomial = double (*)(double, double);
  static constexpr Monomial kMonomials[6] = {
      [](double, double) { return 1.0; },     [](double x, double) { return x; },
      [](double, double y) { return y; },     [](double x, double y) { return x * y; },
      [](double x, double) { return x * x; }, [](double, double y) { return y * y; },
  };
  std::vector<FlowField> out(kPhysicalBasisCount, FlowField(grid));
  for (int k = 0; k < 6; ++k) {
    for (int c = 0; c < grid.width; ++c) {
      for (int r = 0; r < grid.height; ++r) {
        const double b = kMonomials[k](grid.x(c), grid.y(r));
        out[k].u(r, c) = b;
        out[6 + k].v(r, c) = b;
      }
    }
  }
  return out;
}

std::vector<FlowField> physical_bases(const PixelGrid& grid) {
  auto flows = physical_monomial_flows(grid);
  for (auto& f : flows) {
    const double norm = f.norm();
    if (norm > 0.0) {
      f.u /= norm;
      f.v /= norm;
    }
  }
  return flows;
}

namespace {

// Orthonormal basis of the span of the given flows (rank-revealing).
MatX orthonormal_span(std::span<const FlowField> flows, Eigen::Index rows) {
  MatX P(rows, static_cast<Eigen::Index>(flows.size()));
  for (std::size_t i = 0; i < flows.size(); ++i) P.col(static_cast<Eigen::Index>(i)) = flatten(flows[i]);
  Eigen::ColPivHouseholderQR<MatX> qr(P);
  qr.setThreshold(1e-12);
  const Eigen::Index rank = qr.rank();
  MatX Q = MatX::Identity(rows, rank);
  Q.applyOnTheLeft(qr.householderQ());
  return Q;
}

void deflate(Eigen::Ref<VecX> x, const MatX& Q) { x.noalias() -= Q * (Q.transpose() * x); }

// Draws h1..h8 until the projective denominator stays >= 0.1 in magnitude on
// every grid node.
Homography draw_sample(std::mt19937_64& rng, std::normal_distribution<double>& normal,
                       const PixelGrid& grid, long long& budget) {
  constexpr double kMinDenominator = 0.1;
  while (budget-- > 0) {
    Mat3 m;
    for (int i = 0; i < 8; ++i) m(i / 3, i % 3) = normal(rng);
    m(2, 2) = 1.0;
    double lowest = std::numeric_limits<double>::infinity();
    for (int c = 0; c < grid.width && lowest >= kMinDenominator; ++c)
      for (int r = 0; r < grid.height; ++r)
        lowest = std::min(lowest, std::abs(m(2, 0) * grid.x(c) + m(2, 1) * grid.y(r) + 1.0));
    if (lowest < kMinDenominator) continue;
    if (std::abs(m.determinant()) <= 1e-12) continue;
    return Homography(m);
  }
  throw RankDeficiencyError("stochastic_bases: sample budget exhausted by rejections");
}

}  // namespace

std::vector<FlowField> stochastic_bases(const BasisSpec& spec, std::span<const FlowField> physical) {
  spec.validate();
  const int wanted = spec.n - kPhysicalBasisCount;
  if (wanted == 0) return {};
  const PixelGrid& grid = spec.grid;
  const Eigen::Index rows = 2 * grid.size();
  const int K = spec.num_random_samples;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, spec.gaussian_scale);
  long long budget = 10000LL + 100LL * K;
  std::vector<Homography> samples;
  samples.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) samples.push_back(draw_sample(rng, normal, grid, budget));

  const MatX Q = orthonormal_span(physical, rows);
  MatX A(rows, K);
  parallel_for(static_cast<std::size_t>(K), [&](std::size_t k) {
    auto col = A.col(static_cast<Eigen::Index>(k));
    col = flatten(flow_from_homography(samples[k], grid));
    deflate(col, Q);
  });

  // Left singular vectors from the eigen-decomposition of the K x K Gram matrix.
  MatX gram = MatX::Zero(K, K);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> eig(gram.selfadjointView<Eigen::Lower>());
  if (eig.info() != Eigen::Success) throw NumericalError("stochastic_bases: eigensolver failed");
  const VecX& lambda = eig.eigenvalues();  // ascending
  const double top = std::max(lambda[K - 1], 0.0);
  const double kth = lambda[K - wanted];
  if (!(top > 0.0) || !(kth > 1e-20 * top)) {
    throw RankDeficiencyError("stochastic_bases: deflated samples have rank < " +
                              std::to_string(wanted));
  }

  MatX U(rows, wanted);
  for (int i = 0; i < wanted; ++i) {
    const Eigen::Index src = K - 1 - i;
    U.col(i) = A * eig.eigenvectors().col(src) / std::sqrt(lambda[src]);
  }
  // Two passes of deflation plus modified Gram-Schmidt restore orthogonality
  // lost to the Gram route.
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < wanted; ++i) {
      auto ui = U.col(i);
      deflate(ui, Q);
      for (int j = 0; j < i; ++j) ui -= U.col(j).dot(ui) * U.col(j);
      ui.normalize();
    }
  }

  std::vector<FlowField> out;
  out.reserve(static_cast<std::size_t>(wanted));
  for (int i = 0; i < wanted; ++i) {
    auto ui = U.col(i);
    Eigen::Index arg = 0;
    ui.cwiseAbs().maxCoeff(&arg);
    if (ui[arg] < 0.0) ui = -ui;
    out.push_back(unflatten(ui, grid));
  }
  return out;
}

namespace {

// Rounds a unit-norm flow to .flo precision while keeping its norm at 1. Each
// entry goes to one of its two neighbouring float32 values; entries closest to
// the rounding midpoint are switched first, skipping any switch that would
// overshoot.
FlowField quantize_unit_norm(const FlowField& flow) {
  FlowField q = quantize_for_flo(flow);
  const double target = flow.norm();
  if (!(target > 0.0)) return q;
  struct Candidate {
    double* slot;
    double alternative;
    double extra_error;  // added rounding error, in units of the spacing
  };
  std::vector<Candidate> up, down;  // switches that raise / lower the norm
  auto collect = [&](const ArrayXXd& exact, ArrayXXd& rounded, double scale) {
    for (Eigen::Index i = 0; i < exact.size(); ++i) {
      const float f = static_cast<float>(rounded(i) * scale);
      const double e = exact(i) * scale;
      if (static_cast<double>(f) == e) continue;
      const float alt = std::nextafter(f, e > f ? std::numeric_limits<float>::infinity()
                                                : -std::numeric_limits<float>::infinity());
      const double spacing = std::abs(double(alt) - double(f));
      const double extra = (std::abs(double(alt) - e) - std::abs(double(f) - e)) / spacing;
      const double alternative = static_cast<double>(alt) / scale;
      Candidate c{&rounded(i), alternative, extra};
      (std::abs(alternative) > std::abs(rounded(i)) ? up : down).push_back(c);
    }
  };
  collect(flow.u, q.u, flow.grid.scale_x());
  collect(flow.v, q.v, flow.grid.scale_y());

  double sq = q.u.square().sum() + q.v.square().sum();
  const double goal = target * target;
  auto& pool = sq < goal ? up : down;
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Candidate& a, const Candidate& b) { return a.extra_error < b.extra_error; });
  for (const auto& c : pool) {
    const double next = sq - (*c.slot) * (*c.slot) + c.alternative * c.alternative;
    if (std::abs(next - goal) >= std::abs(sq - goal)) continue;
    *c.slot = c.alternative;
    sq = next;
  }
  return q;
}

}  // namespace

BasisSet hybrid_basis(const BasisSpec& spec) {
  spec.validate();
  BasisSet set;
  set.spec = spec;
  const auto physical = physical_bases(spec.grid);
  auto stochastic = stochastic_bases(spec, physical);
  for (const auto& f : physical) {
    set.bases.push_back(quantize_unit_norm(f));
    set.kinds.push_back(BasisKind::physical);
  }
  for (auto& f : stochastic) {
    set.bases.push_back(quantize_unit_norm(f));
    set.kinds.push_back(BasisKind::stochastic);
  }
  return set;
}

std::vector<int> bilinear_subset_indices() { return {0, 1, 2, 3, 6, 7, 8, 9}; }

namespace {

std::string basis_file_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "basis_%03d.flo", i);
  return buf;
}

}  // namespace

void save_bundle(const BasisSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["grid"] = {{"h", set.spec.grid.height}, {"w", set.spec.grid.width}};
  manifest["n"] = set.size();
  manifest["num_random_samples"] = set.spec.num_random_samples;
  manifest["seed"] = set.spec.seed;
  manifest["gaussian_scale"] = set.spec.gaussian_scale;
  manifest["bases"] = nlohmann::ordered_json::array();
  for (int i = 0; i < set.size(); ++i) {
    const std::string file = basis_file_name(i);
    write_flo(set.bases[i], dir / file);
    manifest["bases"].push_back(
        {{"file", file}, {"kind", to_string(set.kinds[i])}, {"sha256", sha256_file(dir / file)}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw FormatError("save_bundle: cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

BasisSet load_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("load_bundle: missing " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
    BasisSet set;
    set.spec.grid = PixelGrid(manifest.at("grid").at("h").get<int>(),
                              manifest.at("grid").at("w").get<int>());
    set.spec.n = manifest.at("n").get<int>();
    set.spec.num_random_samples = manifest.at("num_random_samples").get<int>();
    set.spec.seed = manifest.at("seed").get<std::uint64_t>();
    set.spec.gaussian_scale = manifest.at("gaussian_scale").get<double>();
    const auto& entries = manifest.at("bases");
    if (!entries.is_array() || static_cast<int>(entries.size()) != set.spec.n) {
      throw FormatError("load_bundle: manifest lists " + std::to_string(entries.size()) +
                        " bases but n = " + std::to_string(set.spec.n));
    }
    for (const auto& entry : entries) {
      const auto file = dir / entry.at("file").get<std::string>();
      if (!std::filesystem::exists(file)) {
        throw FormatError("load_bundle: missing basis file " + file.string());
      }
      if (sha256_file(file) != entry.at("sha256").get<std::string>()) {
        throw ChecksumError("load_bundle: checksum mismatch for " + file.string());
      }
      FlowField flow = read_flo(file);
      if (!(flow.grid == set.spec.grid)) {
        throw GridMismatchError("load_bundle: " + file.string() + " has grid " +
                                to_string(flow.grid) + ", manifest says " +
                                to_string(set.spec.grid));
      }
      set.bases.push_back(std::move(flow));
      set.kinds.push_back(basis_kind_from_string(entry.at("kind").get<std::string>()));
    }
    for (int i = 0; i < set.size(); ++i) {
      const auto expected = i < kPhysicalBasisCount ? BasisKind::physical : BasisKind::stochastic;
      if (set.kinds[i] != expected) throw FormatError("load_bundle: basis kinds out of order");
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("load_bundle: malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace camflow
