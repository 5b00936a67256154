#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "camflow/geometry.hpp"

namespace camflow {

enum class BasisKind { physical, stochastic };

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& s);

inline constexpr int kPhysicalBasisCount = 12;

struct BasisSpec {
  PixelGrid grid{80, 144};
  int n = 24;
  int num_random_samples = 512;
  std::uint64_t seed = 0;
  double gaussian_scale = 1.0;

  /// Throws InputError. Requires a grid of at least 2x2 so that no physical
  /// monomial vanishes identically.
  void validate() const;
};

/// Ordered stack of unit-norm flows: 12 physical, then n - 12 stochastic.
/// Stored values are rounded to .flo precision so bundles reload bit-exactly.
struct BasisSet {
  BasisSpec spec;
  std::vector<FlowField> bases;
  std::vector<BasisKind> kinds;

  int size() const { return static_cast<int>(bases.size()); }
  const PixelGrid& grid() const { return spec.grid; }

  /// 2HW x N design matrix, one flattened basis per column.
  MatX matrix() const;

  /// Keeps the listed bases in the given order.
  BasisSet subset(std::span<const int> indices) const;
};

/// Flattens u then v, each in column-major order.
VecX flatten(const FlowField& flow);
FlowField unflatten(const Eigen::Ref<const VecX>& vec, const PixelGrid& grid);

/// The monomials [1, x, y, xy, x^2, y^2] as (b, 0) flows followed by (0, b)
/// flows, before normalization.
std::vector<FlowField> physical_monomial_flows(const PixelGrid& grid);

/// Unit-norm physical bases. Monomials that vanish on the grid (e.g. x on a
/// single-column grid) are returned as zero flows.
std::vector<FlowField> physical_bases(const PixelGrid& grid);

/// Principal components of random homography flows after removing their
/// component inside span(physical). Throws RankDeficiencyError when the
/// deflated samples span fewer than n - 12 directions.
std::vector<FlowField> stochastic_bases(const BasisSpec& spec, std::span<const FlowField> physical);

BasisSet hybrid_basis(const BasisSpec& spec);

/// Indices of the 8-basis subset {1, x, y, xy} in both directions.
std::vector<int> bilinear_subset_indices();

/// Writes manifest.json plus basis_NNN.flo files into `dir`.
void save_bundle(const BasisSet& set, const std::filesystem::path& dir);

/// Throws FormatError on missing files or manifest inconsistencies and
/// ChecksumError (naming the file) on digest mismatch.
BasisSet load_bundle(const std::filesystem::path& dir);

}  // namespace camflow
