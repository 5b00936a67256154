#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace camflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using ArrayXXd = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic>;
using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Error taxonomy. The CLI maps InputError and its children to exit code 2 and
// NumericalError and its children to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class GridMismatchError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class HorizonError : public DegeneracyError {
 public:
  HorizonError(const std::string& what, std::size_t index)
      : DegeneracyError(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class RankDeficiencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// SplitMix64 finalizer. Used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed i of a master seed: mix64(master ^ mix64(i)).
constexpr std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ mix64(index));
}

/// Worker cap from CAMFLOW_THREADS, defaulting to hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to worker_count() threads. Each index
/// must write only to its own output slot so results do not depend on the
/// thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace camflow
