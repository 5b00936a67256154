#include "camflow/robustfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace camflow {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kRidge = 1e-10;

void check_grid(const PixelGrid& a, const PixelGrid& b, const char* who) {
  if (!(a == b)) {
    throw GridMismatchError(std::string(who) + ": grid " + to_string(a) + " vs " + to_string(b));
  }
}

void check_mask(const OptionalMask& valid, const PixelGrid& grid, const char* who) {
  if (valid && (valid->rows() != grid.height || valid->cols() != grid.width)) {
    throw GridMismatchError(std::string(who) + ": validity mask does not match grid " +
                            to_string(grid));
  }
}

// Column-major indices of the pixels taking part in a fit.
std::vector<Eigen::Index> valid_indices(const PixelGrid& grid, const OptionalMask& valid) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(grid.size()));
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    if (!valid || (*valid)(i)) idx.push_back(i);
  return idx;
}

// Rows of the design matrix and target restricted to the valid pixels: all u
// rows first, then all v rows.
struct LinearProblem {
  MatX B;
  VecX t;
  Eigen::Index pixels = 0;
};

LinearProblem restrict_problem(const BasisSet& set, const FlowField& target,
                               const std::vector<Eigen::Index>& idx) {
  const Eigen::Index m = set.grid().size();
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  LinearProblem p{MatX(2 * n, set.size()), VecX(2 * n), n};
  const VecX t = flatten(target);
  for (int k = 0; k < set.size(); ++k) {
    const VecX b = flatten(set.bases[k]);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.B(i, k) = b[idx[i]];
      p.B(n + i, k) = b[m + idx[i]];
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    p.t[i] = t[idx[i]];
    p.t[n + i] = t[m + idx[i]];
  }
  return p;
}

VecX solve_weighted(const LinearProblem& p, const VecX* row_weights) {
  MatX G;
  VecX rhs;
  if (row_weights) {
    const VecX s = row_weights->cwiseSqrt();
    const MatX Bw = s.asDiagonal() * p.B;
    G = Bw.transpose() * Bw;
    rhs = Bw.transpose() * s.cwiseProduct(p.t);
  } else {
    G = p.B.transpose() * p.B;
    rhs = p.B.transpose() * p.t;
  }
  G.diagonal().array() += kRidge;
  Eigen::LDLT<MatX> ldlt(G);
  const VecX d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-15 * d.cwiseAbs().maxCoeff())) {
    throw RankDeficiencyError("weight fit: normal equations are rank deficient");
  }
  VecX w = ldlt.solve(rhs);
  if (!w.allFinite()) throw RankDeficiencyError("weight fit: non-finite solution");
  return w;
}

// Per-pixel |du| + |dv| for the restricted problem.
VecX pixel_residuals(const LinearProblem& p, const VecX& w) {
  const VecX r = p.t - p.B * w;
  return r.head(p.pixels).cwiseAbs() + r.tail(p.pixels).cwiseAbs();
}

double nll_from_residuals(const VecX& r, const VecX& sigma) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    sum += 2.0 * std::log(kSqrt2 * sigma[i]) + kSqrt2 * r[i] / sigma[i];
  }
  return sum / static_cast<double>(r.size());
}

VecX ml_sigma(const VecX& r, const SigmaBounds& b) {
  return (r / kSqrt2).cwiseMax(b.min).cwiseMin(b.max);
}

}  // namespace

void FitConfig::validate() const {
  if (max_iters < 1) throw InputError("FitConfig: max_iters must be >= 1");
  if (!(tol > 0.0) || !(irls_delta > 0.0) || !(balance_weight > 0.0)) {
    throw InputError("FitConfig: tol, irls_delta and balance_weight must be positive");
  }
  if (!(sigma.min > 0.0) || !(sigma.max >= sigma.min) || !std::isfinite(sigma.max)) {
    throw InputError("FitConfig: sigma bounds must satisfy 0 < min <= max < inf");
  }
}

FlowField synthesize_flow(const BasisSet& set, const WeightVector& w) {
  if (w.size() != set.size()) {
    throw InputError("synthesize_flow: " + std::to_string(w.size()) + " weights for " +
                     std::to_string(set.size()) + " bases");
  }
  FlowField out(set.grid());
  for (int k = 0; k < set.size(); ++k) {
    out.u += w[k] * set.bases[k].u;
    out.v += w[k] * set.bases[k].v;
  }
  return out;
}

double laplace_nll(const FlowField& target, const FlowField& pred, const ConfidenceMask& mask,
                   const OptionalMask& valid) {
  check_grid(target.grid, pred.grid, "laplace_nll");
  check_mask(valid, target.grid, "laplace_nll");
  if (mask.sigma.rows() != target.grid.height || mask.sigma.cols() != target.grid.width) {
    throw GridMismatchError("laplace_nll: confidence mask does not match grid");
  }
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < target.grid.size(); ++i) {
    if (valid && !(*valid)(i)) continue;
    const double s = mask.sigma(i);
    const double r = std::abs(target.u(i) - pred.u(i)) + std::abs(target.v(i) - pred.v(i));
    sum += 2.0 * std::log(std::sqrt(2.0 * s * s)) + std::sqrt(2.0 / (s * s)) * r;
    ++count;
  }
  if (count == 0) throw InputError("laplace_nll: empty valid set");
  return sum / static_cast<double>(count);
}

ConfidenceMask sigma_ml_update(const FlowField& target, const FlowField& pred,
                               const SigmaBounds& bounds) {
  check_grid(target.grid, pred.grid, "sigma_ml_update");
  const ArrayXXd r = (target.u - pred.u).abs() + (target.v - pred.v).abs();
  return {(r / kSqrt2).max(bounds.min).min(bounds.max)};
}

L2Fit fit_weights_l2(const BasisSet& set, const FlowField& target, const OptionalMask& valid) {
  check_grid(set.grid(), target.grid, "fit_weights_l2");
  check_mask(valid, target.grid, "fit_weights_l2");
  const auto idx = valid_indices(target.grid, valid);
  if (static_cast<int>(idx.size()) < set.size()) {
    throw InputError("fit_weights_l2: " + std::to_string(idx.size()) + " valid pixels for " +
                     std::to_string(set.size()) + " bases");
  }
  const LinearProblem p = restrict_problem(set, target, idx);
  L2Fit fit;
  fit.w = solve_weighted(p, nullptr);
  const VecX r = p.t - p.B * fit.w;
  fit.report.iterations = 1;
  fit.report.converged = true;
  fit.report.residual = std::sqrt(r.squaredNorm() / static_cast<double>(p.pixels));
  return fit;
}

LaplaceFit fit_weights_laplace(const BasisSet& set, const FlowField& target, const FitConfig& cfg,
                               const OptionalMask& valid) {
  cfg.validate();
  check_grid(set.grid(), target.grid, "fit_weights_laplace");
  check_mask(valid, target.grid, "fit_weights_laplace");
  const auto idx = valid_indices(target.grid, valid);
  if (static_cast<int>(idx.size()) < set.size()) {
    throw InputError("fit_weights_laplace: " + std::to_string(idx.size()) +
                     " valid pixels for " + std::to_string(set.size()) + " bases");
  }
  const LinearProblem p = restrict_problem(set, target, idx);
  const Eigen::Index n = p.pixels;

  auto checked = [](double nll) {
    if (!std::isfinite(nll)) {
      throw NumericalError("fit_weights_laplace: non-finite NLL (check sigma bounds / delta)");
    }
    return nll;
  };

  LaplaceFit fit;
  fit.w = solve_weighted(p, nullptr);
  VecX r = pixel_residuals(p, fit.w);
  const double uniform =
      std::clamp(r.mean() / kSqrt2, cfg.sigma.min, cfg.sigma.max);
  fit.report.nll_trace.push_back(checked(nll_from_residuals(r, VecX::Constant(n, uniform))));

  VecX row_weights(2 * n);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const VecX sigma = ml_sigma(r, cfg.sigma);
    const VecX comp = p.t - p.B * fit.w;
    for (Eigen::Index i = 0; i < n; ++i) {
      row_weights[i] = 1.0 / (sigma[i] * std::max(std::abs(comp[i]), cfg.irls_delta));
      row_weights[n + i] = 1.0 / (sigma[i] * std::max(std::abs(comp[n + i]), cfg.irls_delta));
    }
    const double current = checked(nll_from_residuals(r, sigma));
    const VecX candidate = solve_weighted(p, &row_weights);
    const VecX r_candidate = pixel_residuals(p, candidate);
    const double next = nll_from_residuals(r_candidate, sigma);

    bool stalled = false;
    double value = current;
    if (std::isfinite(next) && next <= current) {
      fit.w = candidate;
      r = r_candidate;
      value = next;
    } else {
      stalled = true;
    }
    const double previous = fit.report.nll_trace.back();
    fit.report.nll_trace.push_back(value);
    fit.report.iterations = it;
    if (stalled || std::abs(previous - value) <= cfg.tol * std::abs(previous)) {
      fit.report.converged = true;
      break;
    }
  }

  const VecX sigma = ml_sigma(r, cfg.sigma);
  fit.report.nll_trace.push_back(checked(nll_from_residuals(r, sigma)));
  fit.report.residual = (kSqrt2 * r.array() / sigma.array()).mean();

  // Scale for every pixel of the grid; pixels outside the valid set get the
  // scale implied by their own residual.
  fit.mask = sigma_ml_update(target, synthesize_flow(set, fit.w), cfg.sigma);
  return fit;
}

double photometric_nll(const ImageGray& ref, const ImageGray& warped, const ConfidenceMask& mask,
                       const MaskArray& valid) {
  if (ref.height() != warped.height() || ref.width() != warped.width() ||
      valid.rows() != ref.height() || valid.cols() != ref.width() ||
      mask.sigma.rows() != ref.height() || mask.sigma.cols() != ref.width()) {
    throw GridMismatchError("photometric_nll: shape mismatch");
  }
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < valid.size(); ++i) {
    if (!valid(i)) continue;
    const double s = mask.sigma(i);
    sum += std::log(std::sqrt(2.0 * s * s)) +
           std::sqrt(2.0 / (s * s)) * std::abs(ref.data(i) - warped.data(i));
    ++count;
  }
  if (count == 0) throw InputError("photometric_nll: empty valid set");
  return sum / static_cast<double>(count);
}

double hybrid_loss(double nll_p, double nll_m, double w) {
  if (std::abs(nll_m) < 1e-12) return nll_p;
  return nll_p + w * (std::abs(nll_p) / std::abs(nll_m)) * nll_m;
}

}  // namespace camflow
