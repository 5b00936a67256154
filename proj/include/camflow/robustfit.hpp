#pragma once

#include <optional>
#include <vector>

#include "camflow/basis.hpp"
#include "camflow/imaging.hpp"

namespace camflow {

using WeightVector = VecX;

struct SigmaBounds {
  double min = 1e-3;
  double max = 1e3;
};

/// Per-pixel Laplace scale, height x width.
struct ConfidenceMask {
  ArrayXXd sigma;

  static ConfidenceMask uniform(const PixelGrid& grid, double sigma) {
    return {ArrayXXd::Constant(grid.height, grid.width, sigma)};
  }
};

struct FitConfig {
  int max_iters = 50;
  double tol = 1e-8;          // relative NLL change
  double irls_delta = 1e-6;   // residual floor
  SigmaBounds sigma;
  double balance_weight = 1.0;

  void validate() const;
};

struct FitReport {
  int iterations = 0;
  std::vector<double> nll_trace;
  bool converged = false;
  // RMS residual for the L2 fit; mean sigma-weighted L1 residual for the
  // Laplace fit.
  double residual = 0.0;
};

using OptionalMask = std::optional<MaskArray>;

/// sum_i w_i * basis_i.
FlowField synthesize_flow(const BasisSet& set, const WeightVector& w);

/// Mean over valid pixels of 2 ln(sqrt(2 sigma^2)) + sqrt(2 / sigma^2)(|du| + |dv|).
double laplace_nll(const FlowField& target, const FlowField& pred, const ConfidenceMask& mask,
                   const OptionalMask& valid = std::nullopt);

/// Per-pixel minimizer of laplace_nll in sigma: clamp((|du| + |dv|) / sqrt(2)).
ConfidenceMask sigma_ml_update(const FlowField& target, const FlowField& pred,
                               const SigmaBounds& bounds = {});

struct L2Fit {
  WeightVector w;
  FitReport report;
};

/// Ridge-stabilized (1e-10) normal equations over valid pixels.
L2Fit fit_weights_l2(const BasisSet& set, const FlowField& target,
                     const OptionalMask& valid = std::nullopt);

struct LaplaceFit {
  WeightVector w;
  ConfidenceMask mask;
  FitReport report;
};

/// Alternates the closed-form sigma update with an IRLS step on the weighted
/// L1 term. A weight step that would raise the NLL is rejected, so the
/// recorded trace never increases.
LaplaceFit fit_weights_laplace(const BasisSet& set, const FlowField& target,
                               const FitConfig& cfg = {},
                               const OptionalMask& valid = std::nullopt);

/// 1D Laplace NLL on intensity residuals, averaged over valid pixels.
double photometric_nll(const ImageGray& ref, const ImageGray& warped, const ConfidenceMask& mask,
                       const MaskArray& valid);

/// nll_p + w * (|nll_p| / |nll_m|) * nll_m; returns nll_p when |nll_m| < 1e-12.
double hybrid_loss(double nll_p, double nll_m, double w);

}  // namespace camflow
