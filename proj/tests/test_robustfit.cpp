#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "camflow/robustfit.hpp"
#include "camflow/synth.hpp"

using namespace camflow;

namespace {

const BasisSet& basis24() {
  static const BasisSet set = [] {
    BasisSpec spec;
    spec.seed = 17;
    return hybrid_basis(spec);
  }();
  return set;
}

const BasisSet& small_basis() {
  static const BasisSet set = [] {
    BasisSpec spec;
    spec.grid = PixelGrid(24, 40);
    spec.n = 16;
    spec.num_random_samples = 48;
    spec.seed = 2;
    return hybrid_basis(spec);
  }();
  return set;
}

VecX random_weights(int n, std::mt19937_64& rng, double scale = 2.0) {
  std::normal_distribution<double> normal(0.0, scale);
  VecX w(n);
  for (auto& x : w) x = normal(rng);
  return w;
}

FlowField random_flow(const PixelGrid& g, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  FlowField f(g);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    f.u(i) = u(rng);
    f.v(i) = u(rng);
  }
  return f;
}

// Adds 10 px displacements in random directions to a fraction of pixels;
// returns the outlier mask.
MaskArray contaminate(FlowField& f, double fraction, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const auto& g = f.grid;
  MaskArray outlier = MaskArray::Constant(g.height, g.width, false);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (uniform(rng) >= fraction) continue;
    const double t = 2.0 * std::numbers::pi * uniform(rng);
    f.u(i) += 10.0 * std::cos(t) / g.scale_x();
    f.v(i) += 10.0 * std::sin(t) / g.scale_y();
    outlier(i) = true;
  }
  return outlier;
}

double rel_error(const VecX& w, const VecX& ref) { return (w - ref).norm() / ref.norm(); }

}  // namespace

TEST(SynthesizeFlow, ZeroAndUnitWeights) {
  const auto& set = small_basis();
  const auto zero = synthesize_flow(set, VecX::Zero(set.size()));
  EXPECT_EQ(zero.u.abs().maxCoeff(), 0.0);
  EXPECT_EQ(zero.v.abs().maxCoeff(), 0.0);
  for (int k = 0; k < set.size(); ++k) {
    const auto f = synthesize_flow(set, VecX::Unit(set.size(), k));
    EXPECT_TRUE((f.u == set.bases[k].u).all() && (f.v == set.bases[k].v).all()) << k;
  }
}

TEST(SynthesizeFlow, MatchesNaiveAccumulation) {
  const auto& set = basis24();
  std::mt19937_64 rng(4);
  const VecX w = random_weights(set.size(), rng);
  const auto f = synthesize_flow(set, w);
  const auto& g = set.grid();
  double worst = 0.0;
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c) {
      double u = 0.0, v = 0.0;
      for (int k = 0; k < set.size(); ++k) {
        u += w[k] * set.bases[k].u(r, c);
        v += w[k] * set.bases[k].v(r, c);
      }
      worst = std::max({worst, std::abs(u - f.u(r, c)), std::abs(v - f.v(r, c))});
    }
  EXPECT_LT(worst, 1e-12);
}

TEST(SynthesizeFlow, Linear) {
  const auto& set = small_basis();
  std::mt19937_64 rng(5);
  const VecX w1 = random_weights(set.size(), rng), w2 = random_weights(set.size(), rng);
  const double alpha = -0.7;
  const auto lhs = synthesize_flow(set, w1 + alpha * w2);
  const auto f1 = synthesize_flow(set, w1), f2 = synthesize_flow(set, w2);
  EXPECT_LT((lhs.u - (f1.u + alpha * f2.u)).abs().maxCoeff(), 1e-12);
  EXPECT_LT((lhs.v - (f1.v + alpha * f2.v)).abs().maxCoeff(), 1e-12);
}

TEST(SynthesizeFlow, LengthMismatch) {
  EXPECT_THROW(synthesize_flow(small_basis(), VecX::Zero(3)), InputError);
}

TEST(LaplaceNll, ClosedFormCases) {
  const PixelGrid g(3, 4);
  const auto half = ConfidenceMask::uniform(g, std::sqrt(0.5));
  EXPECT_NEAR(laplace_nll(FlowField(g), FlowField(g), half), 0.0, 1e-15);
  EXPECT_NEAR(laplace_nll(FlowField::constant(g, 1.0, 0.0), FlowField(g), half), 2.0, 1e-14);
  EXPECT_NEAR(laplace_nll(FlowField::constant(g, 0.0, -1.0), FlowField(g), half), 2.0, 1e-14);
}

TEST(LaplaceNll, MatchesDensityProduct) {
  const PixelGrid g(6, 7);
  std::mt19937_64 rng(8);
  const auto t = random_flow(g, rng, 1.0), p = random_flow(g, rng, 1.0);
  std::uniform_real_distribution<double> s(0.2, 2.0);
  ConfidenceMask mask{ArrayXXd(g.height, g.width)};
  for (Eigen::Index i = 0; i < g.size(); ++i) mask.sigma(i) = s(rng);
  MaskArray valid = MaskArray::Constant(g.height, g.width, true);
  valid(2, 3) = valid(0, 0) = false;
  // Laplace density with variance sigma^2 has scale b = sigma / sqrt(2).
  double log_sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!valid(i)) continue;
    const double b = mask.sigma(i) / std::sqrt(2.0);
    const double density = std::exp(-std::abs(t.u(i) - p.u(i)) / b) / (2 * b) *
                           std::exp(-std::abs(t.v(i) - p.v(i)) / b) / (2 * b);
    log_sum += std::log(density);
    ++count;
  }
  EXPECT_NEAR(laplace_nll(t, p, mask, valid), -log_sum / count, 1e-9);
}

TEST(LaplaceNll, Errors) {
  const PixelGrid g(3, 4);
  const auto m = ConfidenceMask::uniform(g, 1.0);
  EXPECT_THROW(laplace_nll(FlowField(g), FlowField({4, 3}), m), GridMismatchError);
  EXPECT_THROW(laplace_nll(FlowField(g), FlowField(g), ConfidenceMask::uniform({2, 2}, 1.0)),
               GridMismatchError);
  EXPECT_THROW(laplace_nll(FlowField(g), FlowField(g), m, MaskArray::Constant(3, 4, false)),
               InputError);
}

TEST(SigmaMlUpdate, ClosedFormAndClamp) {
  const PixelGrid g(2, 2);
  FlowField t(g);
  t.u(0, 0) = std::sqrt(2.0);
  t.u(0, 1) = 1e6;
  const auto m = sigma_ml_update(t, FlowField(g));
  EXPECT_NEAR(m.sigma(0, 0), 1.0, 1e-15);
  EXPECT_EQ(m.sigma(1, 1), 1e-3);
  EXPECT_EQ(m.sigma(0, 1), 1e3);
  const auto custom = sigma_ml_update(t, FlowField(g), {0.5, 2.0});
  EXPECT_EQ(custom.sigma(1, 1), 0.5);
}

TEST(SigmaMlUpdate, LocallyOptimal) {
  const PixelGrid g(5, 6);
  std::mt19937_64 rng(12);
  const auto t = random_flow(g, rng, 0.5), p = random_flow(g, rng, 0.5);
  const auto best = sigma_ml_update(t, p);
  const double base = laplace_nll(t, p, best);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    for (double factor : {0.99, 1.01}) {
      ConfidenceMask probe = best;
      probe.sigma(i) *= factor;
      EXPECT_GE(laplace_nll(t, p, probe), base) << i;
    }
  }
  // And against arbitrary in-bounds scales.
  for (double s : {1e-3, 0.01, 0.3, 1.0, 50.0}) {
    EXPECT_GE(laplace_nll(t, p, ConfidenceMask::uniform(g, s)), base);
  }
}

TEST(FitConfig, Validation) {
  FitConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.validate(), InputError);
  cfg = {};
  cfg.tol = -1;
  EXPECT_THROW(cfg.validate(), InputError);
  cfg = {};
  cfg.sigma = {2.0, 1.0};
  EXPECT_THROW(cfg.validate(), InputError);
  cfg = {};
  cfg.irls_delta = 0;
  EXPECT_THROW(cfg.validate(), InputError);
}

TEST(FitL2, RecoversExactWeights) {
  const auto& set = basis24();
  std::mt19937_64 rng(1);
  const VecX w = random_weights(set.size(), rng);
  const auto fit = fit_weights_l2(set, synthesize_flow(set, w));
  EXPECT_LT(rel_error(fit.w, w), 1e-9);
  EXPECT_TRUE(fit.report.converged);
}

TEST(FitL2, ZeroTarget) {
  const auto fit = fit_weights_l2(small_basis(), FlowField(small_basis().grid()));
  EXPECT_LT(fit.w.cwiseAbs().maxCoeff(), 1e-300);
  EXPECT_EQ(fit.report.residual, 0.0);
}

TEST(FitL2, ResidualOrthogonalToBasisOnValidSet) {
  const auto& set = small_basis();
  std::mt19937_64 rng(2);
  const auto target = random_flow(set.grid(), rng, 0.1);
  MaskArray valid = MaskArray::Constant(set.grid().height, set.grid().width, true);
  valid.block(3, 4, 6, 9) = false;
  const auto fit = fit_weights_l2(set, target, valid);
  const auto pred = synthesize_flow(set, fit.w);
  const double rnorm = std::sqrt(((target.u - pred.u).square() * valid.cast<double>()).sum() +
                                 ((target.v - pred.v).square() * valid.cast<double>()).sum());
  for (const auto& b : set.bases) {
    const double dot = ((target.u - pred.u) * b.u * valid.cast<double>()).sum() +
                       ((target.v - pred.v) * b.v * valid.cast<double>()).sum();
    EXPECT_LT(std::abs(dot) / rnorm, 1e-8);
  }
}

TEST(FitL2, Errors) {
  const auto& set = small_basis();
  EXPECT_THROW(fit_weights_l2(set, FlowField({5, 5})), GridMismatchError);
  MaskArray few = MaskArray::Constant(set.grid().height, set.grid().width, false);
  few.block(0, 0, 1, 10) = true;
  EXPECT_THROW(fit_weights_l2(set, FlowField(set.grid()), few), InputError);
  EXPECT_THROW(fit_weights_l2(set, FlowField(set.grid()), MaskArray::Constant(2, 2, true)),
               GridMismatchError);
  // A huge basis and its duplicate: the ridge cannot repair the conditioning.
  BasisSet bad = set.subset(std::vector<int>{0, 1});
  bad.bases[0].u *= 1e8;
  bad.bases[0].v *= 1e8;
  bad.bases[1] = bad.bases[0];
  EXPECT_THROW(fit_weights_l2(bad, FlowField(set.grid())), RankDeficiencyError);
}

TEST(FitLaplace, NoiselessConvergesQuickly) {
  const auto& set = basis24();
  std::mt19937_64 rng(3);
  const VecX w = random_weights(set.size(), rng);
  const auto fit = fit_weights_laplace(set, synthesize_flow(set, w));
  EXPECT_LT(rel_error(fit.w, w), 1e-6);
  EXPECT_LE(fit.report.iterations, 3);
  EXPECT_TRUE(fit.report.converged);
}

TEST(FitLaplace, RobustToOutliers) {
  const auto& set = basis24();
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const VecX w = random_weights(set.size(), rng);
    FlowField target = synthesize_flow(set, w);
    const MaskArray outlier = contaminate(target, 0.3, rng);
    const auto lap = fit_weights_laplace(set, target);
    const auto l2 = fit_weights_l2(set, target);
    EXPECT_LT(rel_error(lap.w, w), 1e-2);
    EXPECT_GE(rel_error(l2.w, w), 5.0 * rel_error(lap.w, w));

    std::vector<double> all(lap.mask.sigma.data(), lap.mask.sigma.data() + lap.mask.sigma.size());
    std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
    const double median = all[all.size() / 2];
    double min_outlier = INFINITY;
    for (Eigen::Index i = 0; i < outlier.size(); ++i)
      if (outlier(i)) min_outlier = std::min(min_outlier, lap.mask.sigma(i));
    EXPECT_GE(min_outlier, 10.0 * median);
  }
}

TEST(FitLaplace, TraceNonIncreasing) {
  const auto& set = small_basis();
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    FlowField target = synthesize_flow(set, random_weights(set.size(), rng));
    std::normal_distribution<double> noise(0.0, 0.002);
    for (Eigen::Index i = 0; i < target.grid.size(); ++i) {
      target.u(i) += noise(rng);
      target.v(i) += noise(rng);
    }
    contaminate(target, 0.2, rng);
    const auto fit = fit_weights_laplace(set, target);
    const auto& tr = fit.report.nll_trace;
    ASSERT_GE(tr.size(), 2u);
    for (std::size_t k = 1; k < tr.size(); ++k) {
      EXPECT_LE(tr[k], tr[k - 1] + 1e-10) << "seed " << seed << " step " << k;
      EXPECT_TRUE(std::isfinite(tr[k]));
    }
  }
}

TEST(FitLaplace, ReportAndMaskShape) {
  const auto& set = small_basis();
  std::mt19937_64 rng(6);
  FlowField target = synthesize_flow(set, random_weights(set.size(), rng));
  contaminate(target, 0.1, rng);
  FitConfig cfg;
  cfg.max_iters = 2;
  cfg.tol = 1e-300;
  const auto fit = fit_weights_laplace(set, target, cfg);
  EXPECT_EQ(fit.report.iterations, 2);
  EXPECT_FALSE(fit.report.converged);
  EXPECT_EQ(fit.report.nll_trace.size(), 4u);  // initial, two steps, final scale
  EXPECT_EQ(fit.mask.sigma.rows(), set.grid().height);
  EXPECT_GE(fit.mask.sigma.minCoeff(), cfg.sigma.min);
  EXPECT_LE(fit.mask.sigma.maxCoeff(), cfg.sigma.max);
  EXPECT_GT(fit.report.residual, 0.0);
}

TEST(FitLaplace, InvalidPixelsIgnored) {
  const auto& set = small_basis();
  std::mt19937_64 rng(7);
  const VecX w = random_weights(set.size(), rng);
  FlowField target = synthesize_flow(set, w);
  MaskArray valid = MaskArray::Constant(set.grid().height, set.grid().width, true);
  valid.block(0, 0, 10, 20) = false;
  target.u.block(0, 0, 10, 20) = 5.0;
  const auto fit = fit_weights_laplace(set, target, {}, valid);
  EXPECT_LT(rel_error(fit.w, w), 1e-6);
}

TEST(FitLaplace, NonFiniteNll) {
  const auto& set = small_basis();
  FlowField target(set.grid());
  target.u(0, 0) = 1e308;
  target.v(0, 0) = 1e308;
  EXPECT_THROW(fit_weights_laplace(set, target), NumericalError);
}

TEST(PhotometricNll, ClosedFormCases) {
  const auto a = ImageGray::constant(4, 5, 0.3);
  const MaskArray all = MaskArray::Constant(4, 5, true);
  const auto half = ConfidenceMask::uniform({4, 5}, std::sqrt(0.5));
  EXPECT_NEAR(photometric_nll(a, a, half, all), 0.0, 1e-15);
  EXPECT_NEAR(photometric_nll(ImageGray::constant(4, 5, 0.0), ImageGray::constant(4, 5, 1.0), half, all),
              2.0, 1e-14);
  // Identical images: only the log term of sigma remains.
  const auto wide = ConfidenceMask::uniform({4, 5}, 2.0);
  EXPECT_NEAR(photometric_nll(a, a, wide, all), std::log(std::sqrt(8.0)), 1e-15);
}

TEST(PhotometricNll, Errors) {
  const auto a = ImageGray::constant(4, 5, 0.3);
  const auto m = ConfidenceMask::uniform({4, 5}, 1.0);
  EXPECT_THROW(photometric_nll(a, ImageGray::constant(5, 4, 0.3), m, MaskArray::Constant(4, 5, true)),
               GridMismatchError);
  EXPECT_THROW(photometric_nll(a, a, m, MaskArray::Constant(4, 5, false)), InputError);
}

TEST(PhotometricNll, AlignmentLowersLoss) {
  const PixelGrid g(80, 144);
  int better = 0;
  for (int i = 0; i < 100; ++i) {
    SceneSample s = build_scene(random_scene_spec(g, 1 + i % 3, false, child_seed(77, i)));
    const ImagePair pair = render_pair(s, s.spec.texture_seed);
    const auto mask = ConfidenceMask::uniform(g, 0.1);
    const WarpResult aligned = warp_backward(pair.b, s.gt_flow);
    const MaskArray valid = s.valid && aligned.valid;
    if (photometric_nll(pair.a, aligned.image, mask, valid) < photometric_nll(pair.a, pair.b, mask, valid))
      ++better;
  }
  EXPECT_EQ(better, 100);
}

TEST(HybridLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(hybrid_loss(2.0, 4.0, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(hybrid_loss(2.0, 4.0, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(hybrid_loss(2.0, 0.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(hybrid_loss(2.0, 1e-13, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(hybrid_loss(-3.0, -0.5, 2.0), -3.0 - 6.0);
}

TEST(HybridLoss, MotionTermIsScaleFree) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-5.0, 5.0), c(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    const double p = u(rng), m = u(rng), w = std::abs(u(rng)), scale = c(rng);
    const double term = hybrid_loss(p, m, w) - p;
    const double scaled = hybrid_loss(p, scale * m, w) - p;
    EXPECT_NEAR(term, scaled, 1e-12 * (1.0 + std::abs(term)));
    EXPECT_NEAR(term, w * std::abs(p) * (m > 0 ? 1.0 : -1.0), 1e-12 * (1.0 + std::abs(term)));
  }
}
