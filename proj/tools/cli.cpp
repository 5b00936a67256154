#include "camflow/cli.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <vector>

#include <CLI11.hpp>

#include "camflow/basis.hpp"
#include "camflow/checksum.hpp"
#include "camflow/evaluation.hpp"
#include "camflow/flo_io.hpp"
#include "camflow/robustfit.hpp"
#include "camflow/serialization.hpp"
#include "camflow/synth.hpp"

#ifndef CAMFLOW_VERSION
#define CAMFLOW_VERSION "0.0.0"
#endif

namespace camflow::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Collects what a run read and wrote so the manifest can checksum them.
struct RunRecord {
  std::string command;
  json config = json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  json summary;

  void input(const fs::path& p) { inputs.push_back(p); }
  void output(const fs::path& p) { outputs.push_back(p); }
};

json checksum_list(const std::vector<fs::path>& paths) {
  json out = json::array();
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file()) {
          out.push_back({{"path", entry.path().string()}, {"sha256", sha256_file(entry.path())}});
        }
      }
    } else {
      out.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    }
  }
  return out;
}

void write_manifest(const RunRecord& run, const fs::path& dir, double seconds) {
  json m = {{"command", run.command},
            {"config", run.config},
            {"inputs", checksum_list(run.inputs)},
            {"outputs", checksum_list(run.outputs)},
            {"tool_version", CAMFLOW_VERSION},
            {"wall_time_s", seconds}};
  write_json_file(m, dir / "run_manifest.json");
}

// Options that are not part of the reproducible configuration.
bool is_meta_option(const CLI::Option* opt) {
  const std::string name = opt->get_name(false, true);
  return name == "--help" || name == "--config" || name.empty();
}

std::string option_key(const CLI::Option* opt) {
  std::string name = opt->get_single_name();
  for (auto& ch : name) if (ch == '-') ch = '_';
  return name;
}

/// Fills options the user did not pass from a JSON object. Keys use
/// underscores or dashes; unknown keys are a usage error.
void apply_config(CLI::App* sub, const fs::path& path) {
  const json cfg = read_json_file(path);
  if (!cfg.is_object()) throw FormatError("config " + path.string() + " is not a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    for (auto& ch : flag) if (ch == '_') ch = '-';
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option(flag);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError("config " + path.string() + ": unknown key '" + key + "'");
    }
    if (is_meta_option(opt)) throw UsageError("config: key '" + key + "' is not allowed");
    if (opt->count() > 0) continue;  // command line wins
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number()) {
      text = value.dump();
    } else {
      throw FormatError("config " + path.string() + ": key '" + key + "' must be a scalar");
    }
    if (opt->get_type_size() == 0) {
      // Flags take no argument; only a true value sets them.
      if (text == "true") opt->add_result("true");
    } else {
      opt->add_result(text);
    }
    opt->run_callback();
  }
}

/// Resolved option values, in the same shape apply_config accepts.
json resolved_config(const CLI::App* sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (is_meta_option(opt)) continue;
    if (opt->get_type_size() == 0) {
      out[option_key(opt)] = opt->count() > 0;
    } else if (opt->count() > 0) {
      out[option_key(opt)] = opt->as<std::string>();
    } else if (!opt->get_default_str().empty()) {
      out[option_key(opt)] = opt->get_default_str();
    }
  }
  return out;
}

MaskArray load_mask(const fs::path& path, const PixelGrid& grid, RunRecord& run) {
  MaskArray m = read_mask_pgm(path);
  run.input(path);
  if (m.rows() != grid.height || m.cols() != grid.width) {
    throw GridMismatchError("mask " + path.string() + " is " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", expected " + to_string(grid));
  }
  return m;
}

ArrayXXd pixel_error(const FlowField& a, const FlowField& b) {
  const auto& g = a.grid;
  return (((a.u - b.u) * g.scale_x()).square() + ((a.v - b.v) * g.scale_y()).square()).sqrt();
}

std::vector<double> to_vector(const VecX& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------- gen-bases

struct GenBasesArgs {
  int n = 24, height = 80, width = 144, samples = 512;
  std::uint64_t seed = 0;
  double gaussian_scale = 1.0;
  std::string out = "bundle";
};

void run_gen_bases(const GenBasesArgs& a, RunRecord& run) {
  BasisSpec spec;
  spec.grid = PixelGrid(a.height, a.width);
  spec.n = a.n;
  spec.num_random_samples = a.samples;
  spec.seed = a.seed;
  spec.gaussian_scale = a.gaussian_scale;
  const BasisSet set = hybrid_basis(spec);
  save_bundle(set, a.out);
  run.output(a.out);
  run.summary = {{"bases", set.size()}, {"grid", to_string(set.grid())}};
}

// ---------------------------------------------------------------------- fit

struct FitArgs {
  std::string bundle, flow, valid, fit_config, out = "fit";
  std::string method = "laplace";
  int max_iters = 50;
  double tol = 1e-8, irls_delta = 1e-6;
};

void run_fit(const FitArgs& a, const CLI::App* sub, RunRecord& run) {
  // Checked here rather than by CLI11 so --config can supply them.
  if (a.bundle.empty() || a.flow.empty()) throw UsageError("fit: --bundle and --flow are required");
  const BasisSet set = load_bundle(a.bundle);
  run.input(fs::path(a.bundle) / "manifest.json");
  const FlowField target = read_flo(a.flow);
  run.input(a.flow);
  if (!(target.grid == set.grid())) {
    throw GridMismatchError("fit: flow grid " + to_string(target.grid) + " does not match bundle grid " +
                            to_string(set.grid()));
  }
  OptionalMask valid;
  if (!a.valid.empty()) valid = load_mask(a.valid, target.grid, run);

  FitConfig cfg;
  if (!a.fit_config.empty()) {
    cfg = read_json_file(a.fit_config).get<FitConfig>();
    run.input(a.fit_config);
  }
  if (sub->count("--max-iters")) cfg.max_iters = a.max_iters;
  if (sub->count("--tol")) cfg.tol = a.tol;
  if (sub->count("--irls-delta")) cfg.irls_delta = a.irls_delta;
  cfg.validate();

  fs::create_directories(a.out);
  const fs::path out(a.out);
  WeightVector w;
  FitReport report;
  if (a.method == "laplace") {
    LaplaceFit fit = fit_weights_laplace(set, target, cfg, valid);
    w = fit.w;
    report = fit.report;
    write_pgm(magnitude_heatmap(fit.mask.sigma), out / "sigma.pgm");
    run.output(out / "sigma.pgm");
  } else {
    L2Fit fit = fit_weights_l2(set, target, valid);
    w = fit.w;
    report = fit.report;
  }
  const FlowField fitted = synthesize_flow(set, w);
  write_json_file({{"method", a.method}, {"weights", to_vector(w)}}, out / "weights.json");
  write_json_file(json{{"config", cfg}, {"report", report}}, out / "fit_report.json");
  write_flo(fitted, out / "fitted.flo");
  write_pgm(magnitude_heatmap(pixel_error(fitted, target)), out / "error_heatmap.pgm");
  for (const char* f : {"weights.json", "fit_report.json", "fitted.flo", "error_heatmap.pgm"}) {
    run.output(out / f);
  }
  run.summary = {{"iterations", report.iterations}, {"residual", report.residual}};
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred, gt, valid, img_a, img_b, pairs, homography, out = "eval";
  int height = 0, width = 0;
};

void run_eval(const EvalArgs& a, RunRecord& run) {
  std::vector<MetricReport> metrics;
  std::optional<FlowField> pred, gt;
  if (!a.pred.empty()) {
    pred = read_flo(a.pred);
    run.input(a.pred);
  }
  if (!a.gt.empty()) {
    gt = read_flo(a.gt);
    run.input(a.gt);
  }
  std::optional<PixelGrid> grid;
  if (pred) grid = pred->grid;
  else if (gt) grid = gt->grid;
  else if (a.height > 0 && a.width > 0) grid = PixelGrid(a.height, a.width);

  OptionalMask valid;
  if (!a.valid.empty()) {
    if (!grid) throw UsageError("eval: --valid needs a flow or --height/--width");
    valid = load_mask(a.valid, *grid, run);
  }

  fs::create_directories(a.out);
  const fs::path out(a.out);
  if (pred && gt) {
    metrics.push_back(epe(*pred, *gt, valid));
    write_pgm(magnitude_heatmap(pixel_error(*pred, *gt)), out / "error_heatmap.pgm");
    run.output(out / "error_heatmap.pgm");
  }
  if (!a.img_a.empty() || !a.img_b.empty()) {
    if (a.img_a.empty() || a.img_b.empty()) throw UsageError("eval: --img-a and --img-b go together");
    const ImageGray ia = read_pgm(a.img_a), ib = read_pgm(a.img_b);
    run.input(a.img_a);
    run.input(a.img_b);
    if (pred) {
      // Align b onto a with the predicted motion before comparing.
      const WarpResult warped = warp_backward(ib, *pred);
      MaskArray m = warped.valid;
      if (valid) m = m && *valid;
      metrics.push_back(psnr(ia, warped.image, m));
      metrics.push_back(ssim(ia, warped.image, m));
    } else {
      metrics.push_back(psnr(ia, ib, valid));
      metrics.push_back(ssim(ia, ib, valid));
    }
  }
  if (!a.pairs.empty()) {
    const PointPairs pairs = read_json_file(a.pairs).get<PointPairs>();
    run.input(a.pairs);
    if (!a.homography.empty()) {
      if (!grid) throw UsageError("eval: PME with --homography needs --height/--width");
      const Homography H = read_json_file(a.homography).get<Homography>();
      run.input(a.homography);
      metrics.push_back(pme(H, pairs, *grid));
    } else if (pred) {
      metrics.push_back(pme(*pred, pairs));
    } else {
      throw UsageError("eval: --pairs needs --homography or --pred");
    }
  }
  if (metrics.empty()) throw UsageError("eval: nothing to evaluate");

  json report = {{"metrics", metrics}};
  write_json_file(report, out / "metrics.json");
  run.output(out / "metrics.json");
  run.summary = report;
}

// -------------------------------------------------------------- nonlin-demo

struct NonlinArgs {
  std::uint64_t seed = 0;
  int height = 80, width = 144, samples = 64;
  std::string out = ".";
};

void run_nonlin(const NonlinArgs& a, RunRecord& run) {
  const PixelGrid grid(a.height, a.width);
  std::mt19937_64 rng(a.seed);
  const Homography H1 = random_homography(rng, 0.05, 0.2);
  const Homography H2 = random_homography(rng, 0.05, 0.2);
  const NonlinearityReport r = nonlinearity_gap(H1, H2, grid, a.samples, child_seed(a.seed, 1));
  json report = {{"H1", H1},
                 {"H2", H2},
                 {"samples", a.samples},
                 {"sum_fit_residual", r.sum_fit_residual},
                 {"compose_fit_residual", r.compose_fit_residual},
                 {"compose_reverse_fit_residual", r.compose_reverse_fit_residual},
                 {"ratio", r.sum_fit_residual / std::max(r.compose_fit_residual, 1e-300)},
                 {"solution_spread", r.solution_spread},
                 {"subsets", r.subsets}};
  fs::create_directories(a.out);
  const fs::path path = fs::path(a.out) / "nonlin_report.json";
  write_json_file(report, path);
  run.output(path);
  std::cout << report.dump(2) << '\n';
}

// -------------------------------------------------------------------- synth

struct SynthArgs {
  int count = 18, height = 80, width = 144;
  std::uint64_t seed = 0;
  std::string spec, out = "suite";
  bool no_render = false;
};

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03zu", i);
  return buf;
}

json suite_ranges() {
  const SceneRanges r;
  return {{"translation_levels", {0.04, 0.08, 0.12}},
          {"rotation_levels", {0.01, 0.02}},
          {"tilt", r.tilt},
          {"depth_base", {1.0, 2.0}},
          {"depth_ratio", {1.8, 3.0}},
          {"min_lateral_translation_fraction", 0.25},
          {"dynamic_motion", 0.1}};
}

void run_synth(const SynthArgs& a, RunRecord& run) {
  const fs::path out(a.out);
  fs::create_directories(out);
  if (!a.spec.empty()) {
    const SceneSpec spec = read_json_file(a.spec).get<SceneSpec>();
    run.input(a.spec);
    SceneSample s = build_scene(spec);
    if (!a.no_render) render_pair(s, spec.texture_seed);
    save_scene(s, out / "scene_000");
    run.output(out / "scene_000");
    return;
  }
  const auto suite = benchmark_suite(a.count, a.seed, PixelGrid(a.height, a.width), !a.no_render);
  json scenes = json::array();
  for (std::size_t i = 0; i < suite.size(); ++i) {
    save_scene(suite[i], out / scene_name(i));
    run.output(out / scene_name(i));
    scenes.push_back({{"dir", scene_name(i)},
                      {"seed", child_seed(a.seed, i)},
                      {"planes", suite[i].spec.planes.size()},
                      {"dynamic", !suite[i].spec.dynamic_objects.empty()}});
  }
  json manifest = {{"master_seed", a.seed}, {"ranges", suite_ranges()}, {"scenes", scenes}};
  write_json_file(manifest, out / "suite.json");
  run.output(out / "suite.json");
}

// -------------------------------------------------------------------- bench

struct BenchArgs {
  int count = 18, n = 24, samples = 512, height = 80, width = 144;
  std::uint64_t seed = 0, basis_seed = 0;
  std::string bundle, out = "bench";
};

struct SceneResult {
  double epe_laplace = 0, epe_12 = 0, epe_8 = 0, epe_dlt = 0, psnr = 0, ssim = 0;
  int iterations = 0;
};

double mean_epe(const BasisSet& set, const SceneSample& s, const FitConfig& cfg) {
  const LaplaceFit fit = fit_weights_laplace(set, s.gt_flow, cfg, s.valid);
  return epe(synthesize_flow(set, fit.w), s.gt_flow, s.valid).value;
}

void run_bench(const BenchArgs& a, RunRecord& run) {
  BasisSet set;
  if (!a.bundle.empty()) {
    set = load_bundle(a.bundle);
    run.input(fs::path(a.bundle) / "manifest.json");
  } else {
    BasisSpec spec;
    spec.grid = PixelGrid(a.height, a.width);
    spec.n = a.n;
    spec.num_random_samples = a.samples;
    spec.seed = a.basis_seed;
    set = hybrid_basis(spec);
  }
  std::vector<int> first12(kPhysicalBasisCount);
  for (int i = 0; i < kPhysicalBasisCount; ++i) first12[i] = i;
  const BasisSet set12 = set.subset(first12);
  const BasisSet set8 = set.subset(bilinear_subset_indices());

  const auto suite = benchmark_suite(a.count, a.seed, set.grid(), true);
  const FitConfig cfg;
  std::vector<SceneResult> results(suite.size());
  parallel_for(suite.size(), [&](std::size_t i) {
    const SceneSample& s = suite[i];
    SceneResult& r = results[i];
    const LaplaceFit fit = fit_weights_laplace(set, s.gt_flow, cfg, s.valid);
    const FlowField fitted = synthesize_flow(set, fit.w);
    r.iterations = fit.report.iterations;
    r.epe_laplace = epe(fitted, s.gt_flow, s.valid).value;
    r.epe_12 = mean_epe(set12, s, cfg);
    r.epe_8 = mean_epe(set8, s, cfg);
    const DltResult dlt = fit_homography_to_flow(s.gt_flow, s.valid);
    r.epe_dlt = epe(flow_from_homography(dlt.H, s.gt_flow.grid), s.gt_flow, s.valid).value;
    const WarpResult warped = warp_backward(s.images->b, fitted);
    const MaskArray m = warped.valid && s.valid;
    r.psnr = psnr(s.images->a, warped.image, m).value;
    r.ssim = ssim(s.images->a, warped.image, m).value;
  });

  json scenes = json::array();
  SceneResult mean;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    scenes.push_back({{"scene", i},
                      {"planes", suite[i].spec.planes.size()},
                      {"dynamic", !suite[i].spec.dynamic_objects.empty()},
                      {"epe_laplace", r.epe_laplace},
                      {"epe_12", r.epe_12},
                      {"epe_8", r.epe_8},
                      {"epe_dlt", r.epe_dlt},
                      {"psnr", r.psnr},
                      {"ssim", r.ssim},
                      {"iterations", r.iterations}});
    mean.epe_laplace += r.epe_laplace / results.size();
    mean.epe_12 += r.epe_12 / results.size();
    mean.epe_8 += r.epe_8 / results.size();
    mean.epe_dlt += r.epe_dlt / results.size();
    mean.psnr += r.psnr / results.size();
    mean.ssim += r.ssim / results.size();
  }
  json report = {{"bases", set.size()},
                 {"scenes", scenes},
                 {"mean",
                  {{"epe_laplace", mean.epe_laplace},
                   {"epe_12", mean.epe_12},
                   {"epe_8", mean.epe_8},
                   {"epe_dlt", mean.epe_dlt},
                   {"psnr", mean.psnr},
                   {"ssim", mean.ssim}}}};
  fs::create_directories(a.out);
  write_json_file(report, fs::path(a.out) / "bench.json");
  run.output(fs::path(a.out) / "bench.json");
  run.summary = report["mean"];
  std::cout << report["mean"].dump(2) << '\n';
}

}  // namespace

int dispatch(std::span<const std::string> args) {
  CLI::App app{"camflow: hybrid motion bases, robust fitting and synthetic scenes"};
  app.set_version_flag("--version", CAMFLOW_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::map<CLI::App*, std::string> configs;
  auto config_option = [&](CLI::App* sub) {
    configs[sub];
    sub->add_option("--config", configs[sub], "JSON file of option values; flags override it");
  };

  GenBasesArgs gb;
  auto* gen = app.add_subcommand("gen-bases", "Build and save a hybrid basis bundle");
  gen->add_option("--n", gb.n, "Total number of bases (>= 12)");
  gen->add_option("--height", gb.height);
  gen->add_option("--width", gb.width);
  gen->add_option("--seed", gb.seed);
  gen->add_option("--samples", gb.samples, "Random homographies drawn for the stochastic bases");
  gen->add_option("--gaussian-scale", gb.gaussian_scale);
  gen->add_option("--out", gb.out, "Bundle directory");
  config_option(gen);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit basis weights to a target .flo");
  fit->add_option("--bundle", fa.bundle, "Basis bundle directory (required)");
  fit->add_option("--flow", fa.flow, "Target flow .flo (required)");
  fit->add_option("--valid", fa.valid, "Validity mask PGM");
  fit->add_option("--method", fa.method)->check(CLI::IsMember({"laplace", "l2"}));
  fit->add_option("--fit-config", fa.fit_config, "FitConfig JSON");
  fit->add_option("--max-iters", fa.max_iters);
  fit->add_option("--tol", fa.tol);
  fit->add_option("--irls-delta", fa.irls_delta);
  fit->add_option("--out", fa.out);
  config_option(fit);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Compute PME / EPE / PSNR / SSIM");
  ev->add_option("--pred", ea.pred, "Predicted flow .flo");
  ev->add_option("--gt", ea.gt, "Ground-truth flow .flo");
  ev->add_option("--valid", ea.valid);
  ev->add_option("--img-a", ea.img_a);
  ev->add_option("--img-b", ea.img_b);
  ev->add_option("--pairs", ea.pairs, "Point pairs JSON");
  ev->add_option("--homography", ea.homography, "Homography JSON (9 coefficients)");
  ev->add_option("--height", ea.height);
  ev->add_option("--width", ea.width);
  ev->add_option("--out", ea.out);
  config_option(ev);

  NonlinArgs na;
  auto* nl = app.add_subcommand("nonlin-demo", "Sum versus composition of two homographies");
  nl->add_option("--seed", na.seed);
  nl->add_option("--height", na.height);
  nl->add_option("--width", na.width);
  nl->add_option("--samples", na.samples);
  nl->add_option("--out", na.out);
  config_option(nl);

  SynthArgs sa;
  auto* sy = app.add_subcommand("synth", "Generate synthetic multi-plane scenes");
  sy->add_option("--count", sa.count);
  sy->add_option("--seed", sa.seed);
  sy->add_option("--spec", sa.spec, "Single SceneSpec JSON instead of a suite");
  sy->add_flag("--no-render", sa.no_render);
  sy->add_option("--height", sa.height);
  sy->add_option("--width", sa.width);
  sy->add_option("--out", sa.out);
  config_option(sy);

  BenchArgs ba;
  auto* be = app.add_subcommand("bench", "Fit and score the benchmark suite");
  be->add_option("--count", ba.count);
  be->add_option("--seed", ba.seed);
  be->add_option("--n", ba.n);
  be->add_option("--bundle", ba.bundle, "Use a saved bundle instead of generating one");
  be->add_option("--basis-seed", ba.basis_seed);
  be->add_option("--samples", ba.samples);
  be->add_option("--height", ba.height);
  be->add_option("--width", ba.width);
  be->add_option("--out", ba.out);
  config_option(be);

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());  // CLI11 consumes vectors back to front

  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunRecord run;
  run.command = sub->get_name();
  const auto start = std::chrono::steady_clock::now();
  try {
    if (!configs[sub].empty()) {
      apply_config(sub, configs[sub]);
      run.input(configs[sub]);
    }
    run.config = resolved_config(sub);
    fs::path out_dir;
    if (sub == gen) run_gen_bases(gb, run), out_dir = gb.out;
    else if (sub == fit) run_fit(fa, sub, run), out_dir = fa.out;
    else if (sub == ev) run_eval(ea, run), out_dir = ea.out;
    else if (sub == nl) run_nonlin(na, run), out_dir = na.out;
    else if (sub == sy) run_synth(sa, run), out_dir = sa.out;
    else run_bench(ba, run), out_dir = ba.out;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(run, out_dir, seconds);
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kData;
  } catch (const json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(std::span<const std::string>(args));
}

}  // namespace camflow::cli
