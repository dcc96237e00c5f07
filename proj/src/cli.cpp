#include "fvd/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <set>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <fmt/core.h>

#include "CLI11.hpp"
#include "fvd/config.hpp"
#include "fvd/error.hpp"
#include "fvd/png_io.hpp"

namespace fvd::cli
{
namespace fs = std::filesystem;

namespace
{

ToolConfig config_or_default(const std::string & path)
{
  return path.empty() ? ToolConfig{} : load_config(path);
}

void ensure_parent(const fs::path & file)
{
  if (file.has_parent_path()) {
    fs::create_directories(file.parent_path());
  }
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs
{
  std::string out_dir;
  int count = 50;
  std::optional<std::uint64_t> seed;
  std::string config;
};

int run_synth(const SynthArgs & a, std::ostream & out)
{
  if (a.out_dir.empty()) {
    throw ValidationError("synth: --out is required");
  }
  if (a.count < 1) {
    throw ValidationError(fmt::format("synth: --count must be >= 1, got {}", a.count));
  }
  ToolConfig cfg = config_or_default(a.config);
  if (a.seed) {
    cfg.synth.scene.seed = *a.seed;
  }
  const auto images = synth::generate_dataset(cfg.synth.scene, a.count);
  const fs::path manifest = synth::write_dataset(images, a.out_dir);
  out << fmt::format("wrote {} images to {}\n", images.size(), manifest.string());
  return 0;
}

struct MockDetectArgs
{
  std::string manifest;
  std::string out;
  std::string member;
  std::uint64_t seed = 0;
  std::string config;
};

int run_mock_detect(const MockDetectArgs & a, std::ostream & out)
{
  if (a.manifest.empty() || a.out.empty()) {
    throw ValidationError("mock-detect: --manifest and --out are required");
  }
  const ToolConfig cfg = config_or_default(a.config);
  synth::MockDetectorSpec spec;
  if (!a.member.empty()) {
    const auto members = synth::default_ensemble(a.seed);
    const auto it = std::find_if(members.begin(), members.end(),
                                 [&](const synth::MemberSpec & m) { return m.model_id == a.member; });
    if (it == members.end()) {
      throw ValidationError(
        fmt::format("mock-detect: unknown member '{}' (expected grid32, grid16 or grid8)", a.member));
    }
    spec = it->detector;
  } else {
    spec = cfg.synth.detector.value_or(synth::MockDetectorSpec{});
    spec.seed = a.seed;
  }
  const auto records = load_dataset(a.manifest);
  PredictionSet predictions;
  for (const auto & r : records) {
    predictions[r.image_id] = synth::mock_detect(r, spec);
  }
  ensure_parent(a.out);
  write_predictions(predictions, a.out);
  out << fmt::format("wrote predictions for {} images to {}\n", predictions.size(), a.out);
  return 0;
}

// ---- preproc -------------------------------------------------------------

struct PreprocArgs
{
  std::string manifest;
  std::string out_dir;
  std::string config;
};

std::string scale_suffix(double scale)
{
  std::string s = fmt::format("{:g}", scale);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

int run_preproc(const PreprocArgs & a, std::ostream & out)
{
  if (a.manifest.empty() || a.out_dir.empty()) {
    throw ValidationError("preproc: --manifest and --out are required");
  }
  const ToolConfig cfg = config_or_default(a.config);
  cfg.preproc.validate();
  const auto records = load_dataset(a.manifest);
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  std::vector<ImageRecord> written;
  for (const auto & r : records) {
    const auto img = preproc::read_png(r.path);
    const auto prepared = preproc::run_chain(img, cfg.preproc);
    const fs::path name = r.path.stem().string() + ".png";
    preproc::write_png(prepared.image, dir / name);
    write_annotations(r.annotations, label_path_for(dir / name));
    for (std::size_t i = 0; i < cfg.preproc.scales.size(); ++i) {
      if (cfg.preproc.scales[i] == 1.0) {
        continue;
      }
      preproc::write_png(prepared.scaled[i],
                         dir / fmt::format("{}_x{}.png", r.path.stem().string(),
                                           scale_suffix(cfg.preproc.scales[i])));
    }
    ImageRecord rec = r;
    rec.path = name;
    rec.width_px = prepared.image.width;
    rec.height_px = prepared.image.height;
    written.push_back(std::move(rec));
  }
  write_manifest(written, dir / "manifest.tsv");
  out << fmt::format("preprocessed {} images into {}\n", written.size(), dir.string());
  return 0;
}

// ---- fuse ----------------------------------------------------------------

struct FuseArgs
{
  std::vector<std::string> predictions;
  std::vector<int> grids = {32, 16, 8};
  std::string out;
  std::string config;
};

int run_fuse(const FuseArgs & a, std::ostream & out)
{
  if (a.predictions.empty() || a.predictions.size() > 3) {
    throw ValidationError("fuse: give one to three --predictions files");
  }
  if (a.out.empty()) {
    throw ValidationError("fuse: --out is required");
  }
  if (a.grids.size() < a.predictions.size()) {
    throw ValidationError(fmt::format("fuse: {} prediction files but only {} grid sizes",
                                      a.predictions.size(), a.grids.size()));
  }
  const ToolConfig cfg = config_or_default(a.config);
  std::vector<PredictionSet> members;
  std::set<std::string> ids;
  for (const auto & path : a.predictions) {
    members.push_back(read_predictions(path));
    for (const auto & [id, dets] : members.back()) {
      ids.insert(id);
    }
  }
  PredictionSet fused;
  for (const auto & id : ids) {
    std::vector<fusion::ModelOutput> outputs;
    for (std::size_t m = 0; m < members.size(); ++m) {
      fusion::ModelOutput mo{a.predictions[m], a.grids[m], {}};
      if (const auto it = members[m].find(id); it != members[m].end()) {
        mo.detections = it->second;
      }
      outputs.push_back(std::move(mo));
    }
    fused[id] = fusion::fuse_image(outputs, cfg.fusion);
  }
  ensure_parent(a.out);
  write_predictions(fused, a.out);
  out << fmt::format("fused {} images from {} members into {}\n", fused.size(), members.size(), a.out);
  return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs
{
  std::string predictions;
  std::string manifest;
  std::string report;
  std::vector<double> thresholds;
  bool include_unmatched = false;
  std::string config;
};

int run_eval(const EvalArgs & a, std::ostream & out)
{
  if (a.predictions.empty()) {
    throw ValidationError("eval: --predictions is required");
  }
  const PredictionSet predictions = read_predictions(a.predictions);
  if (a.manifest.empty()) {
    throw ValidationError("eval: --manifest is required");
  }
  const ToolConfig cfg = config_or_default(a.config);
  const auto gt = ground_truth_of(load_dataset(a.manifest));
  eval::EvalOptions options = cfg.eval.options;
  options.include_unmatched = options.include_unmatched || a.include_unmatched;
  const auto thresholds = a.thresholds.empty() ? cfg.eval.thresholds : a.thresholds;
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw ValidationError(fmt::format("eval: threshold must be in (0, 1], got {}", t));
    }
  }
  const auto reports = eval::threshold_sweep(predictions, gt, thresholds, options);
  out << eval::format_report_table(reports);
  if (!a.report.empty()) {
    ensure_parent(a.report);
    write_text_file(a.report, eval::format_report_json(reports));
  }
  return 0;
}

// ---- ssda ----------------------------------------------------------------

struct SsdaArgs
{
  std::string train_manifest;
  std::string test_manifest;
  std::string config;
  std::string workdir;
  std::optional<int> max_rounds;
  std::optional<double> tau;
  std::string residuals;
};

int run_ssda_command(const SsdaArgs & a, std::ostream & out, std::ostream & err)
{
  if (a.train_manifest.empty() || a.test_manifest.empty() || a.workdir.empty()) {
    throw ValidationError("ssda: --train-manifest, --test-manifest and --workdir are required");
  }
  ToolConfig cfg = config_or_default(a.config);
  if (a.max_rounds) {
    cfg.ssda.max_rounds = *a.max_rounds;
  }
  if (a.tau) {
    cfg.ssda.confidence_threshold = *a.tau;
  }
  cfg.ssda.workdir = a.workdir;

  auto dataset = load_dataset(a.train_manifest);
  const auto test_records = load_dataset(a.test_manifest);
  ImageIdSet train_ids;
  ImageIdSet test_ids;
  for (const auto & r : dataset) {
    train_ids.insert(r.image_id);
  }
  for (const auto & r : test_records) {
    test_ids.insert(r.image_id);
    dataset.push_back(r);
  }
  const DatasetPartition partition(train_ids, test_ids);
  const auto result = ssda::run_ssda(dataset, partition, cfg.ssda);

  for (const auto & log : result.logs) {
    out << fmt::format("round {}: promoted {}, train {}, test {}\n", log.round, log.promoted,
                       log.train_size, log.test_size);
    err << fmt::format("round {} took {:.3f} s\n", log.round, log.wall_time);
  }
  if (result.stopped_early) {
    out << "stopped early: last round promoted nothing\n";
  }
  const fs::path residuals =
    a.residuals.empty() ? fs::path(a.workdir) / "residuals.list" : fs::path(a.residuals);
  ssda::export_residuals(result, dataset, residuals);
  out << fmt::format("{} residual images written to {}\n", result.final_test.size(),
                     residuals.string());
  return 0;
}

// ---- loss-check ----------------------------------------------------------

struct LossCheckArgs
{
  std::uint64_t seed = 7;
  int pairs = 200;
  std::string config;
};

int run_loss_check(const LossCheckArgs & a, std::ostream & out)
{
  using namespace divergence;
  const ToolConfig cfg = config_or_default(a.config);
  const auto & quad = cfg.divergence.quadrature;
  auto rng = synth::make_stream(a.seed, "loss-check");
  boost::random::uniform_real_distribution<double> mu(-2.0, 2.0);
  boost::random::uniform_real_distribution<double> log_sigma(std::log(0.05), std::log(2.0));
  auto draw = [&] { return CoordinateGaussian<double>{mu(rng), std::exp(log_sigma(rng))}; };

  bool all = true;
  auto report = [&](const std::string & name, bool ok, double error) {
    all = all && ok;
    out << fmt::format("{:<4} {:<28} max_error={:.3e}\n", ok ? "PASS" : "FAIL", name, error);
  };

  double sym = 0.0;
  double bound = 0.0;
  double kl_gap = 0.0;
  for (int i = 0; i < a.pairs; ++i) {
    const auto p = draw();
    const auto q = draw();
    const double pq = jsd(p, q, quad);
    const double qp = jsd(q, p, quad);
    sym = std::max(sym, std::abs(pq - qp));
    bound = std::max({bound, -pq, pq - std::log(2.0)});
    kl_gap = std::max(kl_gap, std::abs(kl_closed(p, q) - kl_quadrature(p, q, quad)));
  }
  report("jsd_symmetry", sym == 0.0, sym);
  report("jsd_bounds", bound <= 1e-9, std::max(bound, 0.0));
  report("kl_closed_vs_quadrature", kl_gap < 1e-6, kl_gap);
  const double kl_unit = std::abs(kl_closed<double>({0.0, 1.0}, {1.0, 1.0}) - 0.5);
  report("kl_unit_shift", kl_unit <= 1e-9, kl_unit);

  double ce_gap = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double p = i / 1000.0;
    ce_gap = std::max(ce_gap, std::abs(focal_loss(p, FocalParams<double>{1.0, 0.0}) + std::log(p)));
  }
  report("focal_equals_cross_entropy", ce_gap <= 1e-12, ce_gap);
  const double spot = std::abs(focal_loss(0.9, FocalParams<double>{0.25, 2.0}) - 2.634e-4);
  report("focal_spot_value", spot <= 1e-7, spot);
  return all ? 0 : 2;
}

// ---- fit-demo ------------------------------------------------------------

struct FitDemoArgs
{
  std::vector<double> gt = {0.5, 0.5, 0.2, 0.3};
  std::vector<double> init = {0.45, 0.56, 0.24, 0.26};
  std::string kind;
  std::optional<int> max_steps;
  std::string config;
};

int run_fit_demo(const FitDemoArgs & a, std::ostream & out)
{
  using namespace divergence;
  ToolConfig cfg = config_or_default(a.config);
  if (a.gt.size() != 4 || a.init.size() != 4) {
    throw ValidationError("fit-demo: --gt and --init take four values cx,cy,w,h");
  }
  DivergenceKind kind = cfg.divergence.kind;
  if (!a.kind.empty()) {
    if (a.kind != "jsd" && a.kind != "kld") {
      throw ValidationError(fmt::format("fit-demo: unknown divergence '{}'", a.kind));
    }
    kind = a.kind == "jsd" ? DivergenceKind::jsd : DivergenceKind::kld;
  }
  auto fit_cfg = cfg.divergence.fit;
  if (a.max_steps) {
    fit_cfg.max_steps = *a.max_steps;
  }
  const BoundingBox gt_box = BoundingBox::checked(a.gt[0], a.gt[1], a.gt[2], a.gt[3]);
  const BoundingBox init_box = BoundingBox::checked(a.init[0], a.init[1], a.init[2], a.init[3]);
  const auto gt = gaussian_box(gt_box, cfg.divergence.sigma);
  GaussianBox<double> init_means;
  init_means.mu = init_box.as_vector();
  const auto result = fit_box(box_params(init_means, cfg.divergence.sigma.k), gt, kind, fit_cfg);
  out << format_trace(result.trace);
  out << fmt::format("{} {} after {} steps: loss {:.6e} -> {:.6e}\n", to_string(kind),
                     result.converged ? "converged" : "stopped", result.steps_used,
                     result.initial_loss, result.final_loss);
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string> & args, std::ostream & out, std::ostream & err)
{
  CLI::App app{"Fruit and vegetable detection toolkit", "fvd"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthArgs synth_args;
  auto * synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", synth_args.out_dir, "Output directory");
  synth->add_option("--count", synth_args.count, "Number of images")->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Scene seed (overrides the config)");
  synth->add_option("--config", synth_args.config, "Config file");
  synth->require_subcommand(0, 1);

  MockDetectArgs mock_args;
  auto * mock = synth->add_subcommand("mock-detect", "Write mock detector predictions");
  mock->add_option("--manifest", mock_args.manifest, "Dataset manifest");
  mock->add_option("--out", mock_args.out, "Prediction file");
  mock->add_option("--member", mock_args.member, "Preset ensemble member: grid32, grid16, grid8");
  mock->add_option("--seed", mock_args.seed, "Detector seed")->capture_default_str();
  mock->add_option("--config", mock_args.config, "Config file (synth.detector)");

  PreprocArgs preproc_args;
  auto * pre = app.add_subcommand("preproc", "Run the preprocessing chain over a dataset");
  pre->add_option("--manifest", preproc_args.manifest, "Input manifest");
  pre->add_option("--out", preproc_args.out_dir, "Output directory");
  pre->add_option("--config", preproc_args.config, "Config file");

  FuseArgs fuse_args;
  auto * fuse = app.add_subcommand("fuse", "Fuse member predictions");
  fuse->add_option("--predictions", fuse_args.predictions, "Member prediction file (repeat)");
  fuse->add_option("--grids", fuse_args.grids, "Grid size per member")->delimiter(',');
  fuse->add_option("--out", fuse_args.out, "Fused prediction file");
  fuse->add_option("--config", fuse_args.config, "Config file");

  EvalArgs eval_args;
  auto * ev = app.add_subcommand("eval", "Evaluate predictions against a manifest");
  ev->add_option("--predictions", eval_args.predictions, "Prediction file");
  ev->add_option("--manifest", eval_args.manifest, "Ground-truth manifest");
  ev->add_option("--report", eval_args.report, "JSON report output");
  ev->add_option("--thresholds", eval_args.thresholds, "IoU thresholds")->delimiter(',');
  ev->add_flag("--include-unmatched", eval_args.include_unmatched,
               "Count unmatched detections in AP");
  ev->add_option("--config", eval_args.config, "Config file");

  SsdaArgs ssda_args;
  auto * sd = app.add_subcommand("ssda", "Semi-supervised pseudo-label annotation");
  sd->add_option("--train-manifest", ssda_args.train_manifest, "Labeled images");
  sd->add_option("--test-manifest", ssda_args.test_manifest, "Unlabeled images");
  sd->add_option("--config", ssda_args.config, "Config file (ssda section)");
  sd->add_option("--workdir", ssda_args.workdir, "Working directory");
  sd->add_option("--max-rounds", ssda_args.max_rounds, "Round limit");
  sd->add_option("--tau", ssda_args.tau, "Promotion confidence threshold");
  sd->add_option("--residuals", ssda_args.residuals, "Residual manifest output");

  LossCheckArgs loss_args;
  auto * lc = app.add_subcommand("loss-check", "Check divergence and focal loss properties");
  lc->add_option("--seed", loss_args.seed)->capture_default_str();
  lc->add_option("--pairs", loss_args.pairs)->capture_default_str();
  lc->add_option("--config", loss_args.config, "Config file");

  FitDemoArgs fit_args;
  auto * fd = app.add_subcommand("fit-demo", "Fit a box by gradient descent and print the trace");
  fd->add_option("--gt", fit_args.gt, "Ground-truth box cx,cy,w,h")->delimiter(',');
  fd->add_option("--init", fit_args.init, "Initial box cx,cy,w,h")->delimiter(',');
  fd->add_option("--kind", fit_args.kind, "jsd or kld");
  fd->add_option("--max-steps", fit_args.max_steps);
  fd->add_option("--config", fit_args.config, "Config file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError & e) {
    err << "fvd: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (synth->parsed()) {
      return mock->parsed() ? run_mock_detect(mock_args, out) : run_synth(synth_args, out);
    }
    if (pre->parsed()) {
      return run_preproc(preproc_args, out);
    }
    if (fuse->parsed()) {
      return run_fuse(fuse_args, out);
    }
    if (ev->parsed()) {
      return run_eval(eval_args, out);
    }
    if (sd->parsed()) {
      return run_ssda_command(ssda_args, out, err);
    }
    if (lc->parsed()) {
      return run_loss_check(loss_args, out);
    }
    if (fd->parsed()) {
      return run_fit_demo(fit_args, out);
    }
  } catch (const RoundFailure & e) {
    err << "fvd: " << e.what() << '\n';
    if (!e.output().empty()) {
      err << "--- adapter output ---\n" << e.output();
    }
    return 2;
  } catch (const OptimizationFailure & e) {
    err << "fvd: " << e.what() << '\n' << e.trace();
    return 2;
  } catch (const InputError & e) {
    err << "fvd: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure & e) {
    err << "fvd: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error & e) {
    err << "fvd: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace fvd::cli
