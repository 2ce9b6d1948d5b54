#include <fmt/format.h>

#include <cmath>
#include <iostream>

#include "CLI11.hpp"
#include "nflab/cli.hpp"
#include "nflab/error.hpp"
#include "nflab/io.hpp"
#include "nflab/sweep.hpp"

namespace nfl::cli {

namespace {

OptimizerConfig parse_optimizer(const std::string& name) {
  OptimizerConfig opt;
  if (name == "sgd") opt.kind = OptimizerKind::kSgd;
  else if (name != "adam") fail(ErrorCode::kInvalidArgument, "optimizer must be adam or sgd: " + name);
  return opt;
}

std::size_t parse_batch(const std::string& text) {
  if (text == "full" || text == "0") return 0;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used == text.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
  }
  fail(ErrorCode::kInvalidArgument, "batch must be a positive integer or 'full': " + text);
}

std::string fmt_opt(const std::optional<double>& v, const char* missing = "-") {
  return v ? fmt::format("{:.4g}", *v) : std::string(missing);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"nflab: neural-field training laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::uint64_t seed = 0;
  std::string out = "runs";
  int workers = 1;
  app.add_option("--seed", seed, "Global seed")->capture_default_str();
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--workers", workers, "Worker threads for sweeps")->check(CLI::PositiveNumber)->capture_default_str();
  app.fallthrough();

  // fit
  auto* fit = app.add_subcommand("fit", "Train one configuration to the target PSNR");
  RunManifest m;
  std::string manifest_path, batch = "full", optimizer = "adam";
  fit->add_option("--manifest", manifest_path, "Re-run from a manifest.json (other flags ignored)");
  fit->add_option("--image", m.image, "Image path or synth:seed=,size=,exp=");
  fit->add_option("--transform", m.transform, "identity|inversion|standardize|scale:t|center:t|gamma:g|rpp[:seed]|zigzag|spiral")
      ->capture_default_str();
  fit->add_option("--arch", m.arch, "siren-small|siren-paper|pe-small|hash-small or a descriptor")->capture_default_str();
  fit->add_option("--lr", m.lr, "Learning rate")->capture_default_str();
  fit->add_option("--batch", batch, "Pixels per step or 'full'")->capture_default_str();
  fit->add_option("--optimizer", optimizer, "adam|sgd")->capture_default_str();
  fit->add_option("--target", m.target_psnr, "Target PSNR (dB)")->capture_default_str();
  fit->add_option("--thresholds", m.thresholds, "PSNR checkpoints (dB)")->delimiter(',');
  fit->add_option("--max-steps", m.max_steps, "Step cap")->capture_default_str();
  fit->add_option("--eval-every", m.eval_every, "Steps between evaluations")->capture_default_str();
  fit->add_option("--crop", m.crop, "Center-crop side (0: largest square)")->capture_default_str();
  fit->add_flag("--srgb", m.srgb_to_linear, "Linearize sRGB input");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a study manifest (lr grid per cell)");
  std::string study_path;
  sweep->add_option("--manifest", study_path, "Study JSON")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Post-hoc analyses");
  analyze->require_subcommand(1);
  std::string run_dir, from = "init", to = "40", mode = "random", at = "final", transform = "identity";
  int samples = 101, bins = 16, crop = 0;
  std::vector<std::string> images, labels = {"20", "30"};
  GridSpec grid;
  HessianOptions hessian;

  auto* dct = analyze->add_subcommand("dct", "High-frequency intensity and averaged DCT map");
  dct->add_option("--images", images, "Image paths or synth specs")->required();
  dct->add_option("--transform", transform, "Transform applied before the DCT")->capture_default_str();
  dct->add_option("--crop", crop, "Center-crop side (0: largest square)");

  auto* barrier = analyze->add_subcommand("barrier", "Loss barrier on the linear path between checkpoints");
  barrier->add_option("--run", run_dir, "Run directory")->required();
  barrier->add_option("--from", from, "Checkpoint label")->capture_default_str();
  barrier->add_option("--to", to, "Checkpoint label")->capture_default_str();
  barrier->add_option("--samples", samples, "Points on the path")->capture_default_str();

  auto* landscape = analyze->add_subcommand("landscape", "2D loss slice through two checkpoints");
  landscape->add_option("--run", run_dir, "Run directory")->required();
  landscape->add_option("--from", from, "Anchor checkpoint")->capture_default_str();
  landscape->add_option("--to", to, "Second checkpoint")->capture_default_str();
  landscape->add_option("--mode", mode, "random|eigen")->check(CLI::IsMember({"random", "eigen"}))->capture_default_str();
  landscape->add_option("--alpha-samples", grid.alpha_samples)->capture_default_str();
  landscape->add_option("--beta-samples", grid.beta_samples)->capture_default_str();
  landscape->add_option("--alpha-min", grid.alpha_min)->capture_default_str();
  landscape->add_option("--alpha-max", grid.alpha_max)->capture_default_str();
  landscape->add_option("--beta-min", grid.beta_min)->capture_default_str();
  landscape->add_option("--beta-max", grid.beta_max)->capture_default_str();
  landscape->add_option("--hessian-iters", hessian.iters)->capture_default_str();
  landscape->add_option("--hessian-tol", hessian.tol)->capture_default_str();

  auto* variance = analyze->add_subcommand("variance", "Pixel-loss variance at checkpoints");
  variance->add_option("--run", run_dir, "Run directory")->required();
  variance->add_option("--at", labels, "Checkpoint labels")->capture_default_str();

  auto* bin = analyze->add_subcommand("bins", "Mean loss per intensity bin");
  bin->add_option("--run", run_dir, "Run directory")->required();
  bin->add_option("--at", at, "Checkpoint label")->capture_default_str();
  bin->add_option("--bins", bins, "Bin count")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Markdown summary and PSNR plots of a study or run");
  std::string source;
  report->add_option("source", source, "Study or run directory")->required();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write synthetic 1/f images as PGM");
  int count = 5, size = 128;
  double exponent = 1.0;
  gen->add_option("--count", count)->capture_default_str();
  gen->add_option("--size", size)->capture_default_str();
  gen->add_option("--exp", exponent, "Spectral exponent")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const std::filesystem::path out_dir(out);
    if (fit->parsed()) {
      RunManifest run;
      if (!manifest_path.empty()) {
        run = RunManifest::from_json(read_text(manifest_path));
      } else {
        if (m.image.empty()) fail(ErrorCode::kInvalidArgument, "fit needs --image or --manifest");
        run = m;
        run.seed = seed;
        run.batch_size = parse_batch(batch);
        run.optimizer = parse_optimizer(optimizer);
      }
      const FitResult r = cmd_fit(run, out_dir);
      const auto cost = r.record.cost();
      fmt::print("run {}\nstatus {}\ncost_steps {}\n", r.dir.string(), to_string(r.record.status),
                 cost ? std::to_string(*cost) : "DNF");
      for (const auto& [t, step] : r.record.first_hit) {
        fmt::print("  {} dB: {}\n", format_double(t), step ? std::to_string(*step) : "DNF");
      }
    } else if (sweep->parsed()) {
      StudyConfig config = StudyConfig::from_json(read_text(study_path));
      if (app.get_option("--seed")->count() > 0) config.seed = seed;
      StudyOptions opts;
      opts.workers = workers;
      opts.on_cell = [](const CellResult& c) {
        fmt::print(stderr, "cell {} {} {} b={}: {} cost {}\n", c.image, c.transform, c.arch, batch_label(c.batch_size),
                   c.status, c.cost ? std::to_string(*c.cost) : "DNF");
      };
      const StudyResult r = run_study(config, out_dir, opts);
      std::size_t errors = 0;
      for (const auto& c : r.cells) errors += c.status == "error";
      fmt::print("study {} ({} cells, {} new runs, {} errors)\n\n", out_dir.string(), r.cells.size(), r.runs_executed,
                 errors);
      fmt::print("{:<14} {:<44} {:>6} {:>8} {:>8} {:>6} {:>8}\n", "transform", "arch", "batch", "mean", "median", "n",
                 "excluded");
      std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<std::optional<double>>> groups;
      for (const auto& c : r.cells) groups[{c.key.transform, c.key.arch, c.key.batch}].push_back(c.acceleration);
      for (const auto& [k, factors] : groups) {
        const auto& [t, a, b] = k;
        const Aggregate agg = aggregate(factors);
        fmt::print("{:<14} {:<44} {:>6} {:>8} {:>8} {:>6} {:>8}\n", TransformSpec::parse(config.transforms[t]).name(),
                   ArchSpec::parse(config.archs[a]).descriptor(), batch_label(config.batch_sizes[b]), fmt_opt(agg.mean),
                   fmt_opt(median(factors)), agg.count, agg.excluded);
      }
      return errors == 0 ? 0 : 3;
    } else if (analyze->parsed()) {
      if (dct->parsed()) {
        const DctReport r = cmd_dct(images, transform, seed, crop, out_dir);
        for (std::size_t i = 0; i < images.size(); ++i) fmt::print("{}\t{}\n", images[i], format_double(r.hf[i]));
        fmt::print("low_frequency_ratio {}\n", format_double(r.low_frequency_ratio));
      } else if (barrier->parsed()) {
        const BarrierReport r = cmd_barrier(load_run(run_dir), from, to, samples, out_dir);
        fmt::print("barrier {} -> {}: max_loss {} min_psnr_db {} at t={}\n", r.from, r.to,
                   format_double(r.barrier.max_loss), format_double(r.barrier.min_psnr_db),
                   format_double(r.barrier.argmax_t));
      } else if (landscape->parsed()) {
        const LandscapeSlice s = cmd_landscape(load_run(run_dir), from, to,
                                               mode == "eigen" ? DirectionMode::kEigen : DirectionMode::kRandom, grid,
                                               hessian, out_dir);
        fmt::print("landscape {}x{} written to {}\n", s.grid.alpha_samples, s.grid.beta_samples,
                   (out_dir / "landscape.csv").string());
      } else if (variance->parsed()) {
        for (const auto& row : cmd_variance(load_run(run_dir), labels, out_dir)) {
          fmt::print("{}\tpsnr {}\tvariance {}\n", row.label, format_double(row.psnr_db), format_double(row.variance));
        }
      } else if (bin->parsed()) {
        const BinsReport r = cmd_bins(load_run(run_dir), at, bins, out_dir);
        for (int b = 0; b < bins; ++b) {
          fmt::print("{}\t{}\t{}\n", b, r.profile.count[b],
                     r.profile.empty(b) ? std::string("empty") : format_double(r.profile.mean_loss[b]));
        }
        fmt::print("spearman {}\n", format_double(r.spearman));
      }
    } else if (report->parsed()) {
      fmt::print("{}", cmd_report(source, out_dir));
    } else if (gen->parsed()) {
      for (const auto& p : cmd_gen_data(count, size, exponent, seed, out_dir)) fmt::print("{}\n", p.string());
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace nfl::cli
