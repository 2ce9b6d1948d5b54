#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "nflab/cli.hpp"
#include "nflab/error.hpp"
#include "nflab/io.hpp"
#include "nflab/rng.hpp"
#include "nflab/svg.hpp"
#include "nflab/sweep.hpp"

namespace nfl::cli {

using json = nlohmann::ordered_json;

namespace {

json optimizer_json(const OptimizerConfig& opt) {
  json j;
  j["kind"] = opt.name();
  if (opt.kind == OptimizerKind::kAdam) {
    j["beta1"] = opt.beta1;
    j["beta2"] = opt.beta2;
    j["eps"] = opt.eps;
  }
  return j;
}

json config_object(const RunManifest& m) {
  json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = m.seed;
  j["image"] = m.image;
  j["crop"] = m.crop;
  j["srgb_to_linear"] = m.srgb_to_linear;
  j["transform"] = m.transform;
  j["arch"] = ArchSpec::parse(m.arch).descriptor();
  j["optimizer"] = optimizer_json(m.optimizer);
  j["batch_size"] = m.batch_size;
  j["lr"] = m.lr;
  j["target_psnr"] = m.target_psnr;
  j["thresholds"] = m.thresholds;
  j["max_steps"] = m.max_steps;
  j["eval_every"] = m.eval_every;
  return j;
}

std::string hex12(std::uint64_t h) { return fmt::format("{:016x}", h).substr(0, 12); }

json first_hit_json(const std::map<double, std::optional<std::uint64_t>>& hits) {
  json arr = json::array();
  for (const auto& [t, step] : hits) arr.push_back(json::array({t, step ? json(*step) : json(nullptr)}));
  return arr;
}

Series psnr_series(const RunRecord& record, std::string name) {
  Series s;
  s.name = std::move(name);
  for (const auto& p : record.curve) {
    s.xs.push_back(static_cast<double>(p.step));
    s.ys.push_back(p.psnr_recon_db);
  }
  return s;
}

Series psnr_series_from_csv(const std::string& csv, std::string name) {
  Series s;
  s.name = std::move(name);
  std::size_t pos = csv.find('\n');
  while (pos != std::string::npos && pos + 1 < csv.size()) {
    const std::size_t end = csv.find('\n', pos + 1);
    const std::string line = csv.substr(pos + 1, end - pos - 1);
    pos = end;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos) continue;
    s.xs.push_back(std::stod(line.substr(0, c1)));
    s.ys.push_back(std::stod(line.substr(c2 + 1, c3 - c2 - 1)));
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string RunManifest::config_json() const { return config_object(*this).dump(2) + "\n"; }

std::string RunManifest::run_id() const { return hex12(mix64(fnv1a64(config_object(*this).dump()))); }

RunManifest RunManifest::from_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("manifest: ") + e.what());
  }
  const json& j = root.contains("config") ? root.at("config") : root;
  RunManifest m;
  try {
    m.image = j.at("image").get<std::string>();
    m.seed = j.value("seed", m.seed);
    m.crop = j.value("crop", m.crop);
    m.srgb_to_linear = j.value("srgb_to_linear", m.srgb_to_linear);
    m.transform = j.value("transform", m.transform);
    m.arch = j.value("arch", m.arch);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      const auto kind = o.is_string() ? o.get<std::string>() : o.value("kind", std::string("adam"));
      if (kind == "sgd") m.optimizer.kind = OptimizerKind::kSgd;
      else if (kind != "adam") fail(ErrorCode::kParse, "unknown optimizer: " + kind);
      if (o.is_object()) {
        m.optimizer.beta1 = o.value("beta1", m.optimizer.beta1);
        m.optimizer.beta2 = o.value("beta2", m.optimizer.beta2);
        m.optimizer.eps = o.value("eps", m.optimizer.eps);
      }
    }
    m.batch_size = j.value("batch_size", m.batch_size);
    m.lr = j.value("lr", m.lr);
    m.target_psnr = j.value("target_psnr", m.target_psnr);
    m.thresholds = j.value("thresholds", m.thresholds);
    m.max_steps = j.value("max_steps", m.max_steps);
    m.eval_every = j.value("eval_every", m.eval_every);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("manifest: ") + e.what());
  }
  return m;
}

FitResult cmd_fit(const RunManifest& manifest, const std::filesystem::path& out_root) {
  const Image original = resolve_image(manifest.image, manifest.crop, manifest.srgb_to_linear);
  RunConfig rc;
  rc.arch = ArchSpec::parse(manifest.arch);
  rc.transform = TransformSpec::parse(manifest.transform).build(original, derive_seed(manifest.seed, "transform"));
  rc.optimizer = manifest.optimizer;
  rc.batch_size = manifest.batch_size;
  rc.target_psnr = manifest.target_psnr;
  rc.thresholds = manifest.thresholds;
  rc.max_steps = manifest.max_steps;
  rc.eval_every = manifest.eval_every;
  rc.seed = manifest.seed;

  FitResult result;
  result.dir = out_root / manifest.run_id();
  result.record = train_to_target(original, rc, manifest.lr);
  const RunRecord& rec = result.record;
  const auto& dir = result.dir;

  write_file_atomic(dir / "metrics.csv", metrics_csv(rec));
  if (rc.transform.is_permutation()) write_file_atomic(dir / "permutation.txt", rc.transform.map()->serialize());
  for (const auto& ck : rec.checkpoints) save_checkpoint(dir / ("ckpt_" + ck.label + ".nfld"), rc.arch, ck.params);
  save_checkpoint(dir / "ckpt_final.nfld", rc.arch, rec.final_params);

  const FieldProblem problem(original, rc.transform, rc.arch);
  const Image recon = problem.reconstruct(rec.final_params);
  save_image(recon, dir / "reconstruction.pgm", true);
  save_image(error_map(recon, original), dir / "error_map.pgm", true);

  PlotOptions plot;
  plot.title = "PSNR of the reconstruction";
  plot.x_label = "step";
  plot.y_label = "PSNR (dB)";
  emit_svg_plot({psnr_series(rec, manifest.transform)}, plot, dir / "psnr.svg");

  json j;
  j["config"] = config_object(manifest);
  j["run_id"] = manifest.run_id();
  json res;
  res["status"] = to_string(rec.status);
  res["steps_run"] = rec.steps_run;
  res["cost_steps"] = rec.cost() ? json(*rec.cost()) : json(nullptr);
  res["best_lr"] = manifest.lr;
  res["first_hit"] = first_hit_json(rec.first_hit);
  json ckpts = json::array();
  for (const auto& ck : rec.checkpoints) ckpts.push_back({{"label", ck.label}, {"step", ck.step}});
  ckpts.push_back({{"label", "final"}, {"step", rec.steps_run}});
  res["checkpoints"] = ckpts;
  if (rc.transform.is_permutation()) res["permutation_file"] = "permutation.txt";
  j["result"] = res;
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------

std::string checkpoint_label(std::string_view text) {
  std::string s(text);
  if (s == "init" || s == "final") return s;
  if (s.size() > 2 && (s.ends_with("dB") || s.ends_with("db"))) s.resize(s.size() - 2);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return threshold_label(v);
  } catch (const std::logic_error&) {
  }
  fail(ErrorCode::kInvalidArgument, "checkpoint label must be init, final or a threshold in dB: " + std::string(text));
}

std::filesystem::path LoadedRun::checkpoint_path(std::string_view label) const {
  return dir / ("ckpt_" + checkpoint_label(label) + ".nfld");
}

std::vector<double> LoadedRun::checkpoint(std::string_view label) const {
  const auto path = checkpoint_path(label);
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kMissingCheckpoint,
         "run " + dir.string() + " has no checkpoint for threshold " + checkpoint_label(label) +
             (label == "init" || label == "final" ? "" : " (the run never reached it)"));
  }
  ArchSpec stored;
  ParamVector p = load_checkpoint(path, &stored);
  if (!(stored == arch)) fail(ErrorCode::kDimensionMismatch, "checkpoint architecture differs from the run");
  return std::move(p.values);
}

LoadedRun load_run(const std::filesystem::path& dir) {
  json cfg;
  if (std::filesystem::exists(dir / "manifest.json")) {
    cfg = json::parse(read_text(dir / "manifest.json")).at("config");
  } else if (std::filesystem::exists(dir / "cell.json")) {
    cfg = json::parse(read_text(dir / "cell.json")).at("inputs");
  } else {
    fail(ErrorCode::kIo, "not a run directory (no manifest.json or cell.json): " + dir.string());
  }
  LoadedRun run;
  run.dir = dir;
  run.arch = ArchSpec::parse(cfg.at("arch").get<std::string>());
  run.seed = cfg.at("seed").get<std::uint64_t>();
  run.original = resolve_image(cfg.at("image").get<std::string>(), cfg.value("crop", 0), cfg.value("srgb_to_linear", false));
  const TransformSpec spec = TransformSpec::parse(cfg.at("transform").get<std::string>());
  if (std::filesystem::exists(dir / "permutation.txt") &&
      (spec.kind == TransformKind::kRandomPermutation || spec.kind == TransformKind::kSpiralPermutation ||
       spec.kind == TransformKind::kZigzagPermutation)) {
    run.transform = Transform::permutation(spec.kind, PermutationMap::parse(read_text(dir / "permutation.txt")));
  } else {
    run.transform = spec.build(run.original, derive_seed(run.seed, "transform"));
  }
  return run;
}

// ---------------------------------------------------------------------------

BarrierReport cmd_barrier(const LoadedRun& run, std::string_view from, std::string_view to, int samples,
                          const std::filesystem::path& out_dir) {
  BarrierReport rep;
  rep.from = checkpoint_label(from);
  rep.to = checkpoint_label(to);
  const auto a = run.checkpoint(from);
  const auto b = run.checkpoint(to);
  rep.barrier = loss_barrier(run.arch, run.target(), a, b, samples);

  std::string csv = "t,loss,psnr_db\n";
  for (std::size_t i = 0; i < rep.barrier.ts.size(); ++i) {
    csv += format_double(rep.barrier.ts[i]) + ',' + format_double(rep.barrier.losses[i]) + ',' +
           format_double(psnr(rep.barrier.losses[i])) + '\n';
  }
  write_file_atomic(out_dir / "barrier.csv", csv);
  json summary;
  summary["from"] = rep.from;
  summary["to"] = rep.to;
  summary["samples"] = samples;
  summary["max_loss"] = rep.barrier.max_loss;
  summary["min_psnr_db"] = rep.barrier.min_psnr_db;
  summary["argmax_t"] = rep.barrier.argmax_t;
  write_file_atomic(out_dir / "barrier.json", summary.dump(2) + "\n");

  Series s{"PSNR", rep.barrier.ts, {}};
  for (double l : rep.barrier.losses) s.ys.push_back(psnr(l));
  PlotOptions plot;
  plot.title = "Linear path " + rep.from + " to " + rep.to;
  plot.x_label = "t";
  plot.y_label = "PSNR (dB)";
  emit_svg_plot({s}, plot, out_dir / "barrier.svg");
  return rep;
}

LandscapeSlice cmd_landscape(const LoadedRun& run, std::string_view from, std::string_view to, DirectionMode mode,
                             const GridSpec& grid, const HessianOptions& hessian, const std::filesystem::path& out_dir) {
  const auto a = run.checkpoint(from);
  const auto b = run.checkpoint(to);
  LandscapeSlice slice =
      landscape_slice(run.arch, run.target(), a, b, mode, grid, derive_seed(run.seed, "landscape"), Kernel::kParallel, hessian);

  std::string csv = "alpha,beta,loss,psnr_db\n";
  for (int j = 0; j < grid.beta_samples; ++j) {
    for (int i = 0; i < grid.alpha_samples; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * grid.alpha_samples + i;
      csv += format_double(grid.alpha(i)) + ',' + format_double(grid.beta(j)) + ',' + format_double(slice.loss[k]) +
             ',' + format_double(slice.psnr_db[k]) + '\n';
    }
  }
  write_file_atomic(out_dir / "landscape.csv", csv);

  Heatmap map;
  map.rows = grid.beta_samples;
  map.cols = grid.alpha_samples;
  map.values = slice.psnr_db;
  map.x_min = grid.alpha_min;
  map.x_max = grid.alpha_max;
  map.y_min = grid.beta_min;
  map.y_max = grid.beta_max;
  PlotOptions plot;
  plot.title = fmt::format("PSNR landscape, {} to {} ({} axis)", checkpoint_label(from), checkpoint_label(to),
                           mode == DirectionMode::kEigen ? "Hessian" : "random");
  plot.x_label = "alpha";
  plot.y_label = "beta";
  emit_svg_plot(map, plot, out_dir / "landscape.svg");
  return slice;
}

std::vector<VarianceRow> cmd_variance(const LoadedRun& run, const std::vector<std::string>& labels,
                                      const std::filesystem::path& out_dir) {
  const FieldProblem problem(run.original, run.transform, run.arch);
  std::vector<VarianceRow> rows;
  std::string csv = "checkpoint,psnr_db,variance\n";
  for (const auto& label : labels) {
    const auto params = run.checkpoint(label);
    const Image recon = problem.reconstruct(params);
    VarianceRow row{checkpoint_label(label), psnr(mse(recon, run.original)),
                    pixel_loss_variance(recon.pixels, run.original.pixels)};
    csv += row.label + ',' + format_double(row.psnr_db) + ',' + format_double(row.variance) + '\n';
    rows.push_back(row);
  }
  write_file_atomic(out_dir / "variance.csv", csv);
  return rows;
}

BinsReport cmd_bins(const LoadedRun& run, std::string_view label, int n_bins, const std::filesystem::path& out_dir) {
  const FieldProblem problem(run.original, run.transform, run.arch);
  const Image recon = problem.reconstruct(run.checkpoint(label));
  BinsReport rep;
  rep.profile = intensity_bins(recon.pixels, run.original.pixels, n_bins);
  std::vector<double> idx, loss;
  std::string csv = "bin,lo,hi,count,mean_loss\n";
  for (int b = 0; b < n_bins; ++b) {
    csv += fmt::format("{},{},{},{},{}\n", b, format_double(static_cast<double>(b) / n_bins),
                       format_double(static_cast<double>(b + 1) / n_bins), rep.profile.count[b],
                       rep.profile.empty(b) ? "" : format_double(rep.profile.mean_loss[b]));
    if (!rep.profile.empty(b)) {
      idx.push_back(b);
      loss.push_back(rep.profile.mean_loss[b]);
    }
  }
  rep.spearman = idx.size() >= 2 ? spearman(idx, loss) : 0.0;
  write_file_atomic(out_dir / "bins.csv", csv);
  if (!idx.empty()) {
    PlotOptions plot;
    plot.title = "Mean squared error per intensity bin";
    plot.x_label = "bin";
    plot.y_label = "MSE";
    emit_svg_plot({Series{"mse", idx, loss}}, plot, out_dir / "bins.svg");
  }
  return rep;
}

DctReport cmd_dct(const std::vector<std::string>& images, std::string_view transform, std::uint64_t seed, int crop,
                  const std::filesystem::path& out_dir) {
  if (images.empty()) fail(ErrorCode::kInvalidArgument, "dct needs at least one image");
  const TransformSpec spec = TransformSpec::parse(transform);
  std::vector<Image> signals;
  DctReport rep;
  std::string csv = "image,hf_intensity\n";
  for (const auto& src : images) {
    const Image original = resolve_image(src, crop);
    const Image img = spec.build(original, derive_seed(seed, src + "|transform")).apply(original);
    rep.hf.push_back(hf_intensity(img));
    csv += csv_field(src) + ',' + format_double(rep.hf.back()) + '\n';
    signals.push_back(img);
  }
  write_file_atomic(out_dir / "dct_hf.csv", csv);
  rep.map = avg_dct_map(signals);
  rep.low_frequency_ratio = low_frequency_ratio(rep.map.mean_abs);

  std::string matrix;
  for (int r = 0; r < rep.map.display.height; ++r) {
    for (int c = 0; c < rep.map.display.width; ++c) {
      if (c) matrix += ',';
      matrix += format_double(rep.map.display.at(r, c));
    }
    matrix += '\n';
  }
  write_file_atomic(out_dir / "dct_map.csv", matrix);

  // Heatmap rows are drawn bottom-up; flip so the DC term sits top-left.
  Heatmap map;
  map.rows = rep.map.display.height;
  map.cols = rep.map.display.width;
  for (int r = map.rows - 1; r >= 0; --r) {
    for (int c = 0; c < map.cols; ++c) map.values.push_back(rep.map.display.at(r, c));
  }
  map.x_max = map.cols;
  map.y_max = map.rows;
  PlotOptions plot;
  plot.title = fmt::format("Mean |DCT| ^ {} ({})", kDisplayPower, spec.name());
  plot.width = 520;
  plot.height = 520;
  emit_svg_plot(map, plot, out_dir / "dct_map.svg");
  return rep;
}

std::vector<std::filesystem::path> cmd_gen_data(int count, int size, double exponent, std::uint64_t seed,
                                                const std::filesystem::path& out_dir) {
  if (count < 1) fail(ErrorCode::kInvalidArgument, "count must be >= 1");
  std::vector<std::filesystem::path> paths;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const auto path = out_dir / fmt::format("synth_{}.pgm", i);
    save_image(gen_synthetic(s, size, size, exponent), path, true);
    paths.push_back(path);
  }
  return paths;
}

// ---------------------------------------------------------------------------

std::string cmd_report(const std::filesystem::path& source, const std::filesystem::path& out_dir) {
  std::string md;
  PlotOptions plot;
  plot.x_label = "step";
  plot.y_label = "PSNR (dB)";
  plot.log_x = true;

  if (std::filesystem::exists(source / "study.json")) {
    const StudyConfig config = StudyConfig::from_json(read_text(source / "study.json"));
    const auto csv = read_text(source / "study.csv");
    md += "# Study report\n\n";
    md += "Source: `" + source.string() + "`\n\n";
    md += "## Acceleration (cost with identity / cost with transform)\n\n";
    md += "| transform | arch | batch | mean | median | count | excluded |\n|---|---|---|---|---|---|---|\n";
    const auto summary = read_text(source / "summary.csv");
    std::size_t pos = summary.find('\n');
    while (pos != std::string::npos && pos + 1 < summary.size()) {
      const std::size_t end = summary.find('\n', pos + 1);
      std::string line = summary.substr(pos + 1, end - pos - 1);
      pos = end;
      // Fields may be quoted (arch descriptors contain commas).
      std::vector<std::string> fields;
      std::string cur;
      bool quoted = false;
      for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
          if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
            cur += '"';
            ++i;
          } else if (ch == '"') {
            quoted = false;
          } else {
            cur += ch;
          }
        } else if (ch == '"') {
          quoted = true;
        } else if (ch == ',') {
          fields.push_back(cur);
          cur.clear();
        } else {
          cur += ch;
        }
      }
      fields.push_back(cur);
      md += "|";
      for (const auto& f : fields) md += " " + (f.empty() ? std::string("-") : f) + " |";
      md += "\n";
    }
    md += "\n## Cells\n\n```\n" + csv + "```\n";

    // One PSNR-curve plot per image: best run of every transform.
    for (std::size_t i = 0; i < config.images.size(); ++i) {
      std::vector<Series> series;
      for (const auto& entry : std::filesystem::directory_iterator(source / "cells")) {
        const auto cell_json = entry.path() / "cell.json";
        const auto metrics = entry.path() / "metrics.csv";
        if (!std::filesystem::exists(cell_json) || !std::filesystem::exists(metrics)) continue;
        const json j = json::parse(read_text(cell_json));
        if (j.at("inputs").at("image") != config.images[i]) continue;
        series.push_back(psnr_series_from_csv(read_text(metrics), j.at("inputs").at("transform").get<std::string>() +
                                                                      " " + j.at("inputs").at("arch").get<std::string>() +
                                                                      " b=" + batch_label(j.at("inputs").at("batch").get<std::size_t>())));
      }
      if (series.empty()) continue;
      std::sort(series.begin(), series.end(), [](const Series& a, const Series& b) { return a.name < b.name; });
      plot.title = config.images[i];
      const auto name = fmt::format("psnr_image{}.svg", i);
      emit_svg_plot(series, plot, out_dir / name);
      md += fmt::format("\n![{}]({})\n", config.images[i], name);
    }
  } else if (std::filesystem::exists(source / "manifest.json")) {
    const json j = json::parse(read_text(source / "manifest.json"));
    const auto& res = j.at("result");
    md += "# Run report\n\n";
    md += "Source: `" + source.string() + "`\n\n";
    md += "| key | value |\n|---|---|\n";
    for (const auto& [k, v] : j.at("config").items()) md += "| " + k + " | " + (v.is_string() ? v.get<std::string>() : v.dump()) + " |\n";
    md += "| status | " + res.at("status").get<std::string>() + " |\n";
    md += "| cost_steps | " + (res.at("cost_steps").is_null() ? std::string("DNF") : res.at("cost_steps").dump()) + " |\n";
    md += "\n| threshold (dB) | first hit |\n|---|---|\n";
    for (const auto& pair : res.at("first_hit")) {
      md += "| " + pair.at(0).dump() + " | " + (pair.at(1).is_null() ? std::string("DNF") : pair.at(1).dump()) + " |\n";
    }
    plot.title = j.at("config").at("transform").get<std::string>();
    emit_svg_plot({psnr_series_from_csv(read_text(source / "metrics.csv"), plot.title)}, plot, out_dir / "psnr_log.svg");
    md += "\n![PSNR](psnr_log.svg)\n";
  } else {
    fail(ErrorCode::kIo, "report source is neither a study nor a run directory: " + source.string());
  }
  write_file_atomic(out_dir / "report.md", md);
  return md;
}

}  // namespace nfl::cli
