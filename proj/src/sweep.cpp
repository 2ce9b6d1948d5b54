#include "nflab/sweep.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "nflab/error.hpp"
#include "nflab/io.hpp"
#include "nflab/rng.hpp"

namespace nfl {

using json = nlohmann::ordered_json;

BestLr select_best(std::span<const LrOutcome> table) {
  BestLr best;
  for (const auto& row : table) {
    if (!row.steps) continue;
    if (!best.cost || *row.steps < *best.cost || (*row.steps == *best.cost && row.lr > *best.lr)) {
      best.cost = row.steps;
      best.lr = row.lr;
    }
  }
  return best;
}

SweepOutcome lr_sweep(const Image& original, const RunConfig& config, std::span<const double> grid, bool prune) {
  if (grid.empty()) fail(ErrorCode::kInvalidArgument, "empty learning-rate grid");
  std::vector<double> lrs(grid.begin(), grid.end());
  std::sort(lrs.begin(), lrs.end(), std::greater<>());
  lrs.erase(std::unique(lrs.begin(), lrs.end()), lrs.end());

  SweepOutcome out;
  for (double lr : lrs) {
    RunConfig cfg = config;
    const bool capped = prune && out.cost.has_value();
    if (capped) {
      if (*out.cost == 0) {
        out.table.push_back({lr, RunStatus::kPruned, std::nullopt});
        continue;
      }
      cfg.max_steps = std::min(cfg.max_steps, *out.cost - 1);
    }
    RunRecord run = train_to_target(original, cfg, lr);
    ++out.runs;
    const auto cost = run.cost();
    LrOutcome row{lr, run.status, cost};
    if (capped && run.status == RunStatus::kMaxSteps) row.status = RunStatus::kPruned;
    out.table.push_back(row);
    if (cost && (!out.cost || *cost < *out.cost)) {
      out.cost = cost;
      out.best_lr = lr;
      out.best_run = std::move(run);
    }
  }
  return out;
}

std::optional<double> acceleration(std::optional<std::uint64_t> cost_id, std::optional<std::uint64_t> cost_t) {
  if (!cost_id || !cost_t) return std::nullopt;
  if (*cost_t == 0) return *cost_id == 0 ? std::optional<double>(1.0) : std::nullopt;
  return static_cast<double>(*cost_id) / static_cast<double>(*cost_t);
}

Aggregate aggregate(std::span<const std::optional<double>> factors) {
  Aggregate agg;
  double sum = 0.0;
  for (const auto& f : factors) {
    if (f) {
      sum += *f;
      ++agg.count;
    } else {
      ++agg.excluded;
    }
  }
  if (agg.count > 0) agg.mean = sum / static_cast<double>(agg.count);
  return agg;
}

std::optional<double> median(std::span<const std::optional<double>> values) {
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::vector<double> default_lr_grid(const ArchSpec& arch) {
  const int hi = arch.is_hash() ? 4 : 8;
  const int lo = arch.is_hash() ? 13 : 16;
  std::vector<double> grid;
  for (int k = hi; k <= lo; ++k) grid.push_back(std::ldexp(1.0, -k));
  return grid;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

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

OptimizerConfig optimizer_from_json(const json& j) {
  OptimizerConfig opt;
  if (j.is_string()) {
    const auto kind = j.get<std::string>();
    if (kind == "sgd") opt.kind = OptimizerKind::kSgd;
    else if (kind != "adam") fail(ErrorCode::kParse, "unknown optimizer: " + kind);
    return opt;
  }
  const auto kind = j.value("kind", std::string("adam"));
  if (kind == "sgd") opt.kind = OptimizerKind::kSgd;
  else if (kind != "adam") fail(ErrorCode::kParse, "unknown optimizer: " + kind);
  read_opt(j, "beta1", opt.beta1);
  read_opt(j, "beta2", opt.beta2);
  read_opt(j, "eps", opt.eps);
  return opt;
}

std::size_t parse_batch(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "full") return 0;
    fail(ErrorCode::kParse, "batch size must be a number or \"full\": " + s);
  }
  return j.get<std::size_t>();
}

json lr_table_json(const std::vector<LrOutcome>& table) {
  json arr = json::array();
  for (const auto& row : table) {
    json r;
    r["lr"] = row.lr;
    r["status"] = to_string(row.status);
    r["steps"] = row.steps ? json(*row.steps) : json(nullptr);
    arr.push_back(r);
  }
  return arr;
}

RunStatus status_from_string(const std::string& s) {
  if (s == "converged") return RunStatus::kConverged;
  if (s == "diverged") return RunStatus::kDiverged;
  if (s == "pruned") return RunStatus::kPruned;
  return RunStatus::kMaxSteps;
}

json first_hit_json(const std::map<double, std::optional<std::uint64_t>>& hits) {
  json arr = json::array();
  for (const auto& [t, step] : hits) arr.push_back(json::array({t, step ? json(*step) : json(nullptr)}));
  return arr;
}

std::string hex12(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

json cell_inputs(const StudyConfig& config, const CellKey& key, std::span<const double> grid) {
  json j;
  j["image"] = config.images[key.image];
  j["crop"] = config.crop;
  j["srgb_to_linear"] = config.srgb_to_linear;
  j["transform"] = config.transforms[key.transform];
  j["arch"] = ArchSpec::parse(config.archs[key.arch]).descriptor();
  j["batch"] = config.batch_sizes[key.batch];
  j["lr_grid"] = std::vector<double>(grid.begin(), grid.end());
  j["target_psnr"] = config.target_psnr;
  j["thresholds"] = config.thresholds;
  j["max_steps"] = config.max_steps;
  j["eval_every"] = config.eval_every;
  j["seed"] = cell_seed(config, key.image, key.arch);
  j["optimizer"] = optimizer_json(config.optimizer);
  j["prune"] = config.prune;
  return j;
}

json cell_to_json(const CellResult& c, const json& inputs) {
  json j;
  j["id"] = c.id;
  j["inputs"] = inputs;
  j["status"] = c.status;
  if (!c.error.empty()) j["error"] = c.error;
  j["best_lr"] = c.best_lr ? json(*c.best_lr) : json(nullptr);
  j["cost_steps"] = c.cost ? json(*c.cost) : json(nullptr);
  j["lr_table"] = lr_table_json(c.table);
  j["first_hit"] = first_hit_json(c.first_hit);
  return j;
}

void cell_from_json(const json& j, CellResult& c) {
  c.status = j.at("status").get<std::string>();
  c.error = j.value("error", std::string());
  if (!j.at("best_lr").is_null()) c.best_lr = j.at("best_lr").get<double>();
  if (!j.at("cost_steps").is_null()) c.cost = j.at("cost_steps").get<std::uint64_t>();
  for (const auto& r : j.at("lr_table")) {
    LrOutcome row;
    row.lr = r.at("lr").get<double>();
    row.status = status_from_string(r.at("status").get<std::string>());
    if (!r.at("steps").is_null()) row.steps = r.at("steps").get<std::uint64_t>();
    c.table.push_back(row);
  }
  for (const auto& pair : j.at("first_hit")) {
    std::optional<std::uint64_t> step;
    if (!pair.at(1).is_null()) step = pair.at(1).get<std::uint64_t>();
    c.first_hit[pair.at(0).get<double>()] = step;
  }
}

}  // namespace

StudyConfig StudyConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("study manifest: ") + e.what());
  }
  StudyConfig c;
  try {
    c.images = j.at("images").get<std::vector<std::string>>();
    c.transforms = j.at("transforms").get<std::vector<std::string>>();
    c.archs = j.at("archs").get<std::vector<std::string>>();
    if (j.contains("batch_sizes")) {
      c.batch_sizes.clear();
      for (const auto& b : j.at("batch_sizes")) c.batch_sizes.push_back(parse_batch(b));
    }
    read_opt(j, "lr_grid", c.lr_grid);
    read_opt(j, "target_psnr", c.target_psnr);
    read_opt(j, "thresholds", c.thresholds);
    read_opt(j, "max_steps", c.max_steps);
    read_opt(j, "eval_every", c.eval_every);
    read_opt(j, "seed", c.seed);
    read_opt(j, "crop", c.crop);
    read_opt(j, "srgb_to_linear", c.srgb_to_linear);
    read_opt(j, "prune", c.prune);
    read_opt(j, "save_checkpoints", c.save_checkpoints);
    if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("study manifest: ") + e.what());
  }
  if (c.images.empty() || c.transforms.empty() || c.archs.empty() || c.batch_sizes.empty()) {
    fail(ErrorCode::kInvalidArgument, "study needs at least one image, transform, arch and batch size");
  }
  for (const auto& t : c.transforms) TransformSpec::parse(t);
  for (const auto& a : c.archs) ArchSpec::parse(a);
  return c;
}

std::string StudyConfig::to_json() const {
  json j;
  j["images"] = images;
  j["transforms"] = transforms;
  j["archs"] = archs;
  j["batch_sizes"] = batch_sizes;
  j["lr_grid"] = lr_grid;
  j["target_psnr"] = target_psnr;
  j["thresholds"] = thresholds;
  j["max_steps"] = max_steps;
  j["eval_every"] = eval_every;
  j["seed"] = seed;
  j["crop"] = crop;
  j["srgb_to_linear"] = srgb_to_linear;
  j["optimizer"] = optimizer_json(optimizer);
  j["prune"] = prune;
  j["save_checkpoints"] = save_checkpoints;
  return j.dump(2) + "\n";
}

std::uint64_t cell_seed(const StudyConfig& config, std::size_t image, std::size_t arch) {
  return derive_seed(config.seed, config.images.at(image) + "|" + ArchSpec::parse(config.archs.at(arch)).descriptor());
}

std::filesystem::path cell_dir(const std::filesystem::path& out_dir, const CellResult& cell) {
  return out_dir / "cells" / cell.id;
}

StudyResult run_study(const StudyConfig& config, const std::filesystem::path& out_dir, const StudyOptions& options) {
  StudyResult result;
  for (std::size_t i = 0; i < config.images.size(); ++i) {
    for (std::size_t t = 0; t < config.transforms.size(); ++t) {
      for (std::size_t a = 0; a < config.archs.size(); ++a) {
        for (std::size_t b = 0; b < config.batch_sizes.size(); ++b) {
          CellResult c;
          c.key = {i, t, a, b};
          c.image = config.images[i];
          c.transform = TransformSpec::parse(config.transforms[t]).name();
          c.arch = ArchSpec::parse(config.archs[a]).descriptor();
          c.batch_size = config.batch_sizes[b];
          result.cells.push_back(std::move(c));
        }
      }
    }
  }
  write_file_atomic(out_dir / "study.json", config.to_json());

  std::vector<json> inputs(result.cells.size());
  std::vector<std::size_t> pending;
  for (std::size_t k = 0; k < result.cells.size(); ++k) {
    auto& c = result.cells[k];
    const ArchSpec arch = ArchSpec::parse(config.archs[c.key.arch]);
    const auto grid = config.lr_grid.empty() ? default_lr_grid(arch) : config.lr_grid;
    inputs[k] = cell_inputs(config, c.key, grid);
    c.id = hex12(mix64(fnv1a64(inputs[k].dump())));
    const auto record = cell_dir(out_dir, c) / "cell.json";
    if (std::filesystem::exists(record)) {
      const json j = json::parse(read_text(record));
      if (j.value("status", std::string()) != "error" && j.at("inputs") == inputs[k]) {
        cell_from_json(j, c);
        c.resumed = true;
        continue;
      }
    }
    pending.push_back(k);
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> runs{0};
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(pending.size())));
  const int omp_threads = std::max(1, omp_get_max_threads() / workers);

  auto work = [&] {
    omp_set_num_threads(omp_threads);
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) return;
      CellResult& c = result.cells[pending[slot]];
      const json& in = inputs[pending[slot]];
      const auto dir = cell_dir(out_dir, c);
      try {
        const Image original = resolve_image(config.images[c.key.image], config.crop, config.srgb_to_linear);
        RunConfig rc;
        rc.arch = ArchSpec::parse(config.archs[c.key.arch]);
        rc.seed = in.at("seed").get<std::uint64_t>();
        rc.transform = TransformSpec::parse(config.transforms[c.key.transform])
                           .build(original, derive_seed(rc.seed, "transform"));
        rc.optimizer = config.optimizer;
        rc.batch_size = c.batch_size;
        rc.target_psnr = config.target_psnr;
        rc.thresholds = config.thresholds;
        rc.max_steps = config.max_steps;
        rc.eval_every = config.eval_every;
        const auto grid = in.at("lr_grid").get<std::vector<double>>();
        SweepOutcome sweep = lr_sweep(original, rc, grid, config.prune);
        runs += sweep.runs;
        c.best_lr = sweep.best_lr;
        c.cost = sweep.cost;
        c.table = sweep.table;
        c.status = sweep.converged() ? "converged" : "dnf";
        if (sweep.best_run) {
          const RunRecord& best = *sweep.best_run;
          c.first_hit = best.first_hit;
          write_file_atomic(dir / "metrics.csv", metrics_csv(best));
          if (config.save_checkpoints) {
            for (const auto& ck : best.checkpoints) save_checkpoint(dir / ("ckpt_" + ck.label + ".nfld"), rc.arch, ck.params);
          }
          if (rc.transform.is_permutation()) write_file_atomic(dir / "permutation.txt", rc.transform.map()->serialize());
        }
      } catch (const std::exception& e) {
        c.status = "error";
        c.error = e.what();
      }
      try {
        write_file_atomic(dir / "cell.json", cell_to_json(c, in).dump(2) + "\n");
      } catch (const std::exception& e) {
        c.status = "error";
        c.error = e.what();
      }
      if (options.on_cell) {
        std::lock_guard lock(mu);
        options.on_cell(c);
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  result.runs_executed = runs;

  for (auto& c : result.cells) {
    for (const auto& ref : result.cells) {
      if (ref.key.image == c.key.image && ref.key.arch == c.key.arch && ref.key.batch == c.key.batch &&
          TransformSpec::parse(config.transforms[ref.key.transform]).kind == TransformKind::kIdentity) {
        c.acceleration = acceleration(ref.cost, c.cost);
        break;
      }
    }
  }
  write_file_atomic(out_dir / "study.csv", study_csv(result));
  write_file_atomic(out_dir / "summary.csv", summary_csv(result));
  return result;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::string batch_label(std::size_t batch_size) { return batch_size == 0 ? "full" : std::to_string(batch_size); }

std::string study_csv(const StudyResult& result) {
  std::string out = "image,transform,arch,batch,best_lr,cost_steps,status,acceleration\n";
  for (const auto& c : result.cells) {
    out += csv_field(c.image) + ',' + csv_field(c.transform) + ',' + csv_field(c.arch) + ',' +
           batch_label(c.batch_size) + ',' + (c.best_lr ? format_double(*c.best_lr) : "") + ',' +
           (c.cost ? std::to_string(*c.cost) : "") + ',' + c.status + ',' +
           (c.acceleration ? format_double(*c.acceleration) : "") + '\n';
  }
  return out;
}

std::string summary_csv(const StudyResult& result) {
  struct Group {
    std::string transform, arch;
    std::size_t batch;
    std::vector<std::optional<double>> factors;
  };
  std::vector<Group> groups;
  for (const auto& c : result.cells) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.transform == c.transform && g.arch == c.arch && g.batch == c.batch_size;
    });
    if (it == groups.end()) {
      groups.push_back({c.transform, c.arch, c.batch_size, {}});
      it = std::prev(groups.end());
    }
    it->factors.push_back(c.acceleration);
  }
  std::string out = "transform,arch,batch,mean_acceleration,median_acceleration,count,excluded\n";
  for (const auto& g : groups) {
    const Aggregate agg = aggregate(g.factors);
    const auto med = median(g.factors);
    out += csv_field(g.transform) + ',' + csv_field(g.arch) + ',' + batch_label(g.batch) + ',' +
           (agg.mean ? format_double(*agg.mean) : "") + ',' + (med ? format_double(*med) : "") + ',' +
           std::to_string(agg.count) + ',' + std::to_string(agg.excluded) + '\n';
  }
  return out;
}

}  // namespace nfl
