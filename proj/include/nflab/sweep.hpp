#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nflab/training.hpp"

namespace nfl {

struct LrOutcome {
  double lr = 0.0;
  RunStatus status = RunStatus::kMaxSteps;
  std::optional<std::uint64_t> steps;  // set when converged
};

struct SweepOutcome {
  std::optional<double> best_lr;
  std::optional<std::uint64_t> cost;  // nullopt means DNF
  std::vector<LrOutcome> table;       // descending lr
  std::optional<RunRecord> best_run;
  std::size_t runs = 0;

  bool converged() const { return cost.has_value(); }
};

struct BestLr {
  std::optional<double> lr;
  std::optional<std::uint64_t> cost;  // nullopt means every lr failed
};

/// Minimum converged step count; ties go to the larger lr.
BestLr select_best(std::span<const LrOutcome> table);

/// Runs the grid from the largest lr down. Once a run converges, later runs
/// are capped one step below the best cost (status kPruned if they miss it),
/// which leaves the minimum and the larger-lr tie-break unchanged.
SweepOutcome lr_sweep(const Image& original, const RunConfig& config, std::span<const double> grid,
                      bool prune = true);

/// cost_id / cost_t; nullopt if either is DNF.
std::optional<double> acceleration(std::optional<std::uint64_t> cost_id, std::optional<std::uint64_t> cost_t);

struct Aggregate {
  std::optional<double> mean;  // mean of defined factors
  std::size_t count = 0;       // defined factors
  std::size_t excluded = 0;    // undefined factors
};

Aggregate aggregate(std::span<const std::optional<double>> factors);

/// Median of the defined values (mean of the middle pair for even counts).
std::optional<double> median(std::span<const std::optional<double>> values);

/// Default grids: powers of two 2^-4..2^-13 for hash models, 2^-8..2^-16 otherwise.
std::vector<double> default_lr_grid(const ArchSpec& arch);

struct StudyConfig {
  std::vector<std::string> images;      // file paths or synth:... specs
  std::vector<std::string> transforms;  // TransformSpec text
  std::vector<std::string> archs;       // ArchSpec text
  std::vector<std::size_t> batch_sizes = {0};
  std::vector<double> lr_grid;  // empty means default_lr_grid per arch
  double target_psnr = 40.0;
  std::vector<double> thresholds = {20.0, 30.0, 40.0};
  std::uint64_t max_steps = 20000;
  std::uint64_t eval_every = 10;
  std::uint64_t seed = 0;
  int crop = 0;
  bool srgb_to_linear = false;
  OptimizerConfig optimizer;
  bool prune = true;
  bool save_checkpoints = true;

  static StudyConfig from_json(std::string_view text);
  std::string to_json() const;
};

struct CellKey {
  std::size_t image = 0;
  std::size_t transform = 0;
  std::size_t arch = 0;
  std::size_t batch = 0;
};

struct CellResult {
  CellKey key;
  std::string id;  // content hash of the cell's inputs
  std::string image;
  std::string transform;
  std::string arch;
  std::size_t batch_size = 0;
  std::optional<double> best_lr;
  std::optional<std::uint64_t> cost;
  std::string status;  // converged | dnf | error
  std::string error;
  std::vector<LrOutcome> table;
  std::map<double, std::optional<std::uint64_t>> first_hit;  // best run
  std::optional<double> acceleration;
  bool resumed = false;
};

struct StudyResult {
  std::vector<CellResult> cells;  // config order: image, transform, arch, batch
  std::size_t runs_executed = 0;
};

struct StudyOptions {
  int workers = 1;
  std::function<void(const CellResult&)> on_cell;  // called under a lock
};

// Per-cell record: <out>/cells/<id>/cell.json, plus metrics.csv and
// ckpt_<label>.nfld of the best run. Existing cell records are reused.
StudyResult run_study(const StudyConfig& config, const std::filesystem::path& out_dir,
                      const StudyOptions& options = {});

/// Seed shared by every transform/lr of one (image, arch) pair, so runs start
/// from the same initialization.
std::uint64_t cell_seed(const StudyConfig& config, std::size_t image, std::size_t arch);

std::filesystem::path cell_dir(const std::filesystem::path& out_dir, const CellResult& cell);

// Study CSV: image,transform,arch,batch,best_lr,cost_steps,status,acceleration.
std::string study_csv(const StudyResult& result);

// transform,arch,batch,mean_acceleration,median_acceleration,count,excluded.
std::string summary_csv(const StudyResult& result);

/// RFC 4180 quoting when the field contains a comma, quote or newline.
std::string csv_field(std::string_view text);

std::string batch_label(std::size_t batch_size);

}  // namespace nfl
