#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nflab/analysis.hpp"
#include "nflab/training.hpp"

namespace nfl::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Inputs of one fit. The run id is the first 12 hex digits of a hash of
// config_json(), so identical manifests map to the same directory.
struct RunManifest {
  std::uint64_t seed = 0;
  std::string image;  // path or synth:... spec
  int crop = 0;
  bool srgb_to_linear = false;
  std::string transform = "identity";
  std::string arch = "siren-small";
  OptimizerConfig optimizer;
  std::size_t batch_size = 0;
  double lr = 1e-3;
  double target_psnr = 40.0;
  std::vector<double> thresholds = {20.0, 30.0, 40.0};
  std::uint64_t max_steps = 20000;
  std::uint64_t eval_every = 10;

  std::string config_json() const;
  std::string run_id() const;
  static RunManifest from_json(std::string_view text);  // reads the "config" object or a bare one
};

struct FitResult {
  std::filesystem::path dir;
  RunRecord record;
};

// Writes manifest.json, metrics.csv, psnr.svg, permutation.txt (permutations
// only), ckpt_<label>.nfld for init, each first hit and final, and
// reconstruction.pgm / error_map.pgm at the final step.
FitResult cmd_fit(const RunManifest& manifest, const std::filesystem::path& out_root);

// A run directory written by fit or by a study cell, rebuilt for analysis.
struct LoadedRun {
  std::filesystem::path dir;
  ArchSpec arch;
  Image original;
  Transform transform;
  std::uint64_t seed = 0;

  std::filesystem::path checkpoint_path(std::string_view label) const;
  std::vector<double> checkpoint(std::string_view label) const;  // kMissingCheckpoint if absent
  Image target() const { return transform.apply(original); }
};

LoadedRun load_run(const std::filesystem::path& dir);

/// Normalizes "30", "30.0" and "30dB" to the stored label; "init"/"final" pass through.
std::string checkpoint_label(std::string_view text);

struct BarrierReport {
  BarrierResult barrier;
  std::string from, to;
};
BarrierReport cmd_barrier(const LoadedRun& run, std::string_view from, std::string_view to, int samples,
                          const std::filesystem::path& out_dir);

LandscapeSlice cmd_landscape(const LoadedRun& run, std::string_view from, std::string_view to, DirectionMode mode,
                             const GridSpec& grid, const HessianOptions& hessian, const std::filesystem::path& out_dir);

struct VarianceRow {
  std::string label;
  double psnr_db = 0.0;
  double variance = 0.0;
};
std::vector<VarianceRow> cmd_variance(const LoadedRun& run, const std::vector<std::string>& labels,
                                      const std::filesystem::path& out_dir);

struct BinsReport {
  BinProfile profile;
  double spearman = 0.0;  // bin index vs mean loss over nonempty bins
};
BinsReport cmd_bins(const LoadedRun& run, std::string_view label, int n_bins, const std::filesystem::path& out_dir);

struct DctReport {
  std::vector<double> hf;  // per image
  SpectrumMap map;
  double low_frequency_ratio = 0.0;
};
DctReport cmd_dct(const std::vector<std::string>& images, std::string_view transform, std::uint64_t seed, int crop,
                  const std::filesystem::path& out_dir);

/// Writes synth_<i>.pgm for i < count.
std::vector<std::filesystem::path> cmd_gen_data(int count, int size, double exponent, std::uint64_t seed,
                                                const std::filesystem::path& out_dir);

/// Markdown summary of a study or run directory plus PSNR-curve plots.
std::string cmd_report(const std::filesystem::path& source, const std::filesystem::path& out_dir);

/// Entry point of the nflab executable.
int run_cli(int argc, char** argv);

}  // namespace nfl::cli
