#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nflab/image.hpp"
#include "nflab/models.hpp"
#include "nflab/rng.hpp"
#include "nflab/transforms.hpp"

namespace nfl {

struct SgdState {
  double lr = 1e-3;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-10;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

using OptimState = std::variant<SgdState, AdamState>;

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-10;

  OptimState make_state(double lr, std::size_t n_params) const;
  std::string name() const;
};

/// One update in place. Moments are sized lazily on the first Adam step.
void opt_step(OptimState& state, std::span<double> params, std::span<const double> grad);

// Epoch sampler: each epoch is a fresh Fisher-Yates shuffle consumed in
// contiguous batch_size chunks (a tail shorter than batch_size is skipped).
// Full batch returns 0..n-1 every step.
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, std::size_t n_pixels, std::size_t batch_size);

  // Steps must be requested in increasing order.
  const std::vector<std::uint32_t>& indices(std::uint64_t step);

  bool full_batch() const { return batch_size_ == n_; }

 private:
  Rng rng_;
  std::size_t n_;
  std::size_t batch_size_;
  std::size_t batches_per_epoch_;
  std::uint64_t epoch_ = ~std::uint64_t{0};
  std::vector<std::uint32_t> perm_;
  std::vector<std::uint32_t> batch_;
};

std::vector<std::uint32_t> sample_batch(Rng& rng, std::size_t n_pixels, std::size_t batch_size, std::uint64_t step);

struct RunConfig {
  ArchSpec arch;
  Transform transform;
  OptimizerConfig optimizer;
  std::size_t batch_size = 0;  // 0 means full batch
  double target_psnr = 40.0;
  std::vector<double> thresholds = {20.0, 30.0, 40.0};
  std::uint64_t max_steps = 20000;
  std::uint64_t eval_every = 10;
  std::uint64_t seed = 0;
  double divergence_loss = 1e6;
  Kernel kernel = Kernel::kParallel;
};

enum class RunStatus { kConverged, kMaxSteps, kDiverged, kPruned };

std::string to_string(RunStatus status);
bool is_dnf(RunStatus status);

struct CurvePoint {
  std::uint64_t step = 0;
  double loss = 0.0;  // transformed-domain full-image MSE
  double psnr_recon_db = 0.0;
  double psnr_transformed_db = 0.0;
};

struct Checkpoint {
  std::string label;  // "init", "final" or a threshold such as "30"
  std::uint64_t step = 0;
  std::vector<double> params;
};

struct RunRecord {
  std::map<double, std::optional<std::uint64_t>> first_hit;
  std::vector<CurvePoint> curve;
  RunStatus status = RunStatus::kMaxSteps;
  bool converged = false;
  std::vector<Checkpoint> checkpoints;
  std::vector<double> final_params;
  std::uint64_t steps_run = 0;
  double lr = 0.0;

  std::optional<std::uint64_t> cost() const;
  const Checkpoint* checkpoint(std::string_view label) const;
};

std::string threshold_label(double db);

/// Trains on apply(transform, original) and measures PSNR of the inverse-
/// transformed reconstruction against `original` every eval_every steps.
RunRecord train_to_target(const Image& original, const RunConfig& config, double lr);

// Transform-aware evaluation shared by training and the analyses.
struct Evaluation {
  double loss = 0.0;
  double psnr_recon_db = 0.0;
  double psnr_transformed_db = 0.0;
  std::vector<double> predictions;  // transformed domain
};

class FieldProblem {
 public:
  FieldProblem(const Image& original, const Transform& transform, const ArchSpec& arch);

  const Image& original() const { return original_; }
  const Image& target() const { return target_; }
  const CoordGrid& grid() const { return grid_; }
  const Model& model() const { return model_; }
  const Transform& transform() const { return transform_; }

  Evaluation evaluate(std::span<const double> params, Kernel kernel = Kernel::kParallel) const;
  double loss(std::span<const double> params, Kernel kernel = Kernel::kParallel) const;
  double loss_and_grad(std::span<const double> params, std::vector<double>& grad,
                       Kernel kernel = Kernel::kParallel) const;
  Image reconstruct(std::span<const double> params) const;

 private:
  Image original_;
  Transform transform_;
  Image target_;
  CoordGrid grid_;
  Model model_;
};

// Metrics CSV: header step,loss,psnr_recon_db,psnr_transformed_db.
std::string metrics_csv(const RunRecord& record);

}  // namespace nfl
