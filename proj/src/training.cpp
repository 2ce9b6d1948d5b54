#include "nflab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nflab/error.hpp"
#include "nflab/io.hpp"

namespace nfl {

OptimState OptimizerConfig::make_state(double lr, std::size_t n_params) const {
  if (kind == OptimizerKind::kSgd) return SgdState{lr};
  AdamState adam;
  adam.lr = lr;
  adam.beta1 = beta1;
  adam.beta2 = beta2;
  adam.eps = eps;
  adam.m.assign(n_params, 0.0);
  adam.v.assign(n_params, 0.0);
  return adam;
}

std::string OptimizerConfig::name() const { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

void opt_step(OptimState& state, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size()) fail(ErrorCode::kDimensionMismatch, "params vs grad");
  if (auto* sgd = std::get_if<SgdState>(&state)) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= sgd->lr * grad[i];
    return;
  }
  auto& adam = std::get<AdamState>(state);
  if (adam.m.size() != params.size()) {
    adam.m.assign(params.size(), 0.0);
    adam.v.assign(params.size(), 0.0);
  }
  ++adam.t;
  const double t = static_cast<double>(adam.t);
  const double bc1 = 1.0 - std::pow(adam.beta1, t);
  const double bc2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    adam.m[i] = adam.beta1 * adam.m[i] + (1.0 - adam.beta1) * g;
    adam.v[i] = adam.beta2 * adam.v[i] + (1.0 - adam.beta2) * g * g;
    const double m_hat = adam.m[i] / bc1;
    const double v_hat = adam.v[i] / bc2;
    params[i] -= adam.lr * m_hat / (std::sqrt(v_hat) + adam.eps);
  }
}

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::uint64_t seed, std::size_t n_pixels, std::size_t batch_size)
    : rng_(seed), n_(n_pixels), batch_size_(batch_size == 0 ? n_pixels : batch_size) {
  if (n_ == 0) fail(ErrorCode::kInvalidArgument, "no pixels to sample");
  if (batch_size_ > n_) fail(ErrorCode::kInvalidArgument, "batch size exceeds pixel count");
  batches_per_epoch_ = n_ / batch_size_;
  perm_.resize(n_);
  std::iota(perm_.begin(), perm_.end(), 0u);
  if (full_batch()) batch_ = perm_;
}

const std::vector<std::uint32_t>& BatchSampler::indices(std::uint64_t step) {
  if (full_batch()) return batch_;
  const std::uint64_t epoch = step / batches_per_epoch_;
  if (epoch != epoch_) {
    if (epoch_ != ~std::uint64_t{0} && epoch < epoch_) fail(ErrorCode::kInvalidArgument, "sampler steps must increase");
    // Skipped epochs are still shuffled so the stream depends only on the step.
    const std::uint64_t shuffles = epoch_ == ~std::uint64_t{0} ? epoch + 1 : epoch - epoch_;
    for (std::uint64_t s = 0; s < shuffles; ++s) {
      for (std::size_t i = n_ - 1; i > 0; --i) {
        std::swap(perm_[i], perm_[static_cast<std::size_t>(rng_.below(i + 1))]);
      }
    }
    epoch_ = epoch;
  }
  const std::size_t offset = static_cast<std::size_t>(step % batches_per_epoch_) * batch_size_;
  batch_.assign(perm_.begin() + static_cast<std::ptrdiff_t>(offset),
                perm_.begin() + static_cast<std::ptrdiff_t>(offset + batch_size_));
  return batch_;
}

std::vector<std::uint32_t> sample_batch(Rng& rng, std::size_t n_pixels, std::size_t batch_size, std::uint64_t step) {
  BatchSampler sampler(rng.next_u64(), n_pixels, batch_size);
  return sampler.indices(step);
}

// ---------------------------------------------------------------------------

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::kConverged: return "converged";
    case RunStatus::kMaxSteps: return "dnf";
    case RunStatus::kDiverged: return "diverged";
    case RunStatus::kPruned: return "pruned";
  }
  return "dnf";
}

bool is_dnf(RunStatus status) { return status != RunStatus::kConverged; }

std::optional<std::uint64_t> RunRecord::cost() const {
  if (status != RunStatus::kConverged || first_hit.empty()) return std::nullopt;
  return first_hit.rbegin()->second;
}

const Checkpoint* RunRecord::checkpoint(std::string_view label) const {
  for (const auto& c : checkpoints) {
    if (c.label == label) return &c;
  }
  return nullptr;
}

std::string threshold_label(double db) { return format_double(db); }

// ---------------------------------------------------------------------------

FieldProblem::FieldProblem(const Image& original, const Transform& transform, const ArchSpec& arch)
    : original_(original),
      transform_(transform),
      target_(transform.apply(original)),
      grid_(coord_grid(original.width, original.height, arch.domain())),
      model_(arch) {}

Evaluation FieldProblem::evaluate(std::span<const double> params, Kernel kernel) const {
  Evaluation ev;
  ev.predictions = model_.forward(params, grid_.coords, kernel);
  ev.loss = mse(ev.predictions, target_.pixels);
  ev.psnr_transformed_db = psnr(ev.loss);
  const Image recon = transform_.invert(Image(original_.width, original_.height, ev.predictions));
  ev.psnr_recon_db = psnr(mse(recon, original_));
  return ev;
}

double FieldProblem::loss(std::span<const double> params, Kernel kernel) const {
  return mse(model_.forward(params, grid_.coords, kernel), target_.pixels);
}

double FieldProblem::loss_and_grad(std::span<const double> params, std::vector<double>& grad, Kernel kernel) const {
  return model_.loss_and_grad(params, grid_.coords, target_.pixels, grad, kernel);
}

Image FieldProblem::reconstruct(std::span<const double> params) const {
  return transform_.invert(Image(original_.width, original_.height, model_.forward(params, grid_.coords)));
}

// ---------------------------------------------------------------------------

RunRecord train_to_target(const Image& original, const RunConfig& config, double lr) {
  if (original.width != original.height) fail(ErrorCode::kNonSquare, "training image must be square");
  if (!(lr > 0.0)) fail(ErrorCode::kInvalidArgument, "learning rate must be positive");
  if (config.eval_every < 1) fail(ErrorCode::kInvalidArgument, "eval_every must be >= 1");

  std::vector<double> thresholds = config.thresholds;
  thresholds.push_back(config.target_psnr);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.erase(std::remove_if(thresholds.begin(), thresholds.end(),
                                  [&](double t) { return t > config.target_psnr; }),
                   thresholds.end());

  const FieldProblem problem(original, config.transform, config.arch);
  const Model& model = problem.model();
  const std::size_t n = original.size();
  const std::size_t batch_size = config.batch_size == 0 ? n : config.batch_size;
  if (batch_size > n) fail(ErrorCode::kInvalidArgument, "batch size exceeds pixel count");

  RunRecord record;
  record.lr = lr;
  for (double t : thresholds) record.first_hit[t] = std::nullopt;

  std::vector<double> params = init_params(config.arch, config.seed).values;
  record.checkpoints.push_back({"init", 0, params});
  OptimState state = config.optimizer.make_state(lr, params.size());
  BatchSampler sampler(derive_seed(config.seed, "batches"), n, batch_size);

  std::vector<double> grad;
  std::vector<double> batch_coords;
  std::vector<double> batch_targets;
  const auto& coords = problem.grid().coords;
  const auto& target = problem.target().pixels;

  for (std::uint64_t step = 0;; ++step) {
    if (step % config.eval_every == 0 || step == config.max_steps) {
      const Evaluation ev = problem.evaluate(params, config.kernel);
      record.curve.push_back({step, ev.loss, ev.psnr_recon_db, ev.psnr_transformed_db});
      for (double t : thresholds) {
        auto& hit = record.first_hit[t];
        if (!hit && ev.psnr_recon_db >= t) {
          hit = step;
          record.checkpoints.push_back({threshold_label(t), step, params});
        }
      }
      if (record.first_hit[config.target_psnr]) {
        record.status = RunStatus::kConverged;
        record.steps_run = step;
        break;
      }
      if (!std::isfinite(ev.loss) || ev.loss > config.divergence_loss) {
        record.status = RunStatus::kDiverged;
        record.steps_run = step;
        break;
      }
    }
    if (step >= config.max_steps) {
      record.status = RunStatus::kMaxSteps;
      record.steps_run = step;
      break;
    }

    double loss;
    if (sampler.full_batch()) {
      loss = model.loss_and_grad(params, coords, target, grad, config.kernel);
    } else {
      const auto& idx = sampler.indices(step);
      batch_coords.resize(2 * idx.size());
      batch_targets.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        batch_coords[2 * i] = coords[2 * idx[i]];
        batch_coords[2 * i + 1] = coords[2 * idx[i] + 1];
        batch_targets[i] = target[idx[i]];
      }
      loss = model.loss_and_grad(params, batch_coords, batch_targets, grad, config.kernel);
    }
    if (!std::isfinite(loss) || loss > config.divergence_loss) {
      record.status = RunStatus::kDiverged;
      record.steps_run = step;
      break;
    }
    opt_step(state, params, grad);
  }

  record.converged = record.status == RunStatus::kConverged;
  record.final_params = std::move(params);
  return record;
}

std::string metrics_csv(const RunRecord& record) {
  std::string out = "step,loss,psnr_recon_db,psnr_transformed_db\n";
  for (const auto& p : record.curve) {
    out += std::to_string(p.step);
    out += ',';
    out += format_double(p.loss);
    out += ',';
    out += format_double(p.psnr_recon_db);
    out += ',';
    out += format_double(p.psnr_transformed_db);
    out += '\n';
  }
  return out;
}

}  // namespace nfl
