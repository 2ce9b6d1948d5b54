#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nflab/image.hpp"
#include "nflab/models.hpp"

namespace nfl {

using Block8 = std::array<double, 64>;

/// Orthonormal 2D DCT-II of a row-major 8x8 block.
Block8 dct2_block(std::span<const double> block);
Block8 idct2_block(std::span<const double> coeffs);

/// Orthonormal separable 2D DCT-II of the whole image (row-major output).
std::vector<double> dct2(const Image& img);

/// Mean over 8x8 patches of the squared DCT coefficients outside the
/// upper-left 4x4 of each patch.
double hf_intensity(const Image& img);

struct SpectrumMap {
  Image mean_abs;  // mean |coefficient| across images
  Image display;   // mean_abs raised to kDisplayPower
};

inline constexpr double kDisplayPower = 0.03;

SpectrumMap avg_dct_map(std::span<const Image> images);

/// Mean of the top-left quadrant of `map` divided by the mean of the whole
/// map. Values near 1 mean a flat spectrum.
double low_frequency_ratio(const Image& map);

struct BarrierResult {
  double max_loss = 0.0;
  double min_psnr_db = 0.0;
  double argmax_t = 0.0;
  std::vector<double> ts;
  std::vector<double> losses;
};

BarrierResult loss_barrier(const ArchSpec& arch, const Image& target, std::span<const double> theta_a,
                           std::span<const double> theta_b, int n_samples, Kernel kernel = Kernel::kParallel);

enum class DirectionMode { kRandom, kEigen };

struct GridSpec {
  double alpha_min = -0.25;
  double alpha_max = 1.25;
  int alpha_samples = 61;  // 0.025 spacing keeps alpha = 0 and 1 on the grid
  double beta_min = -0.5;
  double beta_max = 0.5;
  int beta_samples = 51;

  double alpha(int i) const;
  double beta(int j) const;
};

struct LandscapeSlice {
  std::vector<double> anchor;
  std::vector<double> axis_u;
  std::vector<double> axis_v;
  GridSpec grid;
  std::vector<double> loss;     // beta-major: loss[j * alpha_samples + i]
  std::vector<double> psnr_db;

  double at(int alpha_index, int beta_index) const {
    return loss[static_cast<std::size_t>(beta_index) * grid.alpha_samples + alpha_index];
  }
};

struct HessianOptions {
  int iters = 20;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Losses on theta_a + alpha*u + beta*v with u = theta_b - theta_a. The
/// second axis is a Gaussian direction (or the top Hessian eigenvector at
/// theta_b), orthogonalized against u and rescaled to |u|. Kernel::kParallel
/// evaluates grid cells concurrently.
LandscapeSlice landscape_slice(const ArchSpec& arch, const Image& target, std::span<const double> theta_a,
                               std::span<const double> theta_b, DirectionMode mode, const GridSpec& grid,
                               std::uint64_t seed, Kernel kernel = Kernel::kParallel,
                               const HessianOptions& hessian = {});

struct PowerIterationResult {
  std::vector<double> direction;  // unit norm
  double eigenvalue = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> rayleigh;  // one quotient per iteration
};

// Writes the gradient at theta into grad.
using GradientFn = std::function<void(std::span<const double> theta, std::vector<double>& grad)>;

/// Power iteration with Hessian-vector products from central differences of
/// the gradient, eps = 1e-3 / |w|. Stops after `iters` or when successive
/// Rayleigh quotients change by less than tol relative.
PowerIterationResult power_iteration_hvp(const GradientFn& gradient, std::span<const double> theta,
                                         const HessianOptions& options);

PowerIterationResult top_hessian_direction(const ArchSpec& arch, const Image& target,
                                           std::span<const double> theta, const HessianOptions& options);

/// Population variance of per-pixel squared errors.
double pixel_loss_variance(std::span<const double> predictions, std::span<const double> target);

struct BinProfile {
  std::vector<double> mean_loss;  // NaN for empty bins
  std::vector<std::size_t> count;

  bool empty(std::size_t b) const { return count[b] == 0; }
};

/// Bin b covers [b/n, (b+1)/n), the last bin also takes 1.0.
BinProfile intensity_bins(std::span<const double> predictions, std::span<const double> target, int n_bins = 16);

/// |prediction - target| scaled so the maximum is 1 (all zero if exact).
Image error_map(const Image& predictions, const Image& target);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace nfl
