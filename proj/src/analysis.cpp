#include "nflab/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "nflab/error.hpp"
#include "nflab/rng.hpp"

namespace nfl {

namespace {

// Orthonormal DCT-II basis, row k = frequency.
Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd c(n, n);
  for (int k = 0; k < n; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) c(k, i) = s * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  }
  return c;
}

const Eigen::Matrix<double, 8, 8>& dct8() {
  static const Eigen::Matrix<double, 8, 8> m = dct_matrix(8);
  return m;
}

using RowMajor8 = Eigen::Matrix<double, 8, 8, Eigen::RowMajor>;

}  // namespace

Block8 dct2_block(std::span<const double> block) {
  if (block.size() != 64) fail(ErrorCode::kDimensionMismatch, "DCT block must be 8x8");
  // Owned operands: Eigen's reduction order may depend on operand alignment.
  const RowMajor8 x = Eigen::Map<const RowMajor8>(block.data());
  const RowMajor8 y = dct8() * x * dct8().transpose();
  Block8 out;
  std::copy(y.data(), y.data() + 64, out.begin());
  return out;
}

Block8 idct2_block(std::span<const double> coeffs) {
  if (coeffs.size() != 64) fail(ErrorCode::kDimensionMismatch, "DCT block must be 8x8");
  const RowMajor8 y = Eigen::Map<const RowMajor8>(coeffs.data());
  const RowMajor8 x = dct8().transpose() * y * dct8();
  Block8 out;
  std::copy(x.data(), x.data() + 64, out.begin());
  return out;
}

std::vector<double> dct2(const Image& img) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor x = Eigen::Map<const RowMajor>(img.pixels.data(), img.height, img.width);
  const RowMajor y = dct_matrix(img.height) * x * dct_matrix(img.width).transpose();
  return {y.data(), y.data() + y.size()};
}

double hf_intensity(const Image& img) {
  if (img.width % 8 != 0 || img.height % 8 != 0 || img.width == 0 || img.height == 0) {
    fail(ErrorCode::kDimensionMismatch, "hf_intensity needs dimensions divisible by 8");
  }
  double total = 0.0;
  std::size_t patches = 0;
  Block8 block;
  for (int r0 = 0; r0 < img.height; r0 += 8) {
    for (int c0 = 0; c0 < img.width; c0 += 8) {
      // Offsetting by a constant only moves the DC term; differences make the
      // AC coefficients of 1 - x exact negatives of those of x.
      const double ref = img.at(r0, c0);
      for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) block[r * 8 + c] = img.at(r0 + r, c0 + c) - ref;
      }
      const Block8 coeffs = dct2_block(block);
      for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
          if (u >= 4 || v >= 4) total += coeffs[u * 8 + v] * coeffs[u * 8 + v];
        }
      }
      ++patches;
    }
  }
  return total / static_cast<double>(patches);
}

SpectrumMap avg_dct_map(std::span<const Image> images) {
  if (images.empty()) fail(ErrorCode::kInvalidArgument, "no images");
  const int w = images.front().width;
  const int h = images.front().height;
  if (w != h) fail(ErrorCode::kNonSquare, "DCT maps need square images");
  SpectrumMap map{Image(w, h), Image(w, h)};
  for (const auto& img : images) {
    if (img.width != w || img.height != h) fail(ErrorCode::kDimensionMismatch, "images differ in size");
    const auto coeffs = dct2(img);
    for (std::size_t i = 0; i < coeffs.size(); ++i) map.mean_abs.pixels[i] += std::fabs(coeffs[i]);
  }
  for (std::size_t i = 0; i < map.mean_abs.size(); ++i) {
    map.mean_abs.pixels[i] /= static_cast<double>(images.size());
    map.display.pixels[i] = std::pow(map.mean_abs.pixels[i], kDisplayPower);
  }
  return map;
}

double low_frequency_ratio(const Image& map) {
  const int hw = map.width / 2;
  const int hh = map.height / 2;
  double quad = 0.0;
  for (int r = 0; r < hh; ++r) {
    for (int c = 0; c < hw; ++c) quad += map.at(r, c);
  }
  const double all = std::accumulate(map.pixels.begin(), map.pixels.end(), 0.0);
  quad /= static_cast<double>(hw) * hh;
  return quad / (all / static_cast<double>(map.size()));
}

// ---------------------------------------------------------------------------

BarrierResult loss_barrier(const ArchSpec& arch, const Image& target, std::span<const double> theta_a,
                           std::span<const double> theta_b, int n_samples, Kernel kernel) {
  if (n_samples < 2) fail(ErrorCode::kInvalidArgument, "barrier needs at least 2 samples");
  const Model model(arch);
  if (theta_a.size() != model.num_params() || theta_b.size() != model.num_params()) {
    fail(ErrorCode::kDimensionMismatch, "parameter count");
  }
  const auto grid = coord_grid(target.width, target.height, arch.domain());
  BarrierResult res;
  res.max_loss = -std::numeric_limits<double>::infinity();
  std::vector<double> theta(theta_a.size());
  for (int i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / (n_samples - 1);
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] = theta_a[k] + t * (theta_b[k] - theta_a[k]);
    const double loss = mse(model.forward(theta, grid.coords, kernel), target.pixels);
    res.ts.push_back(t);
    res.losses.push_back(loss);
    if (loss > res.max_loss) {
      res.max_loss = loss;
      res.argmax_t = t;
    }
  }
  res.min_psnr_db = psnr(res.max_loss);
  return res;
}

double GridSpec::alpha(int i) const {
  return alpha_samples == 1 ? alpha_min : alpha_min + (alpha_max - alpha_min) * i / (alpha_samples - 1);
}

double GridSpec::beta(int j) const {
  return beta_samples == 1 ? beta_min : beta_min + (beta_max - beta_min) * j / (beta_samples - 1);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

PowerIterationResult power_iteration_hvp(const GradientFn& gradient, std::span<const double> theta,
                                         const HessianOptions& options) {
  if (options.iters < 1) fail(ErrorCode::kInvalidArgument, "power iteration needs iters >= 1");
  const std::size_t n = theta.size();
  PowerIterationResult res;
  Rng rng(derive_seed(options.seed, "power-iteration"));
  std::vector<double> w(n);
  for (double& x : w) x = rng.normal();
  double wn = norm(w);
  for (double& x : w) x /= wn;

  std::vector<double> plus(n), minus(n), g_plus, g_minus, hw(n);
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int it = 0; it < options.iters; ++it) {
    const double eps = 1e-3 / norm(w);
    for (std::size_t k = 0; k < n; ++k) {
      plus[k] = theta[k] + eps * w[k];
      minus[k] = theta[k] - eps * w[k];
    }
    gradient(plus, g_plus);
    gradient(minus, g_minus);
    for (std::size_t k = 0; k < n; ++k) hw[k] = (g_plus[k] - g_minus[k]) / (2.0 * eps);

    const double lambda = dot(w, hw);
    res.rayleigh.push_back(lambda);
    res.eigenvalue = lambda;
    res.iterations = it + 1;
    const double hn = norm(hw);
    if (!(hn > 0.0) || !std::isfinite(hn)) {
      // Flat or broken curvature: no direction to follow.
      res.converged = false;
      res.direction = w;
      return res;
    }
    for (std::size_t k = 0; k < n; ++k) w[k] = hw[k] / hn;
    if (it > 0 && std::fabs(lambda - previous) < options.tol * std::fabs(lambda)) {
      res.converged = true;
      break;
    }
    previous = lambda;
  }
  res.direction = w;
  return res;
}

PowerIterationResult top_hessian_direction(const ArchSpec& arch, const Image& target,
                                           std::span<const double> theta, const HessianOptions& options) {
  const Model model(arch);
  const auto grid = coord_grid(target.width, target.height, arch.domain());
  GradientFn gradient = [&](std::span<const double> th, std::vector<double>& g) {
    model.loss_and_grad(th, grid.coords, target.pixels, g);
  };
  return power_iteration_hvp(gradient, theta, options);
}

LandscapeSlice landscape_slice(const ArchSpec& arch, const Image& target, std::span<const double> theta_a,
                               std::span<const double> theta_b, DirectionMode mode, const GridSpec& grid,
                               std::uint64_t seed, Kernel kernel, const HessianOptions& hessian) {
  if (grid.alpha_samples < 1 || grid.beta_samples < 1) fail(ErrorCode::kInvalidArgument, "empty landscape grid");
  const Model model(arch);
  const std::size_t n = model.num_params();
  if (theta_a.size() != n || theta_b.size() != n) fail(ErrorCode::kDimensionMismatch, "parameter count");

  LandscapeSlice slice;
  slice.grid = grid;
  slice.anchor.assign(theta_a.begin(), theta_a.end());
  slice.axis_u.resize(n);
  for (std::size_t k = 0; k < n; ++k) slice.axis_u[k] = theta_b[k] - theta_a[k];
  const double u_norm = norm(slice.axis_u);
  if (!(u_norm > 0.0)) fail(ErrorCode::kDegenerateDirection, "theta_a == theta_b");

  std::vector<double> v(n);
  if (mode == DirectionMode::kRandom) {
    Rng rng(derive_seed(seed, "landscape-direction"));
    for (double& x : v) x = rng.normal();
  } else {
    HessianOptions opts = hessian;
    opts.seed = seed;
    v = top_hessian_direction(arch, target, theta_b, opts).direction;
  }
  const double proj = dot(v, slice.axis_u) / (u_norm * u_norm);
  for (std::size_t k = 0; k < n; ++k) v[k] -= proj * slice.axis_u[k];
  const double v_norm = norm(v);
  if (!(v_norm > 1e-12 * u_norm)) fail(ErrorCode::kDegenerateDirection, "second axis parallel to the first");
  for (double& x : v) x *= u_norm / v_norm;
  slice.axis_v = std::move(v);

  const auto coords = coord_grid(target.width, target.height, arch.domain());
  const int na = grid.alpha_samples;
  const int cells = na * grid.beta_samples;
  slice.loss.assign(static_cast<std::size_t>(cells), 0.0);
  slice.psnr_db.assign(static_cast<std::size_t>(cells), 0.0);

  auto eval_cell = [&](int cell, std::vector<double>& theta, Kernel inner) {
    const double a = grid.alpha(cell % na);
    const double b = grid.beta(cell / na);
    for (std::size_t k = 0; k < n; ++k) theta[k] = theta_a[k] + a * slice.axis_u[k] + b * slice.axis_v[k];
    const double loss = mse(model.forward(theta, coords.coords, inner), target.pixels);
    slice.loss[static_cast<std::size_t>(cell)] = loss;
    slice.psnr_db[static_cast<std::size_t>(cell)] = psnr(loss);
  };

  if (kernel == Kernel::kParallel) {
#pragma omp parallel
    {
      std::vector<double> theta(n);
#pragma omp for schedule(dynamic)
      for (int cell = 0; cell < cells; ++cell) eval_cell(cell, theta, Kernel::kParallel);
    }
  } else {
    std::vector<double> theta(n);
    for (int cell = 0; cell < cells; ++cell) eval_cell(cell, theta, Kernel::kReference);
  }
  return slice;
}

// ---------------------------------------------------------------------------

double pixel_loss_variance(std::span<const double> predictions, std::span<const double> target) {
  if (predictions.size() != target.size() || target.empty()) fail(ErrorCode::kDimensionMismatch, "variance");
  const double n = static_cast<double>(target.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = predictions[i] - target[i];
    mean += d * d;
  }
  mean /= n;
  double var = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = predictions[i] - target[i];
    const double e = d * d - mean;
    var += e * e;
  }
  return var / n;
}

BinProfile intensity_bins(std::span<const double> predictions, std::span<const double> target, int n_bins) {
  if (predictions.size() != target.size()) fail(ErrorCode::kDimensionMismatch, "bins");
  if (n_bins < 1) fail(ErrorCode::kInvalidArgument, "bin count");
  BinProfile prof;
  prof.mean_loss.assign(n_bins, 0.0);
  prof.count.assign(n_bins, 0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double z = target[i];
    if (z < 0.0 || z > 1.0) fail(ErrorCode::kOutOfRange, "bin target outside [0,1]");
    const int b = std::min(static_cast<int>(z * n_bins), n_bins - 1);
    const double d = predictions[i] - z;
    prof.mean_loss[b] += d * d;
    ++prof.count[b];
  }
  for (int b = 0; b < n_bins; ++b) {
    prof.mean_loss[b] = prof.count[b] ? prof.mean_loss[b] / static_cast<double>(prof.count[b])
                                      : std::numeric_limits<double>::quiet_NaN();
  }
  return prof;
}

Image error_map(const Image& predictions, const Image& target) {
  if (!predictions.same_shape(target)) fail(ErrorCode::kDimensionMismatch, "error map");
  Image out(target.width, target.height);
  double max_err = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    out.pixels[i] = std::fabs(predictions.pixels[i] - target.pixels[i]);
    max_err = std::max(max_err, out.pixels[i]);
  }
  if (max_err > 0.0) {
    for (double& e : out.pixels) e /= max_err;
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorCode::kDimensionMismatch, "spearman");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace nfl
