// Chunked kernels: each fixed-size chunk of the batch is pushed through the
// network as dense matrices, chunks run under OpenMP, and per-chunk partial
// gradients are summed in chunk order so results do not depend on the
// number of threads.

#include <Eigen/Dense>

#include <algorithm>
#include <vector>

#include "kernels/fast_sincos.hpp"
#include "nflab/models.hpp"

namespace nfl {

namespace {

using Mat = Eigen::MatrixXd;
using ConstMatMap = Eigen::Map<const Mat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// A = act(Z); D = d(act)/dZ when requested. Z is left untouched.
void activate_block(const DenseLayer& layer, const Mat& Z, Mat& A, Mat* D) {
  const auto n = static_cast<std::size_t>(Z.size());
  switch (layer.act) {
    case DenseLayer::Act::kSine:
      A.resize(Z.rows(), Z.cols());
      if (D) {
        D->resize(Z.rows(), Z.cols());
        kernels::sincos_block(Z.data(), n, layer.omega, A.data(), D->data(), layer.omega);
      } else {
        kernels::sin_block(Z.data(), n, layer.omega, A.data());
      }
      break;
    case DenseLayer::Act::kRelu:
      A = Z.cwiseMax(0.0);
      if (D) *D = (Z.array() > 0.0).cast<double>().matrix();
      break;
    case DenseLayer::Act::kNone:
      A = Z;
      break;
  }
}

// Owned copies of the dense weights. Eigen picks its vectorized reduction
// order from operand alignment, so mapping the caller's buffer directly would
// make the last bits depend on where that buffer happens to live.
struct DenseWeights {
  std::vector<Mat> W;
  std::vector<Eigen::VectorXd> b;

  DenseWeights(const std::vector<DenseLayer>& layers, const double* p) {
    for (const auto& layer : layers) {
      W.emplace_back(ConstMatMap(p + layer.weight_offset, layer.out, layer.in));
      b.emplace_back(ConstVecMap(p + layer.bias_offset, layer.out));
    }
  }
};

}  // namespace

double Model::parallel_loss_and_grad(std::span<const double> params, std::span<const double> coords,
                                     std::span<const double> targets, std::span<double> grad) const {
  const std::size_t n = targets.size();
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  const std::size_t dense_begin = layers_.front().weight_offset;
  const std::size_t dense_size = layout_.total - dense_begin;
  const std::size_t L = layers_.size();
  const double scale = 2.0 / static_cast<double>(n);
  const double* p = params.data();
  const bool hashed = arch_.is_hash();
  const DenseWeights weights(layers_, p);

  std::vector<double> partial(n_chunks * dense_size, 0.0);
  std::vector<double> chunk_loss(n_chunks, 0.0);
  Mat input_grad;
  if (hashed) input_grad.resize(encoding_dim_, static_cast<Eigen::Index>(n));

#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t begin = c * kChunk;
    const auto B = static_cast<Eigen::Index>(std::min(n, begin + kChunk) - begin);
    std::vector<Mat> acts(L + 1);
    std::vector<Mat> derivs(L);
    Mat pre;
    acts[0].resize(encoding_dim_, B);
    for (Eigen::Index i = 0; i < B; ++i) {
      encode(params, coords[2 * (begin + i)], coords[2 * (begin + i) + 1], acts[0].col(i).data());
    }
    for (std::size_t l = 0; l < L; ++l) {
      pre.noalias() = weights.W[l] * acts[l];
      pre.colwise() += weights.b[l];
      activate_block(layers_[l], pre, acts[l + 1], &derivs[l]);
    }
    Mat G = acts[L];
    for (Eigen::Index i = 0; i < B; ++i) G(0, i) -= targets[begin + i];
    chunk_loss[c] = G.squaredNorm();
    G *= scale;

    double* out = partial.data() + c * dense_size;
    Mat gW;
    Eigen::VectorXd gb;
    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = layers_[l];
      if (layer.act != DenseLayer::Act::kNone) G.array() *= derivs[l].array();
      gW.noalias() = G * acts[l].transpose();
      gb = G.rowwise().sum();
      std::copy(gW.data(), gW.data() + gW.size(), out + (layer.weight_offset - dense_begin));
      std::copy(gb.data(), gb.data() + gb.size(), out + (layer.bias_offset - dense_begin));
      if (l > 0 || hashed) {
        Mat next = weights.W[l].transpose() * G;
        G.swap(next);
      }
    }
    if (hashed) input_grad.middleCols(static_cast<Eigen::Index>(begin), B) = G;
  }

  double sum_sq = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    sum_sq += chunk_loss[c];
    const double* src = partial.data() + c * dense_size;
    double* dst = grad.data() + dense_begin;
    for (std::size_t k = 0; k < dense_size; ++k) dst[k] += src[k];
  }

  if (hashed) {
    const auto& h = std::get<HashMlpSpec>(arch_.variant);
    const std::size_t F = h.feat_dim;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = coords[2 * i];
      const double v = coords[2 * i + 1];
      const double* g = input_grad.col(static_cast<Eigen::Index>(i)).data();
      for (int l = 0; l < h.levels; ++l) {
        double* table = grad.data() + table_offset_ + static_cast<std::size_t>(l) * h.table_size() * F;
        const auto corners = hash_corners(h, l, u, v);
        for (int k = 0; k < 4; ++k) {
          for (std::size_t f = 0; f < F; ++f) table[corners.index[k] * F + f] += corners.weight[k] * g[l * F + f];
        }
      }
    }
  }
  return sum_sq / static_cast<double>(n);
}

std::vector<double> Model::parallel_forward(std::span<const double> params, std::span<const double> coords) const {
  const std::size_t n = coords.size() / 2;
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  const DenseWeights weights(layers_, params.data());
  std::vector<double> out(n);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t begin = c * kChunk;
    const auto B = static_cast<Eigen::Index>(std::min(n, begin + kChunk) - begin);
    Mat x(encoding_dim_, B);
    for (Eigen::Index i = 0; i < B; ++i) {
      encode(params, coords[2 * (begin + i)], coords[2 * (begin + i) + 1], x.col(i).data());
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Mat z = weights.W[l] * x;
      z.colwise() += weights.b[l];
      activate_block(layers_[l], z, x, nullptr);
    }
    std::copy(x.data(), x.data() + B, out.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

}  // namespace nfl
