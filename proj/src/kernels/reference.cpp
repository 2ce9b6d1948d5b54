// Serial per-sample kernels. Gradients accumulate in ascending batch order;
// these are the ground truth the chunked kernels are tested against.

#include <numbers>
#include <vector>

#include "nflab/error.hpp"

#include "kernels/activation.hpp"
#include "nflab/models.hpp"

namespace nfl {

using kernels::activate;

double Model::reference_loss_and_grad(std::span<const double> params, std::span<const double> coords,
                                      std::span<const double> targets, std::span<double> grad) const {
  const std::size_t n = targets.size();
  const double* p = params.data();
  const std::size_t L = layers_.size();
  std::vector<std::vector<double>> acts(L + 1);
  std::vector<std::vector<double>> derivs(L);
  acts[0].resize(encoding_dim_);
  for (std::size_t l = 0; l < L; ++l) {
    acts[l + 1].resize(layers_[l].out);
    derivs[l].resize(layers_[l].out);
  }
  std::vector<double> g, g_prev;
  const double scale = 2.0 / static_cast<double>(n);
  double sum_sq = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const double u = coords[2 * i];
    const double v = coords[2 * i + 1];
    encode(params, u, v, acts[0].data());
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = layers_[l];
      const double* W = p + layer.weight_offset;
      const double* b = p + layer.bias_offset;
      for (int j = 0; j < layer.out; ++j) {
        double z = b[j];
        for (int k = 0; k < layer.in; ++k) z += W[static_cast<std::size_t>(k) * layer.out + j] * acts[l][k];
        acts[l + 1][j] = activate(layer.act, layer.omega, z, derivs[l][j]);
      }
    }
    const double r = acts[L][0] - targets[i];
    sum_sq += r * r;

    g.assign(1, scale * r);
    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = layers_[l];
      const double* W = p + layer.weight_offset;
      for (int j = 0; j < layer.out; ++j) g[j] *= derivs[l][j];
      double* gW = grad.data() + layer.weight_offset;
      double* gb = grad.data() + layer.bias_offset;
      for (int k = 0; k < layer.in; ++k) {
        for (int j = 0; j < layer.out; ++j) gW[static_cast<std::size_t>(k) * layer.out + j] += g[j] * acts[l][k];
      }
      for (int j = 0; j < layer.out; ++j) gb[j] += g[j];
      g_prev.assign(layer.in, 0.0);
      for (int k = 0; k < layer.in; ++k) {
        double acc = 0.0;
        for (int j = 0; j < layer.out; ++j) acc += W[static_cast<std::size_t>(k) * layer.out + j] * g[j];
        g_prev[k] = acc;
      }
      std::swap(g, g_prev);
    }
    if (const auto* h = std::get_if<HashMlpSpec>(&arch_.variant)) {
      const std::size_t F = h->feat_dim;
      for (int l = 0; l < h->levels; ++l) {
        double* table = grad.data() + table_offset_ + static_cast<std::size_t>(l) * h->table_size() * F;
        const auto c = hash_corners(*h, l, u, v);
        for (int k = 0; k < 4; ++k) {
          for (std::size_t f = 0; f < F; ++f) table[c.index[k] * F + f] += c.weight[k] * g[l * F + f];
        }
      }
    }
  }
  return sum_sq / static_cast<double>(n);
}

std::vector<double> Model::reference_forward(std::span<const double> params, std::span<const double> coords) const {
  const std::size_t n = coords.size() / 2;
  std::vector<double> out(n);
  std::vector<double> x(encoding_dim_), y;
  const double* p = params.data();
  for (std::size_t i = 0; i < n; ++i) {
    x.resize(encoding_dim_);
    encode(params, coords[2 * i], coords[2 * i + 1], x.data());
    for (const auto& layer : layers_) {
      y.assign(layer.out, 0.0);
      const double* W = p + layer.weight_offset;
      const double* b = p + layer.bias_offset;
      for (int j = 0; j < layer.out; ++j) {
        double z = b[j];
        for (int k = 0; k < layer.in; ++k) z += W[static_cast<std::size_t>(k) * layer.out + j] * x[k];
        double unused;
        y[j] = activate(layer.act, layer.omega, z, unused);
      }
      std::swap(x, y);
    }
    out[i] = x[0];
  }
  return out;
}

}  // namespace nfl

namespace nfl {

long double Model::loss_extended(std::span<const double> params, std::span<const double> coords,
                                 std::span<const double> targets) const {
  using T = long double;
  if (params.size() != layout_.total) fail(ErrorCode::kDimensionMismatch, "parameter count");
  if (coords.size() != 2 * targets.size() || targets.empty()) fail(ErrorCode::kDimensionMismatch, "coords/targets");
  check_domain(coords);
  const double* p = params.data();
  std::vector<T> x, y;
  T sum_sq = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const T u = coords[2 * i];
    const T v = coords[2 * i + 1];
    x.clear();
    if (const auto* pe = std::get_if<PeMlpSpec>(&arch_.variant)) {
      x.resize(4 * static_cast<std::size_t>(pe->m_bases));
      T freq = std::numbers::pi_v<T>;
      for (int j = 0; j < pe->m_bases; ++j, freq *= 2) {
        x[2 * j] = std::sin(freq * u);
        x[2 * j + 1] = std::cos(freq * u);
        x[2 * pe->m_bases + 2 * j] = std::sin(freq * v);
        x[2 * pe->m_bases + 2 * j + 1] = std::cos(freq * v);
      }
    } else if (const auto* h = std::get_if<HashMlpSpec>(&arch_.variant)) {
      const std::size_t F = h->feat_dim;
      x.assign(static_cast<std::size_t>(h->levels) * F, 0);
      for (int l = 0; l < h->levels; ++l) {
        const double* table = p + table_offset_ + static_cast<std::size_t>(l) * h->table_size() * F;
        const auto c = hash_corners(*h, l, coords[2 * i], coords[2 * i + 1]);
        for (std::size_t f = 0; f < F; ++f) {
          for (int k = 0; k < 4; ++k) x[l * F + f] += static_cast<T>(c.weight[k]) * table[c.index[k] * F + f];
        }
      }
    } else {
      x = {u, v};
    }
    for (const auto& layer : layers_) {
      y.assign(layer.out, 0);
      const double* W = p + layer.weight_offset;
      const double* b = p + layer.bias_offset;
      for (int j = 0; j < layer.out; ++j) {
        T z = b[j];
        for (int k = 0; k < layer.in; ++k) z += static_cast<T>(W[static_cast<std::size_t>(k) * layer.out + j]) * x[k];
        T unused;
        y[j] = activate(layer.act, layer.omega, z, unused);
      }
      std::swap(x, y);
    }
    const T r = x[0] - targets[i];
    sum_sq += r * r;
  }
  return sum_sq / static_cast<T>(targets.size());
}

}  // namespace nfl
