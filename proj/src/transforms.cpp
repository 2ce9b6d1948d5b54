#include "nflab/transforms.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "nflab/error.hpp"
#include "nflab/io.hpp"
#include "nflab/rng.hpp"

namespace nfl {

bool PermutationMap::is_bijection() const {
  std::vector<bool> seen(forward.size(), false);
  for (auto d : forward) {
    if (d >= forward.size() || seen[d]) return false;
    seen[d] = true;
  }
  return true;
}

std::vector<std::uint32_t> PermutationMap::inverse() const {
  std::vector<std::uint32_t> inv(forward.size());
  for (std::uint32_t i = 0; i < forward.size(); ++i) inv[forward[i]] = i;
  return inv;
}

std::string PermutationMap::serialize() const {
  std::string out = std::to_string(forward.size()) + "\n";
  out.reserve(forward.size() * 7);
  for (auto d : forward) {
    out += std::to_string(d);
    out += '\n';
  }
  return out;
}

PermutationMap PermutationMap::parse(std::string_view text) {
  std::vector<std::uint64_t> numbers;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\n' || *p == '\r' || *p == '\t')) ++p;
    if (p == end) break;
    std::uint64_t v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) fail(ErrorCode::kParse, "permutation file: non-numeric entry");
    numbers.push_back(v);
    p = next;
  }
  if (numbers.empty()) fail(ErrorCode::kTruncatedFile, "permutation file is empty");
  const auto n = numbers.front();
  if (numbers.size() - 1 != n) fail(ErrorCode::kTruncatedFile, "permutation file length mismatch");
  PermutationMap map;
  map.forward.reserve(n);
  for (std::size_t i = 1; i < numbers.size(); ++i) map.forward.push_back(static_cast<std::uint32_t>(numbers[i]));
  if (!map.is_bijection()) fail(ErrorCode::kParse, "permutation file is not a bijection");
  return map;
}

PermutationMap make_rpp(std::uint64_t seed, std::size_t n) {
  if (n < 1) fail(ErrorCode::kInvalidArgument, "permutation size must be positive");
  PermutationMap map;
  map.forward.resize(n);
  std::iota(map.forward.begin(), map.forward.end(), 0u);
  Rng rng(derive_seed(seed, "rpp"));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(map.forward[i], map.forward[j]);
  }
  return map;
}

std::vector<std::pair<int, int>> spiral_order(int side) {
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(side) * side);
  if (side < 1) return order;
  order.emplace_back(0, 0);
  for (int k = 2; k <= side; ++k) {
    const int e = k - 1;
    if (k % 2 == 0) {
      for (int r = 0; r <= e; ++r) order.emplace_back(r, e);
      for (int c = e - 1; c >= 0; --c) order.emplace_back(e, c);
    } else {
      for (int c = 0; c <= e; ++c) order.emplace_back(e, c);
      for (int r = e - 1; r >= 0; --r) order.emplace_back(r, e);
    }
  }
  return order;
}

std::vector<std::pair<int, int>> zigzag_order(int side) {
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(side) * side);
  for (int d = 0; d <= 2 * (side - 1); ++d) {
    const int r_lo = std::max(0, d - (side - 1));
    const int r_hi = std::min(d, side - 1);
    if (d % 2 == 0) {
      for (int r = r_hi; r >= r_lo; --r) order.emplace_back(r, d - r);
    } else {
      for (int r = r_lo; r <= r_hi; ++r) order.emplace_back(r, d - r);
    }
  }
  return order;
}

namespace {

PermutationMap sorted_layout(const Image& img, const std::vector<std::pair<int, int>>& dest) {
  if (img.width != img.height) fail(ErrorCode::kNonSquare, "sorted permutations need a square image");
  std::vector<std::uint32_t> order(img.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return img.pixels[a] < img.pixels[b]; });
  PermutationMap map;
  map.forward.resize(img.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    map.forward[order[k]] = static_cast<std::uint32_t>(dest[k].first * img.width + dest[k].second);
  }
  return map;
}

}  // namespace

PermutationMap make_spiral(const Image& img) { return sorted_layout(img, spiral_order(img.width)); }

PermutationMap make_zigzag(const Image& img) { return sorted_layout(img, zigzag_order(img.width)); }

// ---------------------------------------------------------------------------
// Transform

Transform Transform::identity() { return {}; }

Transform Transform::inversion() {
  Transform t;
  t.kind_ = TransformKind::kInversion;
  return t;
}

Transform Transform::standardization(double mu, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorCode::kZeroScale, "standardization sigma must be positive");
  Transform t;
  t.kind_ = TransformKind::kStandardization;
  t.mu_ = mu;
  t.sigma_ = sigma;
  return t;
}

Transform Transform::standardization_for(const Image& img) {
  const double n = static_cast<double>(img.size());
  double mu = 0.0;
  for (double z : img.pixels) mu += z;
  mu /= n;
  double var = 0.0;
  for (double z : img.pixels) var += (z - mu) * (z - mu);
  return standardization(mu, std::sqrt(var / n));
}

Transform Transform::linear_scale(double t) {
  if (t == 0.0 || !std::isfinite(t)) fail(ErrorCode::kZeroScale, "linear scale t must be nonzero");
  Transform tr;
  tr.kind_ = TransformKind::kLinearScale;
  tr.t_ = t;
  return tr;
}

Transform Transform::centering(double t) {
  if (t == 0.0 || !std::isfinite(t)) fail(ErrorCode::kZeroScale, "centering t must be nonzero");
  Transform tr;
  tr.kind_ = TransformKind::kCentering;
  tr.t_ = t;
  return tr;
}

Transform Transform::gamma(double g) {
  if (!(g > 0.0) || !std::isfinite(g)) fail(ErrorCode::kInvalidArgument, "gamma must be positive");
  Transform tr;
  tr.kind_ = TransformKind::kGamma;
  tr.gamma_ = g;
  return tr;
}

Transform Transform::permutation(TransformKind kind, PermutationMap map) {
  if (kind != TransformKind::kRandomPermutation && kind != TransformKind::kZigzagPermutation &&
      kind != TransformKind::kSpiralPermutation) {
    fail(ErrorCode::kInvalidArgument, "not a permutation kind");
  }
  if (!map.is_bijection()) fail(ErrorCode::kInvalidArgument, "permutation map is not a bijection");
  Transform tr;
  tr.kind_ = kind;
  tr.map_ = std::make_shared<const PermutationMap>(std::move(map));
  return tr;
}

Transform Transform::random_permutation(std::uint64_t seed, std::size_t n) {
  auto tr = permutation(TransformKind::kRandomPermutation, make_rpp(seed, n));
  tr.seed_ = seed;
  return tr;
}

Transform Transform::zigzag(const Image& img) {
  return permutation(TransformKind::kZigzagPermutation, make_zigzag(img));
}

Transform Transform::spiral(const Image& img) {
  return permutation(TransformKind::kSpiralPermutation, make_spiral(img));
}

std::optional<Affine> Transform::forward_affine() const {
  switch (kind_) {
    case TransformKind::kInversion: return Affine{-1.0, 1.0};
    case TransformKind::kStandardization: return Affine{1.0 / sigma_, -mu_ / sigma_};
    case TransformKind::kLinearScale: return Affine{t_, 0.0};
    case TransformKind::kCentering: return Affine{t_, -0.5 * t_};
    case TransformKind::kGamma: return std::nullopt;
    default: return Affine{};
  }
}

std::optional<Affine> Transform::inverse_affine() const {
  switch (kind_) {
    case TransformKind::kInversion: return Affine{-1.0, 1.0};
    case TransformKind::kStandardization: return Affine{sigma_, mu_};
    case TransformKind::kLinearScale: return Affine{1.0 / t_, 0.0};
    case TransformKind::kCentering: return Affine{1.0 / t_, 0.5};
    case TransformKind::kGamma: return std::nullopt;
    default: return Affine{};
  }
}

Image Transform::apply(const Image& img) const {
  Image out = img;
  if (map_) {
    if (map_->size() != img.size()) fail(ErrorCode::kDimensionMismatch, "permutation size vs image");
    for (std::size_t i = 0; i < img.size(); ++i) out.pixels[map_->forward[i]] = img.pixels[i];
    return out;
  }
  for (double& z : out.pixels) {
    switch (kind_) {
      case TransformKind::kInversion: z = 1.0 - z; break;
      case TransformKind::kStandardization: z = (z - mu_) / sigma_; break;
      case TransformKind::kLinearScale: z = t_ * z; break;
      case TransformKind::kCentering: z = t_ * (z - 0.5); break;
      case TransformKind::kGamma:
        if (z < 0.0) fail(ErrorCode::kNegativeIntensity, "gamma needs non-negative intensities");
        z = std::pow(z, 1.0 / gamma_);
        break;
      default: break;
    }
  }
  return out;
}

Image Transform::invert(const Image& img) const {
  Image out = img;
  if (map_) {
    if (map_->size() != img.size()) fail(ErrorCode::kDimensionMismatch, "permutation size vs image");
    for (std::size_t i = 0; i < img.size(); ++i) out.pixels[i] = img.pixels[map_->forward[i]];
    return out;
  }
  for (double& z : out.pixels) {
    switch (kind_) {
      case TransformKind::kInversion: z = 1.0 - z; break;
      case TransformKind::kStandardization: z = sigma_ * z + mu_; break;
      case TransformKind::kLinearScale: z = z / t_; break;
      case TransformKind::kCentering: z = z / t_ + 0.5; break;
      case TransformKind::kGamma:
        // Network outputs may stray below zero; the inverse power is taken on
        // the clamped value so reconstructions stay real.
        z = std::pow(std::max(z, 0.0), gamma_);
        break;
      default: break;
    }
  }
  return out;
}

std::string Transform::descriptor() const {
  switch (kind_) {
    case TransformKind::kIdentity: return "identity";
    case TransformKind::kInversion: return "inversion";
    case TransformKind::kStandardization:
      return "standardize:mu=" + format_double(mu_) + ",sigma=" + format_double(sigma_);
    case TransformKind::kLinearScale: return "scale:" + format_double(t_);
    case TransformKind::kCentering: return "center:" + format_double(t_);
    case TransformKind::kGamma: return "gamma:" + format_double(gamma_);
    case TransformKind::kRandomPermutation: return "rpp:" + std::to_string(seed_);
    case TransformKind::kZigzagPermutation: return "zigzag";
    case TransformKind::kSpiralPermutation: return "spiral";
  }
  return "identity";
}

// ---------------------------------------------------------------------------
// TransformSpec

namespace {

double parse_number(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::kParse, "bad " + std::string(what) + " parameter '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

TransformSpec TransformSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  const auto name = text.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  TransformSpec spec;
  auto need_arg = [&] {
    if (arg.empty()) fail(ErrorCode::kParse, std::string(name) + " needs a parameter, e.g. " + std::string(name) + ":2");
    return parse_number(arg, name);
  };
  auto no_arg = [&] {
    if (!arg.empty()) fail(ErrorCode::kParse, std::string(name) + " takes no parameter");
  };
  if (name == "identity" || name == "id") {
    no_arg();
    spec.kind = TransformKind::kIdentity;
  } else if (name == "inversion" || name == "invert") {
    no_arg();
    spec.kind = TransformKind::kInversion;
  } else if (name == "standardize" || name == "standardization") {
    no_arg();
    spec.kind = TransformKind::kStandardization;
  } else if (name == "scale") {
    spec.kind = TransformKind::kLinearScale;
    spec.param = need_arg();
    if (spec.param == 0.0) fail(ErrorCode::kZeroScale, "scale:0");
  } else if (name == "center") {
    spec.kind = TransformKind::kCentering;
    spec.param = need_arg();
    if (spec.param == 0.0) fail(ErrorCode::kZeroScale, "center:0");
  } else if (name == "gamma") {
    spec.kind = TransformKind::kGamma;
    spec.param = need_arg();
    if (!(spec.param > 0.0)) fail(ErrorCode::kInvalidArgument, "gamma must be positive");
  } else if (name == "rpp") {
    spec.kind = TransformKind::kRandomPermutation;
    if (!arg.empty()) {
      std::uint64_t s = 0;
      auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), s);
      if (ec != std::errc() || ptr != arg.data() + arg.size()) fail(ErrorCode::kParse, "rpp seed");
      spec.seed = s;
    }
  } else if (name == "zigzag") {
    no_arg();
    spec.kind = TransformKind::kZigzagPermutation;
  } else if (name == "spiral") {
    no_arg();
    spec.kind = TransformKind::kSpiralPermutation;
  } else {
    fail(ErrorCode::kParse, "unknown transform '" + std::string(text) + "'");
  }
  return spec;
}

std::string TransformSpec::name() const {
  switch (kind) {
    case TransformKind::kIdentity: return "identity";
    case TransformKind::kInversion: return "inversion";
    case TransformKind::kStandardization: return "standardize";
    case TransformKind::kLinearScale: return "scale:" + format_double(param);
    case TransformKind::kCentering: return "center:" + format_double(param);
    case TransformKind::kGamma: return "gamma:" + format_double(param);
    case TransformKind::kRandomPermutation: return seed ? "rpp:" + std::to_string(*seed) : "rpp";
    case TransformKind::kZigzagPermutation: return "zigzag";
    case TransformKind::kSpiralPermutation: return "spiral";
  }
  return "identity";
}

Transform TransformSpec::build(const Image& original, std::uint64_t fallback_seed) const {
  switch (kind) {
    case TransformKind::kIdentity: return Transform::identity();
    case TransformKind::kInversion: return Transform::inversion();
    case TransformKind::kStandardization: return Transform::standardization_for(original);
    case TransformKind::kLinearScale: return Transform::linear_scale(param);
    case TransformKind::kCentering: return Transform::centering(param);
    case TransformKind::kGamma: return Transform::gamma(param);
    case TransformKind::kRandomPermutation:
      return Transform::random_permutation(seed.value_or(fallback_seed), original.size());
    case TransformKind::kZigzagPermutation: return Transform::zigzag(original);
    case TransformKind::kSpiralPermutation: return Transform::spiral(original);
  }
  return Transform::identity();
}

// ---------------------------------------------------------------------------

std::vector<double> bake_affine_inverse(const ArchSpec& arch, std::span<const double> params, double a, double b) {
  const Model model(arch);
  if (params.size() != model.num_params()) fail(ErrorCode::kDimensionMismatch, "parameter count");
  const auto& last = model.output_layer();
  if (last.act != DenseLayer::Act::kNone || last.out != 1) {
    fail(ErrorCode::kNotAffineOutput, arch.descriptor());
  }
  std::vector<double> out(params.begin(), params.end());
  for (int k = 0; k < last.in; ++k) out[last.weight_offset + static_cast<std::size_t>(k)] *= a;
  out[last.bias_offset] = a * out[last.bias_offset] + b;
  return out;
}

}  // namespace nfl
