#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nflab/image.hpp"
#include "nflab/models.hpp"

namespace nfl {

// forward[i] is the destination flat index of source pixel i.
struct PermutationMap {
  std::vector<std::uint32_t> forward;

  std::size_t size() const { return forward.size(); }
  bool is_bijection() const;
  std::vector<std::uint32_t> inverse() const;

  // Text form: n on the first line, then one forward index per line.
  std::string serialize() const;
  static PermutationMap parse(std::string_view text);
  bool operator==(const PermutationMap&) const = default;
};

/// Fisher-Yates shuffle of the identity driven by `seed`.
PermutationMap make_rpp(std::uint64_t seed, std::size_t n);

/// Ascending-intensity pixels laid out in growing L-shaped shells from the
/// top-left corner; even shells run clockwise, odd shells counterclockwise.
PermutationMap make_spiral(const Image& img);

/// Ascending-intensity pixels laid out along JPEG-style anti-diagonals.
PermutationMap make_zigzag(const Image& img);

// Destination (row, col) order used by the two sorted layouts.
std::vector<std::pair<int, int>> spiral_order(int side);
std::vector<std::pair<int, int>> zigzag_order(int side);

enum class TransformKind {
  kIdentity,
  kInversion,
  kStandardization,
  kLinearScale,
  kCentering,
  kGamma,
  kRandomPermutation,
  kZigzagPermutation,
  kSpiralPermutation,
};

// z -> scale * z + offset
struct Affine {
  double scale = 1.0;
  double offset = 0.0;
};

class Transform {
 public:
  static Transform identity();
  static Transform inversion();
  static Transform standardization(double mu, double sigma);
  static Transform standardization_for(const Image& img);
  static Transform linear_scale(double t);
  static Transform centering(double t);
  static Transform gamma(double g);
  static Transform random_permutation(std::uint64_t seed, std::size_t n);
  static Transform permutation(TransformKind kind, PermutationMap map);
  static Transform zigzag(const Image& img);
  static Transform spiral(const Image& img);

  TransformKind kind() const { return kind_; }
  bool is_permutation() const { return map_ != nullptr; }
  const PermutationMap* map() const { return map_.get(); }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  double t() const { return t_; }
  double gamma_value() const { return gamma_; }
  std::uint64_t seed() const { return seed_; }

  Image apply(const Image& img) const;
  Image invert(const Image& img) const;

  // Affine forms of the forward and inverse intensity maps (nullopt for
  // gamma; permutations report the identity).
  std::optional<Affine> forward_affine() const;
  std::optional<Affine> inverse_affine() const;

  // Canonical text, round-trips through TransformSpec for image-independent kinds.
  std::string descriptor() const;

 private:
  TransformKind kind_ = TransformKind::kIdentity;
  double mu_ = 0.0;
  double sigma_ = 1.0;
  double t_ = 1.0;
  double gamma_ = 1.0;
  std::uint64_t seed_ = 0;
  std::shared_ptr<const PermutationMap> map_;
};

// Parsed transform request, instantiated per image: "identity", "inversion",
// "standardize", "scale:<t>", "center:<t>", "gamma:<g>", "rpp", "rpp:<seed>",
// "zigzag", "spiral".
struct TransformSpec {
  TransformKind kind = TransformKind::kIdentity;
  double param = 1.0;
  std::optional<std::uint64_t> seed;

  static TransformSpec parse(std::string_view text);
  std::string name() const;
  // `seed` is used by rpp when the spec did not pin one.
  Transform build(const Image& original, std::uint64_t seed) const;
};

/// Rewrites the final affine layer so the network computes a*f(x)+b.
std::vector<double> bake_affine_inverse(const ArchSpec& arch, std::span<const double> params, double a, double b);

}  // namespace nfl
