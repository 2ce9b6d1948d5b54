#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nflab/image.hpp"

namespace nfl {

// Sine network. `hidden_layers` counts the width->width layers after the
// first sine layer, so 0 hidden layers is affine(sin(omega0 * affine(x))).
struct SirenSpec {
  int hidden_layers = 2;
  int width = 128;
  double omega0 = 30.0;
  bool operator==(const SirenSpec&) const = default;
};

// Sinusoidal positional encoding (4*m features) followed by a ReLU MLP with
// `hidden_layers` activated layers of `width` units and an affine output.
struct PeMlpSpec {
  int m_bases = 8;
  int hidden_layers = 2;
  int width = 128;
  bool operator==(const PeMlpSpec&) const = default;
};

// Multi-resolution hash grid (2D, bilinear) followed by a ReLU MLP.
struct HashMlpSpec {
  int levels = 8;
  int base_res = 8;
  double growth = 1.5;
  int feat_dim = 2;
  int table_log2 = 14;
  int mlp_hidden_layers = 2;
  int mlp_width = 64;
  bool operator==(const HashMlpSpec&) const = default;

  int resolution(int level) const;
  std::size_t table_size() const { return std::size_t{1} << table_log2; }
};

struct ArchSpec {
  std::variant<SirenSpec, PeMlpSpec, HashMlpSpec> variant;

  CoordDomain domain() const;
  int output_dim() const { return 1; }
  bool is_siren() const { return std::holds_alternative<SirenSpec>(variant); }
  bool is_hash() const { return std::holds_alternative<HashMlpSpec>(variant); }

  // Text form, e.g. "siren:hidden=2,width=128,omega0=30". parse() also
  // accepts the presets siren-small, siren-paper, pe-small, hash-small.
  std::string descriptor() const;
  static ArchSpec parse(std::string_view text);

  bool operator==(const ArchSpec&) const = default;
};

struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::vector<int> shape;

  std::size_t size() const;
};

struct Layout {
  std::vector<Slice> slices;
  std::size_t total = 0;

  const Slice& find(std::string_view name) const;
};

// Hash tables first (level order), then each dense layer's weight
// (out x in, column-major) followed by its bias.
Layout make_layout(const ArchSpec& arch);

struct ParamVector {
  std::vector<double> values;
  Layout layout;

  std::size_t size() const { return values.size(); }
  std::span<double> slice(std::string_view name);
  std::span<const double> slice(std::string_view name) const;
};

std::vector<std::vector<double>> unflatten(const Layout& layout, std::span<const double> values);
std::vector<double> flatten(const Layout& layout, const std::vector<std::vector<double>>& parts);

ParamVector init_params(const ArchSpec& arch, std::uint64_t seed);

/// [sin(2^k pi u), cos(2^k pi u)]_{k<m} followed by the same for v.
std::vector<double> encode_positional(double u, double v, int m);

struct HashCorners {
  std::array<std::uint32_t, 4> index;  // entry index within the level table
  std::array<double, 4> weight;        // bilinear weights, sum to 1
};

// Corner order: (x0,y0), (x0+1,y0), (x0,y0+1), (x0+1,y0+1).
HashCorners hash_corners(const HashMlpSpec& spec, int level, double u, double v);
std::uint32_t hash_index(std::int64_t x, std::int64_t y, int table_log2);

/// Concatenated L*F bilinearly interpolated features. `tables` is the
/// contiguous block of all level tables (level-major, entry-major, F fastest).
std::vector<double> encode_hash(double u, double v, std::span<const double> tables, const HashMlpSpec& spec);

// Reference kernels evaluate one sample at a time and accumulate gradients in
// ascending batch order. Parallel kernels process fixed-size chunks (with
// OpenMP across chunks) and reduce chunk partials in chunk order; results are
// independent of thread count and agree with the reference to ~1e-12.
enum class Kernel { kReference, kParallel };

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  enum class Act { kNone, kSine, kRelu } act = Act::kNone;
  double omega = 1.0;  // pre-activation scale (omega0 on the first sine layer)
};

class Model {
 public:
  explicit Model(ArchSpec arch);

  const ArchSpec& arch() const { return arch_; }
  const Layout& layout() const { return layout_; }
  std::size_t num_params() const { return layout_.total; }
  int encoding_dim() const { return encoding_dim_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& output_layer() const { return layers_.back(); }

  std::vector<double> forward(std::span<const double> params, std::span<const double> coords,
                              Kernel kernel = Kernel::kParallel) const;

  /// Mean squared error over the batch; writes the exact gradient into `grad`
  /// (resized/overwritten). Hash-table gradients only touch visited corners.
  double loss_and_grad(std::span<const double> params, std::span<const double> coords,
                       std::span<const double> targets, std::vector<double>& grad,
                       Kernel kernel = Kernel::kParallel) const;

  double loss(std::span<const double> params, std::span<const double> coords,
              std::span<const double> targets, Kernel kernel = Kernel::kParallel) const;

  /// Loss evaluated per sample in extended precision (finite-difference oracle).
  long double loss_extended(std::span<const double> params, std::span<const double> coords,
                            std::span<const double> targets) const;

  static constexpr std::size_t kChunk = 1024;

 private:
  void check_domain(std::span<const double> coords) const;
  void encode(std::span<const double> params, double u, double v, double* out) const;

  double reference_loss_and_grad(std::span<const double> params, std::span<const double> coords,
                                 std::span<const double> targets, std::span<double> grad) const;
  double parallel_loss_and_grad(std::span<const double> params, std::span<const double> coords,
                                std::span<const double> targets, std::span<double> grad) const;
  std::vector<double> parallel_forward(std::span<const double> params, std::span<const double> coords) const;
  std::vector<double> reference_forward(std::span<const double> params, std::span<const double> coords) const;

  ArchSpec arch_;
  Layout layout_;
  std::vector<DenseLayer> layers_;
  int encoding_dim_ = 2;
  std::size_t table_offset_ = 0;  // start of hash tables (HashMlp only)
};

std::vector<double> forward(const ArchSpec& arch, std::span<const double> params, std::span<const double> coords);
double loss_and_grad(const ArchSpec& arch, std::span<const double> params, std::span<const double> coords,
                     std::span<const double> targets, std::vector<double>& grad);

/// Central differences of the loss, one parameter at a time, evaluated in
/// extended precision and divided by the representable step.
std::vector<double> fd_gradient(const ArchSpec& arch, std::span<const double> params,
                                std::span<const double> coords, std::span<const double> targets, double h);

// Checkpoint: "NFLD", u32 version, u32 descriptor length + descriptor text,
// u64 parameter count, then f64 values. All little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ArchSpec& arch, std::span<const double> values);
void save_checkpoint(const std::filesystem::path& path, const ArchSpec& arch, std::span<const double> values);
ParamVector load_checkpoint(const std::filesystem::path& path, ArchSpec* arch_out = nullptr);

}  // namespace nfl
