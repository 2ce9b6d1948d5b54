#include "nflab/models.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <numeric>

#include "nflab/error.hpp"
#include "nflab/io.hpp"
#include "nflab/rng.hpp"

namespace nfl {

// ---------------------------------------------------------------------------
// ArchSpec

int HashMlpSpec::resolution(int level) const {
  return static_cast<int>(std::floor(base_res * std::pow(growth, level)));
}

CoordDomain ArchSpec::domain() const {
  return is_siren() ? CoordDomain::kSymmetric : CoordDomain::kUnit;
}

std::string ArchSpec::descriptor() const {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SirenSpec>) {
          return "siren:hidden=" + std::to_string(s.hidden_layers) + ",width=" + std::to_string(s.width) +
                 ",omega0=" + format_double(s.omega0);
        } else if constexpr (std::is_same_v<T, PeMlpSpec>) {
          return "pe:m=" + std::to_string(s.m_bases) + ",hidden=" + std::to_string(s.hidden_layers) +
                 ",width=" + std::to_string(s.width);
        } else {
          return "hash:levels=" + std::to_string(s.levels) + ",base=" + std::to_string(s.base_res) +
                 ",growth=" + format_double(s.growth) + ",feat=" + std::to_string(s.feat_dim) +
                 ",log2t=" + std::to_string(s.table_log2) + ",hidden=" + std::to_string(s.mlp_hidden_layers) +
                 ",width=" + std::to_string(s.mlp_width);
        }
      },
      variant);
}

namespace {

std::map<std::string, std::string, std::less<>> parse_kv(std::string_view body) {
  std::map<std::string, std::string, std::less<>> kv;
  while (!body.empty()) {
    const auto comma = body.find(',');
    const auto item = body.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) fail(ErrorCode::kParse, "expected key=value in '" + std::string(item) + "'");
    kv.emplace(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  return kv;
}

template <typename T>
void take(std::map<std::string, std::string, std::less<>>& kv, std::string_view key, T& out) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  const std::string& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::kParse, "bad value for " + std::string(key) + ": " + s);
  }
  kv.erase(it);
}

void validate(const ArchSpec& arch) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SirenSpec>) {
          if (s.hidden_layers < 0 || s.width < 1 || !(s.omega0 > 0)) fail(ErrorCode::kInvalidArgument, "siren spec");
        } else if constexpr (std::is_same_v<T, PeMlpSpec>) {
          if (s.m_bases < 1 || s.hidden_layers < 0 || s.width < 1) fail(ErrorCode::kInvalidArgument, "pe spec");
        } else {
          if (s.levels < 1 || s.base_res < 1 || !(s.growth >= 1.0) || s.feat_dim < 1 || s.table_log2 < 1 ||
              s.table_log2 > 30 || s.mlp_hidden_layers < 0 || s.mlp_width < 1) {
            fail(ErrorCode::kInvalidArgument, "hash spec");
          }
        }
      },
      arch.variant);
}

}  // namespace

ArchSpec ArchSpec::parse(std::string_view text) {
  if (text == "siren-small") return {SirenSpec{}};
  if (text == "siren-paper") return {SirenSpec{3, 512, 30.0}};
  if (text == "pe-small") return {PeMlpSpec{}};
  if (text == "hash-small") return {HashMlpSpec{}};

  const auto colon = text.find(':');
  const auto kind = text.substr(0, colon);
  auto kv = parse_kv(colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1));
  ArchSpec arch;
  if (kind == "siren") {
    SirenSpec s;
    take(kv, "hidden", s.hidden_layers);
    take(kv, "width", s.width);
    take(kv, "omega0", s.omega0);
    arch.variant = s;
  } else if (kind == "pe") {
    PeMlpSpec s;
    take(kv, "m", s.m_bases);
    take(kv, "hidden", s.hidden_layers);
    take(kv, "width", s.width);
    arch.variant = s;
  } else if (kind == "hash") {
    HashMlpSpec s;
    take(kv, "levels", s.levels);
    take(kv, "base", s.base_res);
    take(kv, "growth", s.growth);
    take(kv, "feat", s.feat_dim);
    take(kv, "log2t", s.table_log2);
    take(kv, "hidden", s.mlp_hidden_layers);
    take(kv, "width", s.mlp_width);
    arch.variant = s;
  } else {
    fail(ErrorCode::kParse, "unknown architecture '" + std::string(text) + "'");
  }
  if (!kv.empty()) fail(ErrorCode::kParse, "unknown architecture key '" + kv.begin()->first + "'");
  validate(arch);
  return arch;
}

// ---------------------------------------------------------------------------
// Layout

std::size_t Slice::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

const Slice& Layout::find(std::string_view name) const {
  for (const auto& s : slices) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::kInvalidArgument, "no parameter slice named " + std::string(name));
}

namespace {

struct LayerShape {
  int in, out;
  DenseLayer::Act act;
  double omega;
};

std::vector<LayerShape> layer_shapes(const ArchSpec& arch) {
  std::vector<LayerShape> shapes;
  auto relu_mlp = [&](int in, int hidden, int width) {
    for (int l = 0; l < hidden; ++l) {
      shapes.push_back({l == 0 ? in : width, width, DenseLayer::Act::kRelu, 1.0});
    }
    shapes.push_back({hidden == 0 ? in : width, 1, DenseLayer::Act::kNone, 1.0});
  };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SirenSpec>) {
          shapes.push_back({2, s.width, DenseLayer::Act::kSine, s.omega0});
          for (int l = 0; l < s.hidden_layers; ++l) shapes.push_back({s.width, s.width, DenseLayer::Act::kSine, 1.0});
          shapes.push_back({s.width, 1, DenseLayer::Act::kNone, 1.0});
        } else if constexpr (std::is_same_v<T, PeMlpSpec>) {
          relu_mlp(4 * s.m_bases, s.hidden_layers, s.width);
        } else {
          relu_mlp(s.levels * s.feat_dim, s.mlp_hidden_layers, s.mlp_width);
        }
      },
      arch.variant);
  return shapes;
}

}  // namespace

Layout make_layout(const ArchSpec& arch) {
  Layout layout;
  auto add = [&](std::string name, std::vector<int> shape) {
    Slice s{std::move(name), layout.total, std::move(shape)};
    layout.total += s.size();
    layout.slices.push_back(std::move(s));
  };
  if (const auto* h = std::get_if<HashMlpSpec>(&arch.variant)) {
    for (int l = 0; l < h->levels; ++l) {
      add("hash.level" + std::to_string(l), {static_cast<int>(h->table_size()), h->feat_dim});
    }
  }
  const auto shapes = layer_shapes(arch);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    add("l" + std::to_string(l) + ".weight", {shapes[l].out, shapes[l].in});
    add("l" + std::to_string(l) + ".bias", {shapes[l].out});
  }
  return layout;
}

std::span<double> ParamVector::slice(std::string_view name) {
  const auto& s = layout.find(name);
  return std::span<double>(values).subspan(s.offset, s.size());
}

std::span<const double> ParamVector::slice(std::string_view name) const {
  const auto& s = layout.find(name);
  return std::span<const double>(values).subspan(s.offset, s.size());
}

std::vector<std::vector<double>> unflatten(const Layout& layout, std::span<const double> values) {
  if (values.size() != layout.total) fail(ErrorCode::kDimensionMismatch, "parameter count");
  std::vector<std::vector<double>> parts;
  parts.reserve(layout.slices.size());
  for (const auto& s : layout.slices) {
    auto sub = values.subspan(s.offset, s.size());
    parts.emplace_back(sub.begin(), sub.end());
  }
  return parts;
}

std::vector<double> flatten(const Layout& layout, const std::vector<std::vector<double>>& parts) {
  if (parts.size() != layout.slices.size()) fail(ErrorCode::kDimensionMismatch, "slice count");
  std::vector<double> values(layout.total);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& s = layout.slices[i];
    if (parts[i].size() != s.size()) fail(ErrorCode::kDimensionMismatch, "slice " + s.name);
    std::copy(parts[i].begin(), parts[i].end(), values.begin() + static_cast<std::ptrdiff_t>(s.offset));
  }
  return values;
}

// ---------------------------------------------------------------------------
// Initialization

ParamVector init_params(const ArchSpec& arch, std::uint64_t seed) {
  validate(arch);
  ParamVector p{std::vector<double>(), make_layout(arch)};
  p.values.assign(p.layout.total, 0.0);
  Rng rng(derive_seed(seed, "init"));
  const auto shapes = layer_shapes(arch);
  std::size_t layer = 0;
  for (const auto& s : p.layout.slices) {
    auto dst = std::span<double>(p.values).subspan(s.offset, s.size());
    if (s.name.starts_with("hash.")) {
      for (double& x : dst) x = rng.uniform(-1e-4, 1e-4);
    } else if (s.name.ends_with(".weight")) {
      const int fan_in = shapes[layer].in;
      double bound;
      if (const auto* siren = std::get_if<SirenSpec>(&arch.variant)) {
        bound = layer == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / siren->omega0;
      } else {
        bound = std::sqrt(6.0 / fan_in);
      }
      for (double& x : dst) x = rng.uniform(-bound, bound);
    } else {
      ++layer;  // biases stay zero; a bias closes its layer
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Encodings

std::vector<double> encode_positional(double u, double v, int m) {
  if (m < 1) fail(ErrorCode::kInvalidArgument, "positional encoding needs m >= 1");
  std::vector<double> out(4 * static_cast<std::size_t>(m));
  std::size_t k = 0;
  for (double p : {u, v}) {
    double freq = std::numbers::pi;
    for (int j = 0; j < m; ++j, freq *= 2.0) {
      out[k++] = std::sin(freq * p);
      out[k++] = std::cos(freq * p);
    }
  }
  return out;
}

std::uint32_t hash_index(std::int64_t x, std::int64_t y, int table_log2) {
  const auto ux = static_cast<std::uint32_t>(x);
  const auto uy = static_cast<std::uint32_t>(y);
  return (ux ^ (uy * 2654435761u)) & ((std::uint32_t{1} << table_log2) - 1u);
}

HashCorners hash_corners(const HashMlpSpec& spec, int level, double u, double v) {
  const double res = spec.resolution(level);
  const double px = u * res;
  const double py = v * res;
  const double fx0 = std::floor(px);
  const double fy0 = std::floor(py);
  const double fx = px - fx0;
  const double fy = py - fy0;
  const auto x0 = static_cast<std::int64_t>(fx0);
  const auto y0 = static_cast<std::int64_t>(fy0);
  HashCorners c;
  c.index = {hash_index(x0, y0, spec.table_log2), hash_index(x0 + 1, y0, spec.table_log2),
             hash_index(x0, y0 + 1, spec.table_log2), hash_index(x0 + 1, y0 + 1, spec.table_log2)};
  c.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  return c;
}

namespace {

void encode_hash_into(double u, double v, const double* tables, const HashMlpSpec& spec, double* out) {
  const std::size_t F = spec.feat_dim;
  for (int l = 0; l < spec.levels; ++l) {
    const double* table = tables + static_cast<std::size_t>(l) * spec.table_size() * F;
    const auto c = hash_corners(spec, l, u, v);
    for (std::size_t f = 0; f < F; ++f) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += c.weight[k] * table[c.index[k] * F + f];
      out[l * F + f] = acc;
    }
  }
}

}  // namespace

std::vector<double> encode_hash(double u, double v, std::span<const double> tables, const HashMlpSpec& spec) {
  if (tables.size() < static_cast<std::size_t>(spec.levels) * spec.table_size() * spec.feat_dim) {
    fail(ErrorCode::kDimensionMismatch, "hash tables too small for spec");
  }
  std::vector<double> out(static_cast<std::size_t>(spec.levels) * spec.feat_dim);
  encode_hash_into(u, v, tables.data(), spec, out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ArchSpec arch) : arch_(std::move(arch)), layout_(make_layout(arch_)) {
  validate(arch_);
  const auto shapes = layer_shapes(arch_);
  encoding_dim_ = shapes.front().in;
  std::size_t slice = 0;
  if (const auto* h = std::get_if<HashMlpSpec>(&arch_.variant)) {
    table_offset_ = layout_.slices.front().offset;
    slice = static_cast<std::size_t>(h->levels);
  }
  for (const auto& s : shapes) {
    DenseLayer layer;
    layer.in = s.in;
    layer.out = s.out;
    layer.act = s.act;
    layer.omega = s.omega;
    layer.weight_offset = layout_.slices[slice++].offset;
    layer.bias_offset = layout_.slices[slice++].offset;
    layers_.push_back(layer);
  }
}

void Model::check_domain(std::span<const double> coords) const {
  if (coords.size() % 2 != 0) fail(ErrorCode::kDimensionMismatch, "coords must be (u,v) pairs");
  const double lo = arch_.domain() == CoordDomain::kSymmetric ? -1.0 : 0.0;
  for (double c : coords) {
    if (!(c >= lo && c <= 1.0)) fail(ErrorCode::kDomainViolation, "coordinate " + format_double(c));
  }
}

void Model::encode(std::span<const double> params, double u, double v, double* out) const {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SirenSpec>) {
          out[0] = u;
          out[1] = v;
        } else if constexpr (std::is_same_v<T, PeMlpSpec>) {
          double freq = std::numbers::pi;
          for (int j = 0; j < s.m_bases; ++j, freq *= 2.0) {
            out[2 * j] = std::sin(freq * u);
            out[2 * j + 1] = std::cos(freq * u);
            out[2 * s.m_bases + 2 * j] = std::sin(freq * v);
            out[2 * s.m_bases + 2 * j + 1] = std::cos(freq * v);
          }
        } else {
          encode_hash_into(u, v, params.data() + table_offset_, s, out);
        }
      },
      arch_.variant);
}


std::vector<double> Model::forward(std::span<const double> params, std::span<const double> coords,
                                   Kernel kernel) const {
  if (params.size() != layout_.total) fail(ErrorCode::kDimensionMismatch, "parameter count");
  check_domain(coords);
  return kernel == Kernel::kParallel ? parallel_forward(params, coords) : reference_forward(params, coords);
}

double Model::loss_and_grad(std::span<const double> params, std::span<const double> coords,
                            std::span<const double> targets, std::vector<double>& grad, Kernel kernel) const {
  if (params.size() != layout_.total) fail(ErrorCode::kDimensionMismatch, "parameter count");
  if (targets.empty()) fail(ErrorCode::kInvalidArgument, "empty batch");
  if (coords.size() != 2 * targets.size()) fail(ErrorCode::kDimensionMismatch, "coords/targets");
  check_domain(coords);
  grad.assign(layout_.total, 0.0);
  return kernel == Kernel::kParallel ? parallel_loss_and_grad(params, coords, targets, grad)
                                     : reference_loss_and_grad(params, coords, targets, grad);
}

double Model::loss(std::span<const double> params, std::span<const double> coords,
                   std::span<const double> targets, Kernel kernel) const {
  if (coords.size() != 2 * targets.size()) fail(ErrorCode::kDimensionMismatch, "coords/targets");
  const auto pred = forward(params, coords, kernel);
  return mse(pred, targets);
}

std::vector<double> forward(const ArchSpec& arch, std::span<const double> params, std::span<const double> coords) {
  return Model(arch).forward(params, coords);
}

double loss_and_grad(const ArchSpec& arch, std::span<const double> params, std::span<const double> coords,
                     std::span<const double> targets, std::vector<double>& grad) {
  return Model(arch).loss_and_grad(params, coords, targets, grad);
}

std::vector<double> fd_gradient(const ArchSpec& arch, std::span<const double> params,
                                std::span<const double> coords, std::span<const double> targets, double h) {
  if (!(h > 0.0)) fail(ErrorCode::kInvalidArgument, "finite-difference step must be positive");
  const Model model(arch);
  std::vector<double> theta(params.begin(), params.end());
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    const double hi = saved + h;
    const double lo = saved - h;
    theta[i] = hi;
    const long double plus = model.loss_extended(theta, coords, targets);
    theta[i] = lo;
    const long double minus = model.loss_extended(theta, coords, targets);
    theta[i] = saved;
    out[i] = static_cast<double>((plus - minus) / (static_cast<long double>(hi) - lo));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos > in.size() || in.size() - pos < sizeof(T)) fail(ErrorCode::kTruncatedFile, "checkpoint");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ArchSpec& arch, std::span<const double> values) {
  const std::string desc = arch.descriptor();
  std::vector<std::uint8_t> out = {'N', 'F', 'L', 'D'};
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  put_le<std::uint64_t>(out, values.size());
  for (double v : values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ArchSpec& arch, std::span<const double> values) {
  write_file_atomic(path, encode_checkpoint(arch, values));
}

ParamVector load_checkpoint(const std::filesystem::path& path, ArchSpec* arch_out) {
  const auto bytes = read_file(path);
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "NFLD")) {
    fail(ErrorCode::kUnsupportedFormat, "not a checkpoint: " + path.string());
  }
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) fail(ErrorCode::kUnsupportedFormat, "checkpoint version " + std::to_string(version));
  const auto desc_len = get_le<std::uint32_t>(bytes, pos);
  if (bytes.size() - pos < desc_len) fail(ErrorCode::kTruncatedFile, "checkpoint descriptor");
  const std::string desc(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + desc_len));
  pos += desc_len;
  const ArchSpec arch = ArchSpec::parse(desc);
  const auto count = get_le<std::uint64_t>(bytes, pos);
  ParamVector p{{}, make_layout(arch)};
  if (count != p.layout.total) fail(ErrorCode::kDimensionMismatch, "checkpoint parameter count");
  if ((bytes.size() - pos) / 8 < count) fail(ErrorCode::kTruncatedFile, "checkpoint values");
  p.values.resize(count);
  for (auto& v : p.values) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
  if (arch_out) *arch_out = arch;
  return p;
}

}  // namespace nfl
