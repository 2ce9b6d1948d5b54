#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace nfl {

// Row-major grid of real intensities.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  Image(int w, int h, std::vector<double> values);

  std::size_t size() const { return pixels.size(); }
  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height;
  }
  bool operator==(const Image&) const = default;
};

// Decoded file contents before grayscale conversion. Samples are interleaved
// per pixel and already scaled to [0,1].
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (gray) or 3 (RGB)
  std::vector<double> samples;

  // Gray images only; throws kUnsupportedFormat for RGB.
  Image as_gray() const;
};

enum class CoordDomain { kUnit, kSymmetric };

struct CoordGrid {
  int width = 0;
  int height = 0;
  CoordDomain domain = CoordDomain::kUnit;
  std::vector<double> coords;  // interleaved (u, v), row-major

  std::size_t size() const { return coords.size() / 2; }
  double u(std::size_t i) const { return coords[2 * i]; }
  double v(std::size_t i) const { return coords[2 * i + 1]; }
};

/// Reads binary/ASCII PGM (P5/P2, maxval up to 65535) or 8-bit gray/RGB PNG.
RawImage load_image(const std::filesystem::path& path);

/// Center crop to `crop`x`crop`, convert RGB to gray with Rec.709 luminance
/// and optionally linearize sRGB. Gray input with the flag off is only cropped.
Image preprocess(const RawImage& raw, int crop, bool srgb_to_linear);
Image preprocess(const Image& gray, int crop, bool srgb_to_linear);

double srgb_to_linear(double c);

/// Writes an 8-bit P5 PGM. Out-of-range values are an error unless `clamp`.
void save_image(const Image& img, const std::filesystem::path& path, bool clamp);

/// Encodes the PGM bytes save_image would write.
std::vector<std::uint8_t> encode_pgm(const Image& img, bool clamp);

CoordGrid coord_grid(int width, int height, CoordDomain domain);

double mse(const Image& a, const Image& b);
double mse(std::span<const double> a, std::span<const double> b);

/// -10 log10(mse) with peak 1; +inf for mse == 0.
double psnr(double mse_value);

/// Band-limited noise with amplitude 1/f^exponent and seeded random phases,
/// min-max normalized to [0,1]. Square power-of-two sizes only.
Image gen_synthetic(std::uint64_t seed, int width, int height, double spectral_exponent);

struct SynthSpec {
  std::uint64_t seed = 0;
  int size = 128;
  double exponent = 1.0;
};

/// Parses "synth:seed=7,size=64,exp=2" (keys optional); nullopt for other text.
std::optional<SynthSpec> parse_synth_spec(std::string_view text);

/// A synthetic spec or an image file. Files are center-cropped to `crop`
/// (0 means the largest centered square) and converted to gray.
Image resolve_image(std::string_view source, int crop = 0, bool srgb_to_linear = false);

}  // namespace nfl
