#include "nflab/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include "nflab/error.hpp"
#include "nflab/io.hpp"
#include "nflab/rng.hpp"

namespace nfl {

Image::Image(int w, int h, std::vector<double> values) : width(w), height(h), pixels(std::move(values)) {
  if (pixels.size() != static_cast<std::size_t>(w) * h) {
    fail(ErrorCode::kDimensionMismatch, "pixel count does not match width*height");
  }
}

Image RawImage::as_gray() const {
  if (channels != 1) fail(ErrorCode::kUnsupportedFormat, "expected a single-channel image");
  return Image(width, height, samples);
}

namespace {

class PgmReader {
 public:
  explicit PgmReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  // Next whitespace-delimited header token, skipping '#' comments.
  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail(ErrorCode::kTruncatedFile, "PGM header ends early");
    if (!std::isdigit(bytes_[pos_])) fail(ErrorCode::kUnsupportedFormat, "non-numeric PGM field");
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > std::numeric_limits<int>::max()) fail(ErrorCode::kUnsupportedFormat, "PGM field too large");
      ++pos_;
    }
    return value;
  }

  bool at_end() {
    skip_space_and_comments();
    return pos_ >= bytes_.size();
  }

  // Binary data starts after exactly one whitespace byte following maxval.
  std::size_t binary_start() const { return pos_ + 1; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

RawImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
  const bool binary = bytes[1] == '5';
  PgmReader reader(bytes);
  RawImage img;
  img.width = static_cast<int>(reader.next_int());
  img.height = static_cast<int>(reader.next_int());
  const long maxval = reader.next_int();
  if (maxval == 0) fail(ErrorCode::kZeroMaxValue, "PGM maxval is 0");
  if (maxval > 65535) fail(ErrorCode::kUnsupportedFormat, "PGM maxval above 65535");
  if (img.width <= 0 || img.height <= 0) fail(ErrorCode::kUnsupportedFormat, "PGM has zero size");
  img.channels = 1;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.samples.resize(n);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (binary) {
    const std::size_t start = reader.binary_start();
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    if (start > bytes.size() || bytes.size() - start < n * bpp) {
      fail(ErrorCode::kTruncatedFile, "P5 payload shorter than width*height");
    }
    for (std::size_t i = 0; i < n; ++i) {
      unsigned v = bpp == 1 ? bytes[start + i]
                            : (static_cast<unsigned>(bytes[start + 2 * i]) << 8) | bytes[start + 2 * i + 1];
      if (v > static_cast<unsigned>(maxval)) fail(ErrorCode::kUnsupportedFormat, "sample exceeds maxval");
      img.samples[i] = v * scale;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (reader.at_end()) fail(ErrorCode::kTruncatedFile, "P2 payload shorter than width*height");
      const long v = reader.next_int();
      if (v > maxval) fail(ErrorCode::kUnsupportedFormat, "sample exceeds maxval");
      img.samples[i] = v * scale;
    }
  }
  return img;
}

RawImage decode_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    fail(ErrorCode::kUnsupportedFormat, std::string("libpng: ") + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const bool truncated = std::string(png.message).find("EOF") != std::string::npos ||
                           std::string(png.message).find("truncat") != std::string::npos;
    png_image_free(&png);
    fail(truncated ? ErrorCode::kTruncatedFile : ErrorCode::kUnsupportedFormat,
         std::string("libpng: ") + png.message);
  }
  RawImage img;
  img.width = static_cast<int>(png.width);
  img.height = static_cast<int>(png.height);
  img.channels = color ? 3 : 1;
  img.samples.resize(buffer.size());
  std::transform(buffer.begin(), buffer.end(), img.samples.begin(),
                 [](std::uint8_t b) { return b / 255.0; });
  return img;
}

}  // namespace

RawImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '5')) {
    return decode_pgm(bytes);
  }
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) {
    return decode_png(path);
  }
  if (bytes.size() < 2) fail(ErrorCode::kTruncatedFile, path.string());
  fail(ErrorCode::kUnsupportedFormat, path.string());
}

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

Image preprocess(const RawImage& raw, int crop, bool srgb_to_linear_flag) {
  if (crop < 1 || crop > std::min(raw.width, raw.height)) {
    fail(ErrorCode::kCropTooLarge, "crop " + std::to_string(crop) + " for " + std::to_string(raw.width) +
                                       "x" + std::to_string(raw.height));
  }
  if (raw.channels != 1 && raw.channels != 3) fail(ErrorCode::kUnsupportedFormat, "channel count");
  const int row0 = (raw.height - crop) / 2;
  const int col0 = (raw.width - crop) / 2;
  Image out(crop, crop);
  for (int r = 0; r < crop; ++r) {
    for (int c = 0; c < crop; ++c) {
      const std::size_t src = (static_cast<std::size_t>(row0 + r) * raw.width + (col0 + c)) * raw.channels;
      double value;
      if (raw.channels == 1) {
        value = raw.samples[src];
        if (srgb_to_linear_flag) value = srgb_to_linear(value);
      } else {
        double rgb[3] = {raw.samples[src], raw.samples[src + 1], raw.samples[src + 2]};
        if (srgb_to_linear_flag) {
          for (double& ch : rgb) ch = srgb_to_linear(ch);
        }
        value = 0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2];
      }
      out.at(r, c) = std::clamp(value, 0.0, 1.0);
    }
  }
  return out;
}

Image preprocess(const Image& gray, int crop, bool srgb_to_linear_flag) {
  RawImage raw{gray.width, gray.height, 1, gray.pixels};
  return preprocess(raw, crop, srgb_to_linear_flag);
}

std::vector<std::uint8_t> encode_pgm(const Image& img, bool clamp) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.size());
  for (double z : img.pixels) {
    if (std::isnan(z)) fail(ErrorCode::kOutOfRange, "NaN intensity");
    if (clamp) {
      z = std::clamp(z, 0.0, 1.0);
    } else if (z < 0.0 || z > 1.0) {
      fail(ErrorCode::kOutOfRange, "intensity " + format_double(z) + " outside [0,1] without clamp");
    }
    bytes.push_back(static_cast<std::uint8_t>(std::floor(z * 255.0 + 0.5)));
  }
  return bytes;
}

void save_image(const Image& img, const std::filesystem::path& path, bool clamp) {
  const auto bytes = encode_pgm(img, clamp);
  write_file_atomic(path, bytes);
}

CoordGrid coord_grid(int width, int height, CoordDomain domain) {
  if (width < 1 || height < 1) fail(ErrorCode::kInvalidArgument, "grid size must be positive");
  CoordGrid grid{width, height, domain, {}};
  grid.coords.resize(static_cast<std::size_t>(width) * height * 2);
  std::size_t k = 0;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double u = (c + 0.5) / width;
      double v = (r + 0.5) / height;
      if (domain == CoordDomain::kSymmetric) {
        u = 2.0 * u - 1.0;
        v = 2.0 * v - 1.0;
      }
      grid.coords[k++] = u;
      grid.coords[k++] = v;
    }
  }
  return grid;
}

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDimensionMismatch, "mse operands differ in size");
  if (a.empty()) fail(ErrorCode::kDimensionMismatch, "mse of empty arrays");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) fail(ErrorCode::kDimensionMismatch, "mse operands differ in shape");
  return mse(std::span<const double>(a.pixels), std::span<const double>(b.pixels));
}

double psnr(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse_value);
}

Image gen_synthetic(std::uint64_t seed, int width, int height, double spectral_exponent) {
  if (width != height) fail(ErrorCode::kNonSquare, "synthetic images must be square");
  if (width < 1 || (width & (width - 1)) != 0) {
    fail(ErrorCode::kNonPowerOfTwo, "synthetic size " + std::to_string(width));
  }
  const int n = width;
  Rng rng(derive_seed(seed, "synthetic"));

  // Random-phase spectrum with radial amplitude 1/f^exponent, DC removed.
  using cplx = std::complex<double>;
  std::vector<cplx> spectrum(static_cast<std::size_t>(n) * n);
  for (int ky = 0; ky < n; ++ky) {
    const int fy = ky <= n / 2 ? ky : ky - n;
    for (int kx = 0; kx < n; ++kx) {
      const int fx = kx <= n / 2 ? kx : kx - n;
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      const double f = std::sqrt(static_cast<double>(fx * fx + fy * fy));
      const double amp = f > 0.0 ? std::pow(f, -spectral_exponent) : 0.0;
      spectrum[static_cast<std::size_t>(ky) * n + kx] = std::polar(amp, phase);
    }
  }

  std::vector<cplx> twiddle(n);
  for (int m = 0; m < n; ++m) twiddle[m] = std::polar(1.0, 2.0 * std::numbers::pi * m / n);

  // Separable inverse DFT: rows (kx -> col) then columns (ky -> row).
  std::vector<cplx> partial(static_cast<std::size_t>(n) * n);
  for (int ky = 0; ky < n; ++ky) {
    for (int c = 0; c < n; ++c) {
      cplx acc = 0.0;
      for (int kx = 0; kx < n; ++kx) {
        acc += spectrum[static_cast<std::size_t>(ky) * n + kx] * twiddle[(static_cast<long>(kx) * c) % n];
      }
      partial[static_cast<std::size_t>(ky) * n + c] = acc;
    }
  }
  Image img(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      cplx acc = 0.0;
      for (int ky = 0; ky < n; ++ky) {
        acc += partial[static_cast<std::size_t>(ky) * n + c] * twiddle[(static_cast<long>(ky) * r) % n];
      }
      img.at(r, c) = acc.real();
    }
  }

  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double min_v = *lo;
  const double range = *hi - *lo;
  for (double& z : img.pixels) z = range > 0.0 ? (z - min_v) / range : 0.0;
  return img;
}

}  // namespace nfl

namespace nfl {

std::optional<SynthSpec> parse_synth_spec(std::string_view text) {
  constexpr std::string_view kPrefix = "synth:";
  if (text.substr(0, kPrefix.size()) != kPrefix) {
    if (text == "synth") return SynthSpec{};
    return std::nullopt;
  }
  SynthSpec spec;
  std::string_view rest = text.substr(kPrefix.size());
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::kParse, "synthetic spec item without '=': " + std::string(item));
    const std::string key(item.substr(0, eq));
    const std::string value(item.substr(eq + 1));
    try {
      std::size_t used = 0;
      if (key == "seed") {
        spec.seed = std::stoull(value, &used);
      } else if (key == "size") {
        spec.size = std::stoi(value, &used);
      } else if (key == "exp") {
        spec.exponent = std::stod(value, &used);
      } else {
        fail(ErrorCode::kParse, "unknown synthetic spec key: " + key);
      }
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::logic_error&) {
      fail(ErrorCode::kParse, "bad value for synthetic spec key " + key + ": " + value);
    }
  }
  return spec;
}

Image resolve_image(std::string_view source, int crop, bool srgb) {
  if (const auto synth = parse_synth_spec(source)) {
    Image img = gen_synthetic(synth->seed, synth->size, synth->size, synth->exponent);
    return crop > 0 && crop != synth->size ? preprocess(img, crop, false) : img;
  }
  const RawImage raw = load_image(std::filesystem::path(std::string(source)));
  return preprocess(raw, crop > 0 ? crop : std::min(raw.width, raw.height), srgb);
}

}  // namespace nfl
