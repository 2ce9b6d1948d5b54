#include <png.h>

#include <cmath>
#include <limits>

#include "nflab/analysis.hpp"
#include "nflab/image.hpp"
#include "nflab/io.hpp"
#include "test_util.hpp"

using namespace nfl;

namespace {

std::filesystem::path write_bytes(const std::filesystem::path& dir, const std::string& name, const std::string& bytes) {
  const auto path = dir / name;
  write_file_atomic(path, bytes);
  return path;
}

void write_png(const std::filesystem::path& path, int w, int h, int format, const std::vector<std::uint8_t>& data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = static_cast<png_uint_32>(format);
  REQUIRE(png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr) != 0);
}

}  // namespace

TEST_CASE("load_image: P2 scales by maxval") {
  const auto dir = test::scratch_dir("signal_p2");
  const auto raw = load_image(write_bytes(dir, "a.pgm", "P2\n# comment\n1 1\n255\n128\n"));
  const Image img = raw.as_gray();
  REQUIRE(img.size() == 1);
  CHECK(img.pixels[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
  CHECK(img.pixels[0] == doctest::Approx(0.50196).epsilon(1e-5));
}

TEST_CASE("load_image: P5 zeros and 16-bit samples") {
  const auto dir = test::scratch_dir("signal_p5");
  const auto zeros = load_image(write_bytes(dir, "z.pgm", std::string("P5\n2 2\n255\n") + std::string(4, '\0')));
  for (double p : zeros.as_gray().pixels) CHECK(p == 0.0);

  std::string wide = "P5\n2 1\n65535\n";
  wide += std::string("\xff\xff\x80\x00", 4);
  const Image img = load_image(write_bytes(dir, "w.pgm", wide)).as_gray();
  CHECK(img.pixels[0] == 1.0);
  CHECK(img.pixels[1] == doctest::Approx(32768.0 / 65535.0).epsilon(1e-15));
}

TEST_CASE("load_image: PNG gray and RGB") {
  const auto dir = test::scratch_dir("signal_png");
  write_png(dir / "g.png", 2, 2, PNG_FORMAT_GRAY, {0, 255, 255, 0});
  const Image g = load_image(dir / "g.png").as_gray();
  CHECK(g.pixels == std::vector<double>{0, 1, 1, 0});

  write_png(dir / "c.png", 1, 1, PNG_FORMAT_RGB, {255, 255, 255});
  const RawImage rgb = load_image(dir / "c.png");
  CHECK(rgb.channels == 3);
  CHECK(preprocess(rgb, 1, false).pixels[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("load_image: errors are distinct") {
  const auto dir = test::scratch_dir("signal_err");
  CHECK_THROWS_CODE(load_image(write_bytes(dir, "x.txt", "hello world")), ErrorCode::kUnsupportedFormat);
  CHECK_THROWS_CODE(load_image(write_bytes(dir, "t.pgm", "P5\n4 4\n255\nabc")), ErrorCode::kTruncatedFile);
  CHECK_THROWS_CODE(load_image(write_bytes(dir, "m.pgm", "P2\n1 1\n0\n0\n")), ErrorCode::kZeroMaxValue);
  CHECK_THROWS_CODE(load_image(dir / "missing.pgm"), ErrorCode::kIo);
}

TEST_CASE("preprocess: center crop, gray passthrough, idempotence") {
  Image img(4, 4);
  for (int i = 0; i < 16; ++i) img.pixels[i] = i / 16.0;
  const Image c = preprocess(img, 2, false);
  CHECK(c.width == 2);
  CHECK(c.pixels == std::vector<double>{img.at(1, 1), img.at(1, 2), img.at(2, 1), img.at(2, 2)});
  CHECK(preprocess(img, 4, false) == img);
  CHECK(preprocess(c, 2, false) == c);
  CHECK_THROWS_CODE(preprocess(img, 5, false), ErrorCode::kCropTooLarge);
}

TEST_CASE("preprocess: 5x5 crop 2 uses floor offsets") {
  Image img(5, 5);
  for (int i = 0; i < 25; ++i) img.pixels[i] = i / 25.0;
  const Image c = preprocess(img, 2, false);
  CHECK(c.at(0, 0) == img.at(1, 1));
  CHECK(c.at(1, 1) == img.at(2, 2));
}

TEST_CASE("srgb_to_linear: piecewise rule") {
  CHECK(srgb_to_linear(0.0) == 0.0);
  CHECK(srgb_to_linear(1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(srgb_to_linear(0.04) == doctest::Approx(0.04 / 12.92).epsilon(1e-15));
  CHECK(srgb_to_linear(0.5) == doctest::Approx(std::pow((0.5 + 0.055) / 1.055, 2.4)).epsilon(1e-15));
}

TEST_CASE("coord_grid: pixel centers") {
  const auto g = coord_grid(4, 4, CoordDomain::kUnit);
  CHECK(g.u(0) == 0.125);
  CHECK(g.v(0) == 0.125);
  const auto s = coord_grid(1, 1, CoordDomain::kSymmetric);
  CHECK(s.u(0) == 0.0);
  CHECK(s.v(0) == 0.0);
  const auto two = coord_grid(2, 2, CoordDomain::kUnit);
  CHECK(two.coords == std::vector<double>{0.25, 0.25, 0.75, 0.25, 0.25, 0.75, 0.75, 0.75});
  for (auto domain : {CoordDomain::kUnit, CoordDomain::kSymmetric}) {
    const auto big = coord_grid(7, 5, domain);
    const double lo = domain == CoordDomain::kUnit ? 0.0 : -1.0;
    for (double c : big.coords) {
      CHECK(c > lo);
      CHECK(c < 1.0);
    }
  }
}

TEST_CASE("mse and psnr") {
  CHECK(psnr(1e-5) == doctest::Approx(50.0).epsilon(1e-14));
  Image a(3, 3, 0.2);
  CHECK(mse(a, a) == 0.0);
  CHECK(psnr(0.0) == std::numeric_limits<double>::infinity());
  Image b(3, 3, 0.3);
  CHECK(mse(a, b) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(psnr(mse(a, b)) == doctest::Approx(20.0).epsilon(1e-10));
  CHECK_THROWS_CODE(mse(a, Image(2, 2)), ErrorCode::kDimensionMismatch);
  for (double m : {1e-7, 3.3e-4, 0.02, 0.5}) {
    CHECK(psnr(10 * m) == doctest::Approx(psnr(m) - 10.0).epsilon(1e-13));
    CHECK(psnr(m) > psnr(1.0001 * m));
  }
}

TEST_CASE("save_image: rounding, clamp, range errors") {
  const auto dir = test::scratch_dir("signal_save");
  Image img(3, 1);
  img.pixels = {0.5, 1.3, 0.0};
  const auto bytes = encode_pgm(img, true);
  const std::string header = "P5\n3 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 3);
  CHECK(bytes[header.size()] == 128);
  CHECK(bytes[header.size() + 1] == 255);
  CHECK(bytes[header.size() + 2] == 0);
  Image neg(1, 1, -0.2);
  CHECK_THROWS_CODE(save_image(neg, dir / "n.pgm", false), ErrorCode::kOutOfRange);
}

TEST_CASE("load/save/load is idempotent for 8-bit images") {
  const auto dir = test::scratch_dir("signal_roundtrip");
  Rng rng(4);
  std::string pgm = "P5\n5 3\n255\n";
  for (int i = 0; i < 15; ++i) pgm += static_cast<char>(rng.below(256));
  const Image a = load_image(write_bytes(dir, "a.pgm", pgm)).as_gray();
  save_image(a, dir / "b.pgm", true);
  const Image b = load_image(dir / "b.pgm").as_gray();
  CHECK(a == b);
  CHECK(read_text(dir / "b.pgm") == pgm);
}

TEST_CASE("gen_synthetic: determinism, range, spectrum") {
  const Image a = gen_synthetic(3, 64, 64, 1.0);
  const Image b = gen_synthetic(3, 64, 64, 1.0);
  CHECK(a == b);
  CHECK(!(a == gen_synthetic(4, 64, 64, 1.0)));
  const auto [lo, hi] = std::minmax_element(a.pixels.begin(), a.pixels.end());
  CHECK(*lo == 0.0);
  CHECK(*hi == 1.0);
  CHECK_THROWS_CODE(gen_synthetic(1, 48, 48, 1.0), ErrorCode::kNonPowerOfTwo);
  CHECK_THROWS_CODE(gen_synthetic(1, 64, 32, 1.0), ErrorCode::kNonSquare);

  // White noise: high-frequency energy is the same order as the total AC energy.
  const Image white = gen_synthetic(9, 64, 64, 0.0);
  const double hf_white = hf_intensity(white);
  double mean = 0.0;
  for (double p : white.pixels) mean += p;
  mean /= static_cast<double>(white.size());
  double total_ac = 0.0;
  for (double p : white.pixels) total_ac += (p - mean) * (p - mean);
  total_ac /= static_cast<double>(white.size() / 64);
  CHECK(hf_white > 0.5 * total_ac);
  CHECK(hf_white < total_ac);
  CHECK(hf_intensity(gen_synthetic(9, 64, 64, 2.0)) < hf_white);
}

TEST_CASE("resolve_image: synth specs and files") {
  const auto spec = parse_synth_spec("synth:seed=7,size=64,exp=2");
  REQUIRE(spec);
  CHECK(spec->seed == 7);
  CHECK(spec->size == 64);
  CHECK(spec->exponent == 2.0);
  CHECK(!parse_synth_spec("image.pgm"));
  CHECK_THROWS_CODE(parse_synth_spec("synth:colour=3"), ErrorCode::kParse);
  CHECK(resolve_image("synth:seed=7,size=64,exp=2") == gen_synthetic(7, 64, 64, 2.0));

  const auto dir = test::scratch_dir("signal_resolve");
  std::string pgm = "P5\n4 2\n255\n";
  for (int i = 0; i < 8; ++i) pgm += static_cast<char>(i * 30);
  const Image img = resolve_image(write_bytes(dir, "r.pgm", pgm).string());
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.at(0, 0) == doctest::Approx(30.0 / 255.0));
}
