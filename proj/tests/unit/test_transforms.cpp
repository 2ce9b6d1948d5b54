#include <algorithm>
#include <cmath>

#include "nflab/transforms.hpp"
#include "test_util.hpp"

using namespace nfl;

namespace {

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
  return m;
}

std::vector<std::pair<int, int>> pairs(std::initializer_list<std::pair<int, int>> list) { return list; }

}  // namespace

TEST_CASE("apply: intensity examples") {
  const Image q(1, 1, 0.25);
  CHECK(Transform::inversion().apply(q).pixels[0] == 0.75);
  CHECK(Transform::gamma(2.0).apply(q).pixels[0] == 0.5);
  CHECK(Transform::centering(2.0).apply(Image(1, 1, 0.75)).pixels[0] == 0.5);
  CHECK(Transform::linear_scale(0.5).invert(Image(1, 1, 0.3)).pixels[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(Transform::gamma(2.0).invert(Image(1, 1, 0.5)).pixels[0] == 0.25);

  const Image two(2, 1, std::vector<double>{0.0, 1.0});
  const Transform s = Transform::standardization_for(two);
  CHECK(s.mu() == 0.5);
  CHECK(s.sigma() == 0.5);
  CHECK(s.apply(two).pixels == std::vector<double>{-1.0, 1.0});
}

TEST_CASE("apply: errors") {
  CHECK_THROWS_CODE(Transform::gamma(2.0).apply(Image(1, 1, -0.1)), ErrorCode::kNegativeIntensity);
  CHECK_THROWS_CODE(Transform::standardization_for(Image(2, 2, 0.3)), ErrorCode::kZeroScale);
  CHECK_THROWS_CODE(Transform::linear_scale(0.0), ErrorCode::kZeroScale);
  CHECK_THROWS_CODE(Transform::zigzag(Image(3, 2)), ErrorCode::kNonSquare);
  CHECK_THROWS_CODE(Transform::spiral(Image(2, 3)), ErrorCode::kNonSquare);
  CHECK_THROWS_CODE(Transform::random_permutation(1, 4).apply(Image(3, 3)), ErrorCode::kDimensionMismatch);
}

TEST_CASE("round trips over random images") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Image x = test::dyadic_image(rng, 16, 16);
    for (const Transform& t : {Transform::inversion(), Transform::random_permutation(trial, x.size()),
                               Transform::spiral(x), Transform::zigzag(x), Transform::identity()}) {
      const Image y = t.apply(x);
      CHECK(y.same_shape(x));
      CHECK(t.invert(y) == x);
      CHECK(t.apply(t.invert(y)) == y);
    }
    const Image r = test::random_image(rng, 16, 16);
    for (const Transform& t : {Transform::standardization_for(r), Transform::linear_scale(0.37),
                               Transform::centering(2.0), Transform::gamma(2.2), Transform::gamma(0.5)}) {
      const Image y = t.apply(r);
      CHECK(y.same_shape(r));
      CHECK(max_abs_diff(t.invert(y), r) <= 1e-12);
    }
  }
}

TEST_CASE("permutations preserve the multiset, intensity kinds preserve positions") {
  Rng rng(5);
  const Image x = test::random_image(rng, 8, 8);
  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  for (const Transform& t : {Transform::random_permutation(3, 64), Transform::spiral(x), Transform::zigzag(x)}) {
    CHECK(sorted(t.apply(x).pixels) == sorted(x.pixels));
  }
  Image spike(8, 8, 0.2);
  spike.at(3, 5) = 0.9;
  for (const Transform& t : {Transform::inversion(), Transform::linear_scale(2.0), Transform::gamma(2.0)}) {
    const Image y = t.apply(spike);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (i != 3 * 8 + 5) CHECK(y.pixels[i] == y.pixels[0]);
    }
    CHECK(y.at(3, 5) != y.pixels[0]);
  }
}

TEST_CASE("make_rpp: small cases and determinism") {
  CHECK(make_rpp(9, 1).forward == std::vector<std::uint32_t>{0});
  CHECK(make_rpp(9, 1000) == make_rpp(9, 1000));
  CHECK(!(make_rpp(9, 1000) == make_rpp(10, 1000)));
}

TEST_CASE("make_rpp: fixed points average about one") {
  const std::size_t n = 10000;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PermutationMap m = make_rpp(seed, n);
    REQUIRE(m.is_bijection());
    for (std::size_t i = 0; i < n; ++i) total += m.forward[i] == i;
  }
  const double mean = total / 100.0;
  // Fixed points are ~Poisson(1): standard error of the mean is 0.1.
  CHECK(std::abs(mean - 1.0) < 0.3);
}

TEST_CASE("spiral and zigzag orders") {
  CHECK(spiral_order(3) == pairs({{0, 0}, {0, 1}, {1, 1}, {1, 0}, {2, 0}, {2, 1}, {2, 2}, {1, 2}, {0, 2}}));
  CHECK(zigzag_order(3) == pairs({{0, 0}, {0, 1}, {1, 0}, {2, 0}, {1, 1}, {0, 2}, {1, 2}, {2, 1}, {2, 2}}));
  CHECK(zigzag_order(2) == pairs({{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
  CHECK(spiral_order(1) == pairs({{0, 0}}));
  CHECK(make_spiral(Image(1, 1, 0.4)).forward == std::vector<std::uint32_t>{0});
  for (int side : {2, 5, 8, 13}) {
    for (const auto& order : {spiral_order(side), zigzag_order(side)}) {
      std::vector<int> seen(side * side, 0);
      for (auto [r, c] : order) ++seen[r * side + c];
      CHECK(std::all_of(seen.begin(), seen.end(), [](int k) { return k == 1; }));
    }
  }
}

TEST_CASE("sorted layouts place ascending intensities along their order") {
  Rng rng(21);
  for (int side : {3, 7, 16}) {
    const Image x = test::random_image(rng, side, side);
    for (bool spiral : {true, false}) {
      const PermutationMap m = spiral ? make_spiral(x) : make_zigzag(x);
      CHECK(m.is_bijection());
      const Image y = Transform::permutation(spiral ? TransformKind::kSpiralPermutation
                                                    : TransformKind::kZigzagPermutation,
                                             m)
                          .apply(x);
      const auto order = spiral ? spiral_order(side) : zigzag_order(side);
      for (std::size_t k = 1; k < order.size(); ++k) {
        CHECK(y.at(order[k - 1].first, order[k - 1].second) <= y.at(order[k].first, order[k].second));
      }
    }
  }
}

TEST_CASE("sorted layouts break ties by row-major index") {
  const Image flat(3, 3, 0.5);
  const PermutationMap s = make_spiral(flat);
  const auto order = spiral_order(3);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(s.forward[i] == static_cast<std::uint32_t>(order[i].first * 3 + order[i].second));
  }
  CHECK(Transform::zigzag(flat).apply(flat) == Transform::spiral(flat).apply(flat));
}

TEST_CASE("spiral and zigzag ignore the seed; rpp ignores intensities") {
  Rng rng(2);
  const Image a = test::random_image(rng, 8, 8);
  const Image b = test::random_image(rng, 8, 8);
  const TransformSpec spiral = TransformSpec::parse("spiral");
  CHECK(*spiral.build(a, 1).map() == *spiral.build(a, 99).map());
  const TransformSpec rpp = TransformSpec::parse("rpp");
  CHECK(*rpp.build(a, 7).map() == *rpp.build(b, 7).map());
  CHECK(!(*rpp.build(a, 7).map() == *rpp.build(a, 8).map()));
  CHECK(*TransformSpec::parse("rpp:123").build(a, 7).map() == make_rpp(123, 64));
}

TEST_CASE("permutation map serialization") {
  const PermutationMap m = make_rpp(4, 37);
  const std::string text = m.serialize();
  CHECK(text.substr(0, 3) == "37\n");
  CHECK(PermutationMap::parse(text) == m);
  CHECK(m.inverse()[m.forward[5]] == 5u);
  CHECK_THROWS_CODE(PermutationMap::parse("3\n0\n0\n1\n"), ErrorCode::kParse);
  CHECK_THROWS_CODE(PermutationMap::parse("3\n0\n1\n"), ErrorCode::kTruncatedFile);
  CHECK_THROWS_CODE(PermutationMap::parse("2\n0\nx\n"), ErrorCode::kParse);
}

TEST_CASE("TransformSpec parse and name") {
  for (const char* text : {"identity", "inversion", "standardize", "scale:0.5", "center:2", "gamma:2", "rpp", "rpp:5",
                           "zigzag", "spiral"}) {
    CHECK(TransformSpec::parse(TransformSpec::parse(text).name()).name() == TransformSpec::parse(text).name());
  }
  CHECK(TransformSpec::parse("scale:0.5").param == 0.5);
  CHECK_THROWS_CODE(TransformSpec::parse("flip"), ErrorCode::kParse);
  CHECK_THROWS_CODE(TransformSpec::parse("scale:abc"), ErrorCode::kParse);
}

TEST_CASE("bake_affine_inverse") {
  Rng rng(8);
  std::vector<double> coords(200);
  for (double& c : coords) c = rng.uniform(-0.99, 0.99);
  for (const char* preset : {"siren-small", "pe-small", "hash-small"}) {
    const ArchSpec arch = ArchSpec::parse(preset);
    std::vector<double> xs = coords;
    if (arch.domain() == CoordDomain::kUnit) {
      for (double& c : xs) c = 0.5 * (c + 1.0);
    }
    const Model model(arch);
    const ParamVector p = init_params(arch, 3);
    CHECK(bake_affine_inverse(arch, p.values, 1.0, 0.0) == p.values);

    const auto baked = bake_affine_inverse(arch, p.values, -1.0, 1.0);
    const auto f = model.forward(p.values, xs);
    const auto g = model.forward(baked, xs);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(g[i] == doctest::Approx(1.0 - f[i]).epsilon(1e-12));

    const auto twice = bake_affine_inverse(arch, bake_affine_inverse(arch, p.values, 0.5, 0.2), -3.0, 0.7);
    const auto once = bake_affine_inverse(arch, p.values, -1.5, -3.0 * 0.2 + 0.7);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-14));
  }
}

TEST_CASE("affine forms match apply") {
  const Image x(2, 1, std::vector<double>{0.2, 0.9});
  for (const Transform& t : {Transform::inversion(), Transform::linear_scale(3.0), Transform::centering(2.0),
                             Transform::standardization_for(x), Transform::identity()}) {
    const Affine fwd = *t.forward_affine();
    const Affine inv = *t.inverse_affine();
    const Image y = t.apply(x);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(y.pixels[i] == doctest::Approx(fwd.scale * x.pixels[i] + fwd.offset).epsilon(1e-15));
      CHECK(x.pixels[i] == doctest::Approx(inv.scale * y.pixels[i] + inv.offset).epsilon(1e-15));
    }
  }
  CHECK(!Transform::gamma(2.0).forward_affine());
}
