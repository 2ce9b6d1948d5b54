#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "grad_check.hpp"
#include "nflab/io.hpp"
#include "nflab/models.hpp"
#include "nflab/transforms.hpp"
#include "test_util.hpp"

using namespace nfl;

namespace {

const char* const kPresets[] = {"siren-small", "pe-small", "hash-small"};

// Small variants used for the gradient checks.
const char* const kCheckArchs[] = {"siren:hidden=2,width=32", "pe:m=4,hidden=2,width=32",
                                   "hash:levels=4,log2t=10,hidden=2,width=32"};

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("init_params: bounds and determinism") {
  const ArchSpec siren = ArchSpec::parse("siren-small");
  const ParamVector p = init_params(siren, 1);
  CHECK(max_abs(p.slice("l0.weight")) <= 0.5);
  const double hidden_bound = std::sqrt(6.0 / 128.0) / 30.0;
  CHECK(max_abs(p.slice("l1.weight")) <= hidden_bound);
  CHECK(max_abs(p.slice("l3.weight")) <= hidden_bound);
  CHECK(max_abs(p.slice("l0.bias")) == 0.0);
  CHECK(init_params(siren, 1).values == p.values);
  CHECK(init_params(siren, 2).values != p.values);

  const ArchSpec pe = ArchSpec::parse("pe-small");
  const ParamVector q = init_params(pe, 4);
  CHECK(max_abs(q.slice("l0.weight")) <= std::sqrt(6.0 / 32.0));
  CHECK(max_abs(q.slice("l1.weight")) <= std::sqrt(6.0 / 128.0));

  const ArchSpec hash = ArchSpec::parse("hash-small");
  const ParamVector h = init_params(hash, 4);
  CHECK(max_abs(h.slice("hash.level0")) <= 1e-4);
  CHECK(max_abs(h.slice("hash.level7")) <= 1e-4);
  CHECK(max_abs(h.slice("hash.level7")) > 0.0);
}

TEST_CASE("layout: disjoint cover and round trip") {
  Rng rng(3);
  for (const char* preset : kPresets) {
    const Layout layout = make_layout(ArchSpec::parse(preset));
    std::size_t next = 0;
    for (const auto& s : layout.slices) {
      CHECK(s.offset == next);
      next += s.size();
    }
    CHECK(next == layout.total);
    std::vector<double> v(layout.total);
    for (double& x : v) x = rng.normal();
    CHECK(flatten(layout, unflatten(layout, v)) == v);
  }
}

TEST_CASE("ArchSpec: domains, resolutions, descriptors") {
  CHECK(ArchSpec::parse("siren-small").domain() == CoordDomain::kSymmetric);
  CHECK(ArchSpec::parse("pe-small").domain() == CoordDomain::kUnit);
  CHECK(ArchSpec::parse("hash-small").domain() == CoordDomain::kUnit);
  const HashMlpSpec h;
  for (int l = 1; l < h.levels; ++l) CHECK(h.resolution(l) >= h.resolution(l - 1));
  CHECK(h.resolution(0) == 8);
  CHECK(h.resolution(2) == 18);
  for (const char* preset : {"siren-small", "siren-paper", "pe-small", "hash-small"}) {
    const ArchSpec a = ArchSpec::parse(preset);
    CHECK(ArchSpec::parse(a.descriptor()) == a);
  }
  CHECK(std::get<SirenSpec>(ArchSpec::parse("siren-paper").variant) == SirenSpec{3, 512, 30.0});
  CHECK_THROWS_CODE(ArchSpec::parse("mlp"), ErrorCode::kParse);
  CHECK_THROWS_CODE(ArchSpec::parse("siren:depth=3"), ErrorCode::kParse);
  CHECK_THROWS_CODE(ArchSpec::parse("siren:width=0"), ErrorCode::kInvalidArgument);
}

TEST_CASE("encode_positional") {
  const auto a = encode_positional(0.5, 0.0, 1);
  REQUIRE(a.size() == 4);
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(a[1]) < 1e-15);
  CHECK(a[2] == 0.0);
  CHECK(a[3] == 1.0);
  const auto z = encode_positional(0.0, 0.0, 5);
  for (std::size_t k = 0; k < z.size(); k += 2) {
    CHECK(z[k] == 0.0);
    CHECK(z[k + 1] == 1.0);
  }
  const auto b = encode_positional(0.25, 0.0, 2);
  CHECK(b[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(b[3]) < 1e-15);
  CHECK_THROWS_CODE(encode_positional(0.1, 0.1, 0), ErrorCode::kInvalidArgument);
}

TEST_CASE("encode_hash: vertices, centers, partition of unity, shared edges") {
  HashMlpSpec spec;
  spec.levels = 1;
  spec.table_log2 = 8;
  Rng rng(6);
  std::vector<double> table(spec.table_size() * spec.feat_dim);
  for (double& t : table) t = rng.normal();
  const int n = spec.resolution(0);
  auto feature = [&](std::int64_t x, std::int64_t y, int f) {
    return table[hash_index(x, y, spec.table_log2) * spec.feat_dim + f];
  };

  const auto at_vertex = encode_hash(3.0 / n, 5.0 / n, table, spec);
  const auto c = hash_corners(spec, 0, 3.0 / n, 5.0 / n);
  CHECK(c.weight == std::array<double, 4>{1.0, 0.0, 0.0, 0.0});
  for (int f = 0; f < spec.feat_dim; ++f) CHECK(at_vertex[f] == feature(3, 5, f));

  const auto center = encode_hash(3.5 / n, 5.5 / n, table, spec);
  for (int f = 0; f < spec.feat_dim; ++f) {
    const double mean = (feature(3, 5, f) + feature(4, 5, f) + feature(3, 6, f) + feature(4, 6, f)) / 4.0;
    CHECK(center[f] == doctest::Approx(mean).epsilon(1e-14));
  }

  for (int trial = 0; trial < 100; ++trial) {
    const auto w = hash_corners(HashMlpSpec{}, trial % 8, rng.uniform(), rng.uniform()).weight;
    CHECK(w[0] + w[1] + w[2] + w[3] == doctest::Approx(1.0).epsilon(1e-15));
  }

  // Point on the edge x = 3 shared by cells [2,3] and [3,4]: the left cell's
  // interpolant at fx = 1 must equal the encoding (computed in the right cell).
  for (int trial = 0; trial < 20; ++trial) {
    const double fy = rng.uniform();
    const double v = (5.0 + fy) / n;
    const auto enc = encode_hash(3.0 / n, v, table, spec);
    for (int f = 0; f < spec.feat_dim; ++f) {
      const double left = 0.0 * ((1 - fy) * feature(2, 5, f) + fy * feature(2, 6, f)) +
                          1.0 * ((1 - fy) * feature(3, 5, f) + fy * feature(3, 6, f));
      CHECK(enc[f] == doctest::Approx(left).epsilon(1e-12));
    }
  }
  CHECK(hash_index(1, 1, 10) == ((1u ^ 2654435761u) & 1023u));
}

TEST_CASE("forward: zero parameters give zero output") {
  Rng rng(1);
  for (const char* preset : kPresets) {
    const ArchSpec arch = ArchSpec::parse(preset);
    const Model model(arch);
    std::vector<double> coords, targets;
    test::random_batch(arch, rng, 50, coords, targets);
    const std::vector<double> zeros(model.num_params(), 0.0);
    for (auto kernel : {Kernel::kReference, Kernel::kParallel}) {
      for (double y : model.forward(zeros, coords, kernel)) CHECK(y == 0.0);
    }
  }
}

TEST_CASE("forward: Siren without hidden layers") {
  const ArchSpec arch = ArchSpec::parse("siren:hidden=0,width=3,omega0=30");
  const Model model(arch);
  ParamVector p = init_params(arch, 2);
  for (double& b : p.slice("l0.bias")) b = 0.1;
  p.slice("l1.bias")[0] = -0.2;
  const double u = 0.3, v = -0.6;
  const auto W0 = p.slice("l0.weight");  // 3 x 2 column-major
  const auto b0 = p.slice("l0.bias");
  const auto W1 = p.slice("l1.weight");
  double expected = p.slice("l1.bias")[0];
  for (int j = 0; j < 3; ++j) expected += W1[j] * std::sin(30.0 * (W0[j] * u + W0[3 + j] * v + b0[j]));
  const std::vector<double> xy{u, v};
  CHECK(model.forward(p.values, xy, Kernel::kReference)[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(model.forward(p.values, xy, Kernel::kParallel)[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("forward: hand-computed single-neuron PeMlp") {
  const ArchSpec arch = ArchSpec::parse("pe:m=1,hidden=1,width=1");
  const Model model(arch);
  ParamVector p = init_params(arch, 0);
  const std::array<double, 4> w0{0.7, -0.4, 1.1, 0.25};
  std::copy(w0.begin(), w0.end(), p.slice("l0.weight").begin());
  p.slice("l0.bias")[0] = 0.05;
  p.slice("l1.weight")[0] = -1.3;
  p.slice("l1.bias")[0] = 0.4;
  const double pi = std::numbers::pi;
  const std::vector<double> coords{0.1, 0.2, 0.5, 0.5, 0.9, 0.3, 0.0, 1.0, 0.33, 0.77};
  const auto got = model.forward(p.values, coords, Kernel::kReference);
  const auto par = model.forward(p.values, coords, Kernel::kParallel);
  for (int i = 0; i < 5; ++i) {
    const double u = coords[2 * i], v = coords[2 * i + 1];
    const double pre =
        0.7 * std::sin(pi * u) - 0.4 * std::cos(pi * u) + 1.1 * std::sin(pi * v) + 0.25 * std::cos(pi * v) + 0.05;
    const double expected = -1.3 * std::max(pre, 0.0) + 0.4;
    CHECK(std::abs(got[i] - expected) <= 1e-12);
    CHECK(std::abs(par[i] - expected) <= 1e-12);
  }
}

TEST_CASE("forward: batch permutation equivariance and Siren bound") {
  Rng rng(12);
  for (const char* preset : kPresets) {
    const ArchSpec arch = ArchSpec::parse(preset);
    const Model model(arch);
    const auto params = test::generic_params(arch, 9);
    std::vector<double> coords, targets;
    test::random_batch(arch, rng, 300, coords, targets);
    const auto y = model.forward(params, coords);
    const PermutationMap perm = make_rpp(4, 300);
    std::vector<double> shuffled(coords.size());
    for (std::size_t i = 0; i < 300; ++i) {
      shuffled[2 * perm.forward[i]] = coords[2 * i];
      shuffled[2 * perm.forward[i] + 1] = coords[2 * i + 1];
    }
    const auto ys = model.forward(params, shuffled);
    for (std::size_t i = 0; i < 300; ++i) CHECK(ys[perm.forward[i]] == y[i]);

    if (arch.is_siren()) {
      ParamVector p = init_params(arch, 9);
      p.values = params;
      const auto W = p.slice(model.layout().slices[model.layout().slices.size() - 2].name);
      double bound = std::abs(p.values.back());
      for (double w : W) bound += std::abs(w);
      for (double v : y) CHECK(std::abs(v) <= bound);
    }
  }
}

TEST_CASE("forward: domain violations") {
  const Model siren(ArchSpec::parse("siren-small"));
  const auto p = init_params(siren.arch(), 0).values;
  CHECK_THROWS_CODE(siren.forward(p, std::vector<double>{1.5, 0.0}), ErrorCode::kDomainViolation);
  const Model pe(ArchSpec::parse("pe-small"));
  CHECK_THROWS_CODE(pe.forward(init_params(pe.arch(), 0).values, std::vector<double>{-0.5, 0.2}),
                    ErrorCode::kDomainViolation);
}

TEST_CASE("loss_and_grad: minimum and residual linearity") {
  Rng rng(2);
  for (const char* preset : kPresets) {
    const ArchSpec arch = ArchSpec::parse(preset);
    const Model model(arch);
    const auto params = test::generic_params(arch, 1);
    std::vector<double> coords, targets;
    test::random_batch(arch, rng, 100, coords, targets);
    const auto y = model.forward(params, coords);
    std::vector<double> grad;
    CHECK(model.loss_and_grad(params, coords, y, grad) == 0.0);
    CHECK(max_abs(grad) == 0.0);

    std::vector<double> g1, g2;
    const double l1 = model.loss_and_grad(params, coords, targets, g1);
    std::vector<double> doubled(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) doubled[i] = y[i] - 2.0 * (y[i] - targets[i]);
    const double l2 = model.loss_and_grad(params, coords, doubled, g2);
    CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-12));
    const double scale = max_abs(g1);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g2[i] - 2.0 * g1[i]) <= 1e-12 * scale);
  }
}

TEST_CASE("loss_and_grad: finite-difference oracle at three seeds") {
  for (const char* text : kCheckArchs) {
    const ArchSpec arch = ArchSpec::parse(text);
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto r = test::gradient_check(arch, seed);
      INFO(text, " seed ", seed);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error_reference < 1e-4);
      CHECK(r.max_rel_error_parallel < 1e-4);
    }
  }
}

TEST_CASE("fd_gradient: step validation and Richardson rate on Siren") {
  const ArchSpec arch = ArchSpec::parse("siren:hidden=1,width=16");
  const auto params = test::generic_params(arch, 4);
  Rng rng(8);
  std::vector<double> coords, targets;
  test::random_batch(arch, rng, 32, coords, targets);
  std::vector<double> grad;
  Model(arch).loss_and_grad(params, coords, targets, grad);
  // Truncation error of central differences is O(h^2): halving h quarters it.
  std::vector<double> err;
  for (double h : {4e-3, 2e-3, 1e-3}) {
    const auto fd = fd_gradient(arch, params, coords, targets, h);
    double e = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) e = std::max(e, std::abs(fd[i] - grad[i]));
    err.push_back(e);
  }
  for (int k = 0; k < 2; ++k) {
    CHECK(err[k] / err[k + 1] > 3.0);
    CHECK(err[k] / err[k + 1] < 5.0);
  }
  CHECK_THROWS_CODE(fd_gradient(arch, params, coords, targets, 0.0), ErrorCode::kInvalidArgument);
}

TEST_CASE("reference and parallel kernels agree") {
  Rng rng(5);
  for (const char* preset : kPresets) {
    const ArchSpec arch = ArchSpec::parse(preset);
    const Model model(arch);
    const auto params = test::generic_params(arch, 7);
    for (std::size_t n : {1, 1000, 1500, 2048}) {
      std::vector<double> coords, targets;
      test::random_batch(arch, rng, n, coords, targets);
      std::vector<double> gr, gp;
      const double lr = model.loss_and_grad(params, coords, targets, gr, Kernel::kReference);
      const double lp = model.loss_and_grad(params, coords, targets, gp, Kernel::kParallel);
      CHECK(lp == doctest::Approx(lr).epsilon(1e-12));
      double grad_diff = 0.0;
      for (std::size_t i = 0; i < gr.size(); ++i) grad_diff = std::max(grad_diff, std::abs(gp[i] - gr[i]));
      CHECK(grad_diff <= 1e-12 * max_abs(gr));
      const auto yr = model.forward(params, coords, Kernel::kReference);
      const auto yp = model.forward(params, coords, Kernel::kParallel);
      double out_diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) out_diff = std::max(out_diff, std::abs(yp[i] - yr[i]));
      CHECK(out_diff <= 1e-12);
    }
  }
}

TEST_CASE("checkpoints: round trip and errors") {
  const auto dir = test::scratch_dir("models_ckpt");
  for (const char* preset : kPresets) {
    const ArchSpec arch = ArchSpec::parse(preset);
    const auto params = test::generic_params(arch, 3);
    save_checkpoint(dir / "a.nfld", arch, params);
    ArchSpec loaded_arch;
    const ParamVector loaded = load_checkpoint(dir / "a.nfld", &loaded_arch);
    CHECK(loaded_arch == arch);
    CHECK(loaded.values == params);
  }
  const ArchSpec arch = ArchSpec::parse("siren:hidden=0,width=2");
  const auto bytes = encode_checkpoint(arch, init_params(arch, 0).values);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "NFLD");
  CHECK(bytes[4] == kCheckpointVersion);

  auto bad = bytes;
  bad[0] = 'X';
  write_file_atomic(dir / "magic.nfld", bad);
  CHECK_THROWS_CODE(load_checkpoint(dir / "magic.nfld"), ErrorCode::kUnsupportedFormat);
  write_file_atomic(dir / "short.nfld", std::span<const std::uint8_t>(bytes).first(bytes.size() - 3));
  CHECK_THROWS_CODE(load_checkpoint(dir / "short.nfld"), ErrorCode::kTruncatedFile);
  CHECK_THROWS_CODE(load_checkpoint(dir / "none.nfld"), ErrorCode::kIo);
}
