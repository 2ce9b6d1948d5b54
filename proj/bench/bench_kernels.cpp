#include <benchmark/benchmark.h>

#include "nflab/analysis.hpp"
#include "nflab/image.hpp"
#include "nflab/models.hpp"

namespace {

using nfl::Kernel;

const char* kArchs[] = {"siren-small", "pe-small", "hash-small"};

struct Fixture {
  nfl::ArchSpec arch;
  nfl::Model model;
  nfl::Image target;
  nfl::CoordGrid grid;
  std::vector<double> theta;

  Fixture(int arch, int side)
      : arch(nfl::ArchSpec::parse(kArchs[arch])),
        model(this->arch),
        target(nfl::gen_synthetic(1, side, side, 1.0)),
        grid(nfl::coord_grid(side, side, this->arch.domain())),
        theta(nfl::init_params(this->arch, 1).values) {}
};

Kernel kernel_of(const benchmark::State& state) { return state.range(2) ? Kernel::kParallel : Kernel::kReference; }

void set_labels(benchmark::State& state, int side) {
  state.SetLabel(std::string(kArchs[state.range(0)]) + (state.range(2) ? " parallel" : " reference"));
  state.SetItemsProcessed(state.iterations() * side * side);
}

void BM_LossAndGrad(benchmark::State& state) {
  const int side = static_cast<int>(state.range(1));
  Fixture f(static_cast<int>(state.range(0)), side);
  std::vector<double> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.model.loss_and_grad(f.theta, f.grid.coords, f.target.pixels, grad, kernel_of(state)));
  }
  set_labels(state, side);
}

void BM_Forward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(1));
  Fixture f(static_cast<int>(state.range(0)), side);
  for (auto _ : state) benchmark::DoNotOptimize(f.model.forward(f.theta, f.grid.coords, kernel_of(state)));
  set_labels(state, side);
}

void BM_Landscape(benchmark::State& state) {
  const int side = static_cast<int>(state.range(1));
  Fixture f(static_cast<int>(state.range(0)), side);
  const auto theta_b = nfl::init_params(f.arch, 2).values;
  nfl::GridSpec grid;
  grid.alpha_samples = 7;
  grid.beta_samples = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        nfl::landscape_slice(f.arch, f.target, f.theta, theta_b, nfl::DirectionMode::kRandom, grid, 3, kernel_of(state)));
  }
  set_labels(state, side);
}

void kernel_args(benchmark::internal::Benchmark* b) {
  for (int arch = 0; arch < 3; ++arch) {
    for (int side : {32, 64}) {
      for (int parallel : {0, 1}) b->Args({arch, side, parallel});
    }
  }
}

BENCHMARK(BM_LossAndGrad)->Apply(kernel_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward)->Apply(kernel_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Landscape)->Args({0, 32, 0})->Args({0, 32, 1})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
