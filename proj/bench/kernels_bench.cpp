// Serial reference path against the OpenMP path of each data-parallel kernel.

#include "twolevel/coarse_opt.hpp"
#include "twolevel/equilibrate.hpp"
#include "twolevel/fine_opt.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <random>

using namespace twolevel;

namespace {

struct Fixture {
  CartesianGrid grid;
  BoundarySpec bc;
  Material material;
  std::vector<double> rho;
  FESolution sol;

  explicit Fixture(int nx) : grid(nx, nx / 2, 1.0, 1.0) {
    bc.dirichlet = clamp_side(grid, kLeft);
    for (const auto& be : side_edges(grid, kRight)) bc.neumann.push_back({be.element, be.edge, Vec2(0, -1), Vec2(0, -1)});
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    rho.resize(grid.num_elements());
    for (double& r : rho) r = u(rng);
    FESystem sys(grid, bc, material);
    sol = sys.solve(rho, assemble_loads(grid, bc));
  }
};

const Fixture& fixture(int nx) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(nx);
  if (it == cache.end()) it = cache.emplace(nx, Fixture(nx)).first;
  return it->second;
}

Execution mode(const benchmark::State& state) { return state.range(1) ? Execution::parallel : Execution::serial; }

void label(benchmark::State& state) { state.SetLabel(state.range(1) ? "openmp" : "serial"); }

void BM_ElementForces(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(element_nodal_forces(f.grid, f.rho, f.material, f.sol.u, mode(state)));
  label(state);
}

void BM_Sensitivity(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sensitivity(f.grid, f.rho, f.material, f.sol.u, mode(state)));
  label(state);
}

void BM_Filter(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const auto s = sensitivity(f.grid, f.rho, f.material, f.sol.u, Execution::serial);
  for (auto _ : state) benchmark::DoNotOptimize(filter_sensitivities(f.grid, f.rho, s, 1.5, mode(state)));
  label(state);
}

void BM_Equilibrate(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const std::vector<std::uint8_t> voids(f.grid.num_elements(), 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(equilibrate_all(f.grid, f.bc, f.material, f.rho, f.sol.u, voids, mode(state)));
  label(state);
}

void BM_CellFarm(benchmark::State& state) {
  const CartesianGrid coarse(4, 2, 1.0, 1.0);
  const DensityField field = DensityField::uniform(coarse, 0.5);
  std::vector<ElementTractions> t(coarse.num_elements());
  for (auto& cell : t) {
    cell[kRight] = {Vec2(1.5, 0), Vec2(0.5, 0)};
    cell[kLeft] = {Vec2(-0.5, 0), Vec2(-1.5, 0)};
  }
  FineParams params;
  params.n = static_cast<int>(state.range(0));
  params.max_iterations = 10;
  FarmOptions options;
  options.exec = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(solve_all_cells(coarse, field, t, Material{}, params, options));
  label(state);
}

}  // namespace

BENCHMARK(BM_ElementForces)->ArgsProduct({{64, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Sensitivity)->ArgsProduct({{64, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Filter)->ArgsProduct({{64, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Equilibrate)->ArgsProduct({{64, 256}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CellFarm)->ArgsProduct({{16}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
