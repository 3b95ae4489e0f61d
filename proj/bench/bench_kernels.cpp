#include <benchmark/benchmark.h>

#include <vector>

#include "otcrf/analysis.hpp"
#include "otcrf/flow.hpp"
#include "otcrf/kernels.hpp"
#include "otcrf/numfield.hpp"

using namespace otcrf;

namespace {

const OTStructure& ot3() {
  static const OTStructure ot = build_ot_structure(PolynomialSpec{{-1, 0, 0, -1, 1}}, {{{2, 0, 2, 1}}, {{1, 0, 1, -1}}});
  return ot;
}

template <void (*Kernel)(const KernelInput&, const KernelOutput&)>
void BM_ma_rhs(benchmark::State& state) {
  FlowConfig cfg;
  cfg.N = static_cast<int>(state.range(0));
  cfg.rho = {{0.05, {1, 0}}};
  const FlowModel model(ot3(), cfg);
  const FlowState st = init_state(model);
  const std::size_t n = model.grid().size;
  std::vector<double> ref(n), rel(n), lam(n);
  const KernelInput in{&model.grid(), st.psi.data(), model.lf_block().data(), true, 0.5};
  for (auto _ : state) {
    Kernel(in, KernelOutput{ref.data(), rel.data(), lam.data()});
    benchmark::DoNotOptimize(rel.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n));
}

void BM_ma_rhs_serial(benchmark::State& s) { BM_ma_rhs<ma_rhs_serial>(s); }
void BM_ma_rhs_omp(benchmark::State& s) { BM_ma_rhs<ma_rhs_omp>(s); }

void BM_lattice_serial(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(lattice_approximate_serial({0.5, 0.5}, 0.1, static_cast<int>(state.range(0)), ot3().emb));
}

void BM_lattice_omp(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(lattice_approximate({0.5, 0.5}, 0.1, static_cast<int>(state.range(0)), ot3().emb));
}

void BM_enumerate_units(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_units(ot3().emb, static_cast<int>(state.range(0))));
}

}  // namespace

BENCHMARK(BM_ma_rhs_serial)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ma_rhs_omp)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_lattice_serial)->Arg(12)->Arg(30)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_lattice_omp)->Arg(12)->Arg(30)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_enumerate_units)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
