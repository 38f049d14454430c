// Solver-level benchmarks: proximal steps, full restorations, variational
// objective evaluations, and tiled dispatch.
#include <benchmark/benchmark.h>

#include "satrestore/cae.hpp"
#include "satrestore/denoiser.hpp"
#include "satrestore/dpir.hpp"
#include "satrestore/forward_model.hpp"
#include "satrestore/rng.hpp"
#include "satrestore/tiling.hpp"
#include "satrestore/vble.hpp"

namespace {

using namespace satrestore;

ImageGrid bench_image(int n, std::uint64_t seed) {
  Rng rng(seed);
  ImageGrid x(n, n);
  for (double& v : x.data) v = rng.uniform();
  return x;
}

ForwardModel bench_model(int scale) {
  ForwardModel fm;
  fm.kernel = psf_from_mtf({0.15, 21});
  fm.scale = scale;
  fm.sigma0 = 0.01;
  fm.k_gain = 0.005;
  return fm;
}

void BM_ProxFixedSigma(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ForwardModel fm = bench_model(2);
  Rng rng(11);
  const ImageGrid u = bench_image(n, 12);
  const ImageGrid y = degrade(u, fm, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prox_datafit_fixed_sigma(y, u, 5.0, 0.05, fm));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_ProxFixedSigma)->Arg(256)->Arg(512);

void BM_ProxExactRefine(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ForwardModel fm = bench_model(2);
  Rng rng(13);
  const ImageGrid u = bench_image(n, 14);
  const ImageGrid y = degrade(u, fm, rng);
  const ImageGrid x0 = prox_datafit_fixed_sigma(y, u, 5.0, 0.05, fm);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prox_datafit_exact(y, u, 5.0, fm, x0, 5));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_ProxExactRefine)->Arg(256);

void BM_Restore(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ForwardModel fm = bench_model(2);
  Rng rng(15);
  const ImageGrid y = degrade(bench_image(n, 16), fm, rng);
  const Denoiser den = parse_denoiser_spec("tv");
  DpirConfig cfg;
  cfg.mode = state.range(1) == 0 ? DpirConfig::Mode::SatDpirTwoPhase
                                 : DpirConfig::Mode::DpirFullGd;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dpir_restore(y, fm, den, cfg));
  }
}
BENCHMARK(BM_Restore)->Args({128, 0})->Args({128, 1})->Unit(benchmark::kMillisecond);

void BM_ElboStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const AnalyticCae model(n, n, 8, 0.5, 0.05);
  ForwardModel fm;
  fm.kernel = identity_kernel();
  fm.scale = 1;
  fm.sigma0 = 0.05;
  const ImageGrid y = bench_image(n, 17);
  Tensor3 yt(1, n, n);
  yt.v = y.data;
  VariationalState st;
  st.z_bar = model.encode(yt);
  st.log_a = Tensor3(1, n, n);
  st.log_b = Tensor3(1, n, n);
  const VbleConfig cfg;
  Rng rng(18);
  std::uint64_t step = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(elbo_estimate(st, y, fm, model, cfg, rng.substream(step++)));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_ElboStep)->Arg(64)->Arg(128);

void BM_TiledRestore(benchmark::State& state) {
  const ForwardModel fm = bench_model(1);
  Rng rng(19);
  const ImageGrid y = degrade(bench_image(160, 20), fm, rng);
  const Denoiser den = parse_denoiser_spec("tv");
  const DpirConfig cfg;
  const int jobs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        restore_tiled(y, 1, 96, 32, jobs, [&](const ImageGrid& patch, std::size_t) {
          return dpir_restore(patch, fm, den, cfg);
        }));
  }
}
BENCHMARK(BM_TiledRestore)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
