// Hot-path microbenchmarks: forward model application, likelihood gradients,
// denoisers, and generative-model passes.
#include <benchmark/benchmark.h>

#include "satrestore/cae.hpp"
#include "satrestore/denoiser.hpp"
#include "satrestore/forward_model.hpp"
#include "satrestore/image.hpp"
#include "satrestore/rng.hpp"

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

void BM_ApplyForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ForwardModel fm = bench_model(static_cast<int>(state.range(1)));
  const ImageGrid x = bench_image(n, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_forward(x, fm));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_ApplyForward)->Args({256, 1})->Args({256, 2})->Args({512, 2});

void BM_NllGradient(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ForwardModel fm = bench_model(2);
  const ImageGrid x = bench_image(n, 2);
  Rng rng(3);
  ImageGrid y = degrade(bench_image(n, 4), fm, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_neg_log_likelihood(x, y, fm));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_NllGradient)->Arg(256)->Arg(512);

void BM_Denoise(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Denoiser d = state.range(1) == 0 ? make_tv_denoiser() : make_dct_denoiser();
  const ImageGrid x = bench_image(n, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(denoise(x, 0.05, d));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_Denoise)->Args({256, 0})->Args({256, 1});

void BM_PsfFromMtf(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(psf_from_mtf({0.15, 21}));
  }
}
BENCHMARK(BM_PsfFromMtf);

void BM_AnalyticDecode(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const AnalyticCae model(n, n, 8, 0.5, 0.05);
  Rng rng(6);
  Tensor3 z(1, n, n);
  for (double& v : z.v) v = rng.gaussian();
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.decode(z));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_AnalyticDecode)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
