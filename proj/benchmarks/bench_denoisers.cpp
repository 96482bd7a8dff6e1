#include <benchmark/benchmark.h>

#include "sda/diffusion.hpp"
#include "sda/gaussian.hpp"
#include "sda/storm.hpp"
#include "sda/tiling.hpp"

using namespace sda;

namespace {

StateField noise(const GridSpec& spec, Rng& rng) {
  StateField f(spec);
  for (auto& v : f.values()) v = rng.normal();
  return f;
}

StormDenoiser storm_model(int K) {
  StormConfig cfg;
  cfg.d_model = 32;
  cfg.n_layers = 2;
  cfg.K = K;
  Rng init(1);
  return StormDenoiser(init_storm(cfg, init, false));
}

TemporalContext context(const GridSpec& spec, int K, Rng& rng) {
  std::vector<StateField> frames;
  for (int k = 0; k < K; ++k) frames.push_back(noise(spec, rng));
  return TemporalContext(std::move(frames));
}

void BM_StormForward(benchmark::State& state) {
  const int edge = static_cast<int>(state.range(0));
  const int K = static_cast<int>(state.range(1));
  const StormDenoiser d = storm_model(K);
  const GridSpec spec = make_grid(edge, edge, 1, 2, K);
  Rng rng(2);
  const TemporalContext ctx = context(spec, K, rng);
  const StateField z = noise(spec, rng);
  for (auto _ : state) benchmark::DoNotOptimize(d.evaluate(z, 1.0, ctx));
  state.counters["tokens"] = spec.tokens();
}
BENCHMARK(BM_StormForward)->ArgsProduct({{16, 32}, {1, 2, 4}})->Unit(benchmark::kMillisecond);

void BM_StormVjp(benchmark::State& state) {
  const int edge = static_cast<int>(state.range(0));
  const StormDenoiser d = storm_model(2);
  const GridSpec spec = make_grid(edge, edge, 1, 2, 2);
  Rng rng(3);
  const TemporalContext ctx = context(spec, 2, rng);
  const StateField z = noise(spec, rng), u = noise(spec, rng);
  for (auto _ : state) benchmark::DoNotOptimize(d.vjp(z, 1.0, ctx, u));
}
BENCHMARK(BM_StormVjp)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TiledStorm(benchmark::State& state) {
  const int edge = static_cast<int>(state.range(0));
  const StormDenoiser d = storm_model(1);
  const GridSpec spec = make_grid(edge, edge, 1, 2, 1);
  Rng rng(4);
  const TemporalContext ctx = context(spec, 1, rng);
  const StateField z = noise(spec, rng);
  const TilePlan plan = plan_tiles(spec, 16, 4);
  for (auto _ : state) benchmark::DoNotOptimize(tiled_denoise(d, z, 1.0, ctx, plan));
  state.SetComplexityN(spec.tokens());
}
BENCHMARK(BM_TiledStorm)->RangeMultiplier(2)->Range(32, 256)->Complexity(benchmark::oN)->Unit(benchmark::kMillisecond);

void BM_GaussianStationary(benchmark::State& state) {
  const int edge = static_cast<int>(state.range(0));
  const GridSpec spec = make_grid(edge, edge, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::stationary(spec, {4.0, 1.0, 0.0}));
  Rng rng(5);
  const StateField z = noise(spec, rng);
  for (auto _ : state) benchmark::DoNotOptimize(g.evaluate(z, 1.0, {}));
}
BENCHMARK(BM_GaussianStationary)->RangeMultiplier(2)->Range(16, 256);

void BM_PriorSample(benchmark::State& state) {
  const GridSpec spec = make_grid(16, 16, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::stationary(spec, {4.0, 1.0, 0.0}));
  const NoiseSchedule sched = build_schedule(static_cast<int>(state.range(0)), 0.002, 10.0, 7.0);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Rng rng(6, seed++);
    benchmark::DoNotOptimize(sample_prior(g, {}, spec, sched, rng));
  }
}
BENCHMARK(BM_PriorSample)->Arg(20)->Arg(80)->Unit(benchmark::kMillisecond);

}  // namespace
