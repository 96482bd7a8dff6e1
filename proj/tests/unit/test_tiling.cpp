#include "doctest.h"
#include "helpers.hpp"
#include "sda/gaussian.hpp"
#include "sda/storm.hpp"
#include "sda/tiling.hpp"

using namespace sda;
using namespace sda::test;

TEST_CASE("plan rectangles") {
  const GridSpec spec = make_grid(8, 8, 1, 1, 1);
  const TilePlan disjoint = plan_tiles(spec, 4, 0);
  REQUIRE(disjoint.size() == 4);
  std::vector<int> cover(64, 0);
  for (const Tile& t : disjoint.tiles()) {
    CHECK(t.ext == t.core);
    for (int r = t.core.row0; r < t.core.row1(); ++r)
      for (int c = t.core.col0; c < t.core.col1(); ++c) ++cover[static_cast<std::size_t>(r * 8 + c)];
  }
  for (int n : cover) CHECK(n == 1);

  const TilePlan halo = plan_tiles(spec, 4, 2);
  REQUIRE(halo.size() == 4);
  CHECK(halo.tiles()[0].ext == Region{0, 0, 6, 6});
  CHECK(halo.tiles()[3].ext == Region{2, 2, 6, 6});

  CHECK(plan_tiles(spec, 8, 0).size() == 1);
}

TEST_CASE("Hanning window") {
  const auto w = hanning(4);
  CHECK(w[0] == doctest::Approx(0.0));
  CHECK(w[1] == doctest::Approx(0.75));
  CHECK(w[2] == doctest::Approx(0.75));
  CHECK(w[3] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("blend weights form a partition of unity") {
  for (auto [edge, core, halo] : {std::tuple{8, 8, 0}, {8, 4, 2}, {16, 8, 4}, {20, 5, 3}, {12, 6, 5}, {12, 4, 6}}) {
    const GridSpec spec = make_grid(edge, edge, 1, 1, 1);
    const TilePlan plan = plan_tiles(spec, core, halo);
    const BlendWeights w = hanning_weights(plan);
    std::vector<double> sum(spec.cells(), 0.0);
    for (std::size_t t = 0; t < plan.size(); ++t) {
      const Region& e = plan.tiles()[t].ext;
      for (int r = 0; r < e.rows; ++r)
        for (int c = 0; c < e.cols; ++c)
          sum[static_cast<std::size_t>((e.row0 + r) * edge + e.col0 + c)] += w.at(t, r, c, e.cols);
    }
    for (double s : sum) CHECK(std::abs(s - 1.0) < 1e-12);
    if (plan.size() == 1)
      for (double v : w.normalized[0]) CHECK(v == 1.0);
  }
}

TEST_CASE("single-tile plan bit-equals the global path") {
  const GridSpec spec = make_grid(8, 8, 1, 2, 2);
  StormConfig cfg;
  cfg.d_model = 16;
  Rng init(1);
  const StormDenoiser d(init_storm(cfg, init, false));
  Rng rng(2);
  const TemporalContext ctx({normal_field(spec, rng), normal_field(spec, rng)});
  const StateField z = normal_field(spec, rng);
  CHECK(bit_equal(tiled_denoise(d, z, 0.7, ctx, plan_tiles(spec, 8, 0)), d.evaluate(z, 0.7, ctx)));
  CHECK(bit_equal(tiled_denoise(d, z, 0.7, ctx, plan_tiles(spec, 8, 4)), d.evaluate(z, 0.7, ctx)));
}

TEST_CASE("pointwise denoisers commute with tiling") {
  const GridSpec spec = make_grid(20, 20, 2, 1, 1);
  Rng rng(3);
  std::vector<double> mean(spec.size()), var(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    mean[i] = rng.normal();
    var[i] = 0.1 + rng.uniform();
  }
  const GaussianDenoiser g(GaussianPrior::diagonal(spec, mean, var));
  const StateField z = normal_field(spec, rng);
  const StateField global = g.evaluate(z, 0.6, {});
  for (auto [core, halo] : {std::pair{4, 0}, {5, 2}, {10, 3}, {20, 0}})
    CHECK(max_abs_diff(tiled_denoise(g, z, 0.6, {}, plan_tiles(spec, core, halo)), global) < 1e-10);
}

TEST_CASE("tiled discrepancy does not grow with the halo") {
  const GridSpec spec = make_grid(16, 16, 1, 1, 1);
  const GrfParams grf{4.0, 1.0, 0.0};
  const GaussianDenoiser g(GaussianPrior::stationary(spec, grf));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const double sigma = 1.0;
    const StateField z = sample_grf(spec, grf, rng) + sigma * normal_field(spec, rng);
    const StateField global = g.evaluate(z, sigma, {});
    double prev = 1e300;
    for (int halo : {0, 2, 4}) {
      const StateField tiled = tiled_denoise(g, z, sigma, {}, plan_tiles(spec, 8, halo));
      double mean = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) mean += std::abs(tiled[i] - global[i]) / z.size();
      CHECK(mean <= prev);
      prev = mean;
    }
  }
}

TEST_CASE("one tiled call couples cells at most core + 2 halo apart") {
  const GridSpec spec = make_grid(32, 32, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::stationary(spec, {6.0, 1.0, 0.0}));
  Rng rng(4);
  const StateField z = normal_field(spec, rng);
  for (auto [core, halo] : {std::pair{8, 0}, {8, 2}, {8, 4}}) {
    const TilePlan plan = plan_tiles(spec, core, halo);
    const StateField base = tiled_denoise(g, z, 1.0, {}, plan);
    for (auto [r0, c0] : {std::pair{13, 17}, {0, 0}, {31, 9}}) {
      StateField bumped = z;
      bumped.at(0, r0, c0) += 1.0;
      const StateField out = tiled_denoise(g, bumped, 1.0, {}, plan);
      std::vector<std::uint8_t> src(spec.cells(), 0);
      src[static_cast<std::size_t>(r0 * 32 + c0)] = 1;
      const auto closure = dependency_closure(plan, src);
      for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
          if (out.at(0, r, c) == base.at(0, r, c)) continue;
          CHECK(std::max(std::abs(r - r0), std::abs(c - c0)) <= core + 2 * halo);
          CHECK(closure[static_cast<std::size_t>(r * 32 + c)] == 1);
        }
    }
  }
}

TEST_CASE("propagation probe") {
  const GridSpec spec = make_grid(32, 32, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::stationary(spec, {4.0, 1.0, 0.0}));
  const NoiseSchedule sched = build_schedule(20, 0.002, 10.0, 7.0);
  const ProbeResult isolated = propagation_radius_probe(g, plan_tiles(spec, 8, 0), sched, {}, Rng(5));
  for (const auto& s : isolated.samples)
    if (s.ring > 0) CHECK(s.influence == 0.0);
  CHECK(isolated.max_ring() == 0);

  const ProbeResult full = propagation_radius_probe(g, plan_tiles(spec, 8, 8), sched, {}, Rng(5));
  CHECK(full.first_step(1) == 1);
  // Blending spreads a tile's halo into neighbouring cores: 2 * halo cells per step.
  for (int ring = 1; ring <= full.max_ring(); ++ring) CHECK(full.first_step(ring) >= (ring + 1) / 2);

  const ProbeResult half = propagation_radius_probe(g, plan_tiles(spec, 8, 4), sched, {}, Rng(5));
  for (int ring = 1; ring <= half.max_ring(); ++ring) CHECK(half.first_step(ring) >= ring);
}

TEST_CASE("tiled STORM flop count grows linearly in tokens") {
  StormConfig cfg;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.K = 1;
  Rng init(6);
  const StormDenoiser d(init_storm(cfg, init, false));
  std::vector<double> lx, ly;
  for (int edge : {16, 32, 64, 128, 256}) {
    const GridSpec spec = make_grid(edge, edge, 1, 2, 1);
    Rng rng(7);
    const TemporalContext ctx({normal_field(spec, rng)});
    flops::reset();
    tiled_denoise(d, normal_field(spec, rng), 1.0, ctx, plan_tiles(spec, 16, 4));
    lx.push_back(std::log(static_cast<double>(spec.tokens())));
    ly.push_back(std::log(static_cast<double>(flops::total())));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double slope = sxy / sxx;
  CHECK(lx.back() - lx.front() >= 2.0 * std::log(10.0));
  CHECK(slope >= 0.9);
  CHECK(slope <= 1.3);
}
