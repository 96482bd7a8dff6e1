#include "doctest.h"
#include "helpers.hpp"
#include "sda/bench.hpp"
#include "sda/error.hpp"
#include "sda/storm.hpp"
#include "sda/tiling.hpp"

using namespace sda;
using namespace sda::test;

namespace {

CostModel model(Variant v, double N, double K, double d, double M = 0) {
  CostModel m;
  m.variant = v;
  m.N = N;
  m.K = K;
  m.d_model = d;
  m.M = M;
  m.n_layers = 1;
  return m;
}

}  // namespace

TEST_CASE("attention flop formulas") {
  CHECK(count_attention_flops(model(Variant::timesformer, 4, 2, 1)) == 96.0);
  CHECK(count_attention_flops(model(Variant::vit_global, 4, 2, 1)) == 2.0 * 64.0);
  CHECK(count_attention_flops(model(Variant::storm, 10, 7, 3, 0)) == 2.0 * 100.0 * 3.0);
  CHECK(count_attention_flops(model(Variant::storm, 10, 7, 3, 4)) == 2.0 * 100 * 3 + 2.0 * 10 * 4 * 3);

  CostModel tiled = model(Variant::storm_tiled, 36, 3, 8, 9);
  tiled.tiles = 1;
  tiled.tile_tokens = 36;
  CHECK(count_attention_flops(tiled) == count_attention_flops(model(Variant::storm, 36, 3, 8, 9)));

  CostModel layered = model(Variant::vit_global, 4, 2, 1);
  layered.n_layers = 3;
  CHECK(count_attention_flops(layered) == 3 * 128.0);
  CHECK_THROWS_AS(count_attention_flops(model(Variant::storm, -1, 1, 1)), ConfigError);
}

TEST_CASE("counted flops match the cost model and are deterministic") {
  ScalingConfig sc;
  sc.variants = {Variant::vit_global, Variant::timesformer, Variant::storm, Variant::storm_tiled};
  sc.K = 2;
  sc.d_model = 8;
  sc.repeats = 1;
  sc.warmup = 0;
  sc.tile_core = 8;
  sc.tile_halo = 2;
  for (Variant v : sc.variants) {
    for (int edge : {16, 24}) {
      const BenchRecord a = bench_point(sc, v, edge);
      const BenchRecord b = bench_point(sc, v, edge);
      double expect = count_attention_flops(cost_model_for(sc, v, edge));
      if (v == Variant::storm_tiled) {
        // Border tiles are clamped, so sum the exact per-tile cost instead.
        expect = 0.0;
        const TilePlan plan = plan_tiles(make_grid(edge, edge, 1, sc.patch, sc.K), sc.tile_core, sc.tile_halo);
        for (const Tile& t : plan.tiles()) {
          const int tr = t.ext.rows / sc.patch, tc = t.ext.cols / sc.patch;
          const double n = static_cast<double>(tr) * tc;
          expect += 2.0 * n * n * sc.d_model + 2.0 * n * compressed_tokens(tr, tc) * sc.d_model;
        }
        expect *= sc.n_layers;
      }
      CHECK(std::abs(static_cast<double>(a.attention_flops) - expect) <= 0.01 * expect);
      CHECK(a.flops == b.flops);
      CHECK(a.attention_flops == b.attention_flops);
      CHECK(a.tokens == a.N * a.K);
    }
  }
}

TEST_CASE("feasibility frontier") {
  CostModel base = model(Variant::timesformer, 0, 1, 32);
  CHECK(feasibility_frontier(base, {64, 256}, 0.0).empty());

  // N^2-dominated regime: doubling N more than halves the feasible K.
  const auto tf = feasibility_frontier(base, {4096, 8192}, 1e12);
  REQUIRE(tf.size() == 2);
  CHECK(tf[1].K_max < 0.5 * tf[0].K_max);

  // STORM: the per-frame cost is linear in N, so K never meets an N^2 term.
  for (double N : {256.0, 1024.0, 4096.0}) {
    CostModel s = model(Variant::storm, N, 10, 32, std::ceil(N / 4));
    CostModel s2 = s;
    s2.K = 11;
    CostModel t = s;
    t.N = 2 * N;
    t.M = std::ceil(2 * N / 4);
    CostModel t2 = t;
    t2.K = 11;
    const double per_frame = count_total_flops(s2) - count_total_flops(s);
    const double per_frame_2n = count_total_flops(t2) - count_total_flops(t);
    CHECK(per_frame_2n == doctest::Approx(2.0 * per_frame));
  }
  const auto st = feasibility_frontier(model(Variant::storm, 0, 1, 32), {4096}, 1e12);
  REQUIRE(st.size() == 1);
  CHECK(st[0].K_max > 10 * tf[0].K_max);
  CHECK(frontier_csv(st).rfind("variant,budget,N,K_max\n", 0) == 0);
}

TEST_CASE("slope fits are stable across repetitions") {
  ScalingConfig sc;
  sc.variants = {Variant::vit_global, Variant::storm_tiled};
  sc.edges = {32, 64, 128};
  sc.repeats = 3;
  std::vector<std::vector<double>> slopes(2);
  for (int rep = 0; rep < 3; ++rep) {
    sc.seed = static_cast<std::uint64_t>(rep);
    for (const auto& f : fit_slopes(run_scaling_bench(sc)))
      slopes[f.variant == Variant::vit_global ? 0 : 1].push_back(f.slope);
  }
  for (const auto& s : slopes) {
    REQUIRE(s.size() == 3);
    CHECK(std::sqrt(var_of(s)) < 0.1);
  }
  CHECK(mean_of(slopes[0]) > mean_of(slopes[1]));
}

TEST_CASE("fit_slopes recovers an exact power law and skips capped points") {
  std::vector<BenchRecord> recs;
  for (int n : {10, 100, 1000}) {
    BenchRecord r;
    r.variant = Variant::vit_global;
    r.tokens = n;
    r.wall_s = 1e-9 * n * n;
    recs.push_back(r);
  }
  BenchRecord capped = recs.back();
  capped.tokens = 10000;
  capped.wall_s = 1.0;
  capped.capped = true;
  recs.push_back(capped);
  const auto fits = fit_slopes(recs);
  REQUIRE(fits.size() == 1);
  CHECK(fits[0].slope == doctest::Approx(2.0));
  CHECK(fits[0].points == 3);
  CHECK(bench_csv(recs).find("capped") != std::string::npos);
}

TEST_CASE("svg plot") {
  const std::string svg =
      svg_line_plot("t", "x", "y", {{"alpha", {1, 10, 100}, {1, 4, 0}}, {"beta", {1, 2}, {3, 5}}}, true, true);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("alpha") != std::string::npos);
  CHECK(svg.find("beta") != std::string::npos);
}

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::vit_global, Variant::timesformer, Variant::storm, Variant::storm_tiled})
    CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS(parse_variant("transformer"));
}
