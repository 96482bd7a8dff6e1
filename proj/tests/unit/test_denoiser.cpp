#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "sda/gaussian.hpp"
#include "sda/oracle.hpp"
#include "sda/storm.hpp"
#include "sda/tiling.hpp"

using namespace sda;
using namespace sda::test;

namespace {

StormConfig small_storm(int K = 2) {
  StormConfig c;
  c.patch = 2;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.K = K;
  return c;
}

TemporalContext random_context(const GridSpec& spec, int K, Rng& rng) {
  std::vector<StateField> frames;
  for (int k = 0; k < K; ++k) frames.push_back(normal_field(spec, rng));
  return TemporalContext(std::move(frames));
}

/// Worst vjp-vs-central-difference relative error over `triples` random probes.
double vjp_fd_error(const Denoiser& d, const GridSpec& spec, const TemporalContext& ctx, int triples,
                    double h, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < triples; ++t) {
    const double sigma = std::exp(std::log(0.05) + rng.uniform() * std::log(100.0));
    const StateField z = normal_field(spec, rng, 1.0 + sigma);
    const StateField u = normal_field(spec, rng);
    const StateField v = normal_field(spec, rng);
    const StateField g = d.vjp(z, sigma, ctx, u);
    auto f = [&](const std::vector<double>& x) {
      const StateField out = d.evaluate(StateField(spec, x), sigma, ctx);
      return std::inner_product(out.vector().begin(), out.vector().end(), u.vector().begin(), 0.0);
    };
    worst = std::max(worst, fd_check(f, g.vector(), z.vector(), v.vector(), h).rel_error);
  }
  return worst;
}

}  // namespace

TEST_CASE("Gaussian denoiser limits and scalar value") {
  const GridSpec one = make_grid(1, 1, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::diagonal(one, 0.0, 1.0));
  CHECK(g.evaluate(StateField(one, 2.0), 1.0, {})[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.evaluate(StateField(one, 2.0), 0.0, {})[0] == 2.0);

  const GaussianDenoiser shifted(GaussianPrior::diagonal(one, 0.7, 2.0));
  const double z = 3.1;
  CHECK(std::abs(shifted.evaluate(StateField(one, z), 1e6, {})[0] - 0.7) < 1e-6 * std::abs(z - 0.7));

  const GridSpec spec = make_grid(8, 8, 1, 1, 1);
  const GaussianDenoiser stat(GaussianPrior::stationary(spec, {3.0, 1.0, 0.4}));
  Rng rng(1);
  const StateField zz = normal_field(spec, rng);
  CHECK(max_abs_diff(stat.evaluate(zz, 0.0, {}), zz) < 1e-12);
}

TEST_CASE("diagonal vjp is the shrinkage factor") {
  const GridSpec spec = make_grid(4, 4, 1, 1, 1);
  const double pv = 0.6, sigma = 0.8;
  const GaussianDenoiser g(GaussianPrior::diagonal(spec, 0.1, pv));
  Rng rng(2);
  const StateField z = normal_field(spec, rng), u = normal_field(spec, rng);
  const StateField out = g.vjp(z, sigma, {}, u);
  for (std::size_t i = 0; i < u.size(); ++i)
    CHECK(out[i] == doctest::Approx(pv / (pv + sigma * sigma) * u[i]).epsilon(1e-14));
  const StateField none = g.vjp(z, sigma, {}, StateField(spec));
  for (double v : none.values()) CHECK(v == 0.0);
}

TEST_CASE("Tweedie identity for the Gaussian denoiser") {
  const GridSpec spec = make_grid(8, 8, 2, 1, 1);
  const GaussianPrior prior = GaussianPrior::stationary(spec, {2.5, 0.8, -0.3});
  const GaussianDenoiser g(prior);
  Rng rng(3);
  for (double sigma : {0.01, 0.3, 1.0, 7.0}) {
    const StateField z = normal_field(spec, rng, 1.0 + sigma);
    const StateField xhat = g.evaluate(z, sigma, {});
    const Score exact = gaussian_score(prior, z, sigma);
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(std::abs((xhat[i] - z[i]) / (sigma * sigma) - exact.values[i]) <=
            1e-10 * (1.0 + std::abs(exact.values[i])));
  }
}

TEST_CASE("noise gate") {
  CHECK(noise_gate(0.0, 1.0) == 0.0);
  CHECK(noise_gate(1.3, 1.3) == doctest::Approx(0.5));
  CHECK(noise_gate(3.0, 1.0) == doctest::Approx(0.9));
  double prev = -1.0;
  for (double s = 0.001; s < 100.0; s *= 1.3) {
    const double g = noise_gate(s, 0.7);
    CHECK(g > prev);
    CHECK(g <= 1.0);
    prev = g;
  }
}

TEST_CASE("zero-initialized residual blocks return c_skip z") {
  const StormConfig cfg = small_storm();
  Rng init(4);
  const StormDenoiser d(init_storm(cfg, init));
  const GridSpec spec = make_grid(8, 8, 1, 2, 2);
  Rng rng(5);
  const TemporalContext ctx = random_context(spec, 2, rng);
  for (double sigma : {0.1, 1.0, 5.0}) {
    const StateField z = normal_field(spec, rng);
    const double c_skip = precondition(sigma, cfg.sigma_data).c_skip;
    const StateField out = d.evaluate(z, sigma, ctx);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(out[i] == doctest::Approx(c_skip * z[i]).epsilon(1e-14));
  }
}

TEST_CASE("context compression") {
  const StormConfig cfg = small_storm(1);
  Rng init(6);
  const StormNet<double> net(init_storm(cfg, init, false));
  const GridSpec spec = make_grid(8, 8, 1, 2, 1);
  Rng rng(7);
  const StateField z = normal_field(spec, rng);
  const TemporalContext one = random_context(spec, 1, rng);
  StormInputs<double> in1 = make_inputs<double>(cfg, z, 1.0, one);

  SUBCASE("a single frame gets all temporal weight") {
    StormTape<double> tape;
    net.forward(in1, tape);
    for (double w : tape.time_agg.weights.data) CHECK(w == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("duplicated frames leave the embedding unchanged") {
    StormInputs<double> in2 = in1;
    in2.frames.push_back(in1.frames[0]);
    in2.calendar.push_back(in1.calendar[0]);
    in2.mask.push_back(1);
    const Mat<double> a = net.compress_context(in1), b = net.compress_context(in2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) < 1e-6);
  }

  SUBCASE("compressed size is independent of K") {
    for (int K : {4, 16}) {
      const TemporalContext ctx = random_context(spec, K, rng);
      const Mat<double> m = net.compress_context(make_inputs<double>(cfg, z, 1.0, ctx));
      CHECK(m.rows == compressed_tokens(spec.token_rows(), spec.token_cols()));
      CHECK(m.cols == cfg.d_model);
    }
  }
}

TEST_CASE("STORM is covariant under token permutations") {
  const StormConfig cfg = small_storm();
  Rng init(8);
  const StormNet<double> net(init_storm(cfg, init, false));
  const GridSpec spec = make_grid(8, 8, 1, 2, 2);
  Rng rng(9);
  const TemporalContext ctx = random_context(spec, 2, rng);
  const StormInputs<double> in = make_inputs<double>(cfg, normal_field(spec, rng), 0.8, ctx);
  StormTape<double> ref;
  net.forward(in, ref);

  auto permute = [](const Mat<double>& m, const std::vector<int>& perm) {
    Mat<double> out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
      for (int j = 0; j < m.cols; ++j) out(i, j) = m(perm[static_cast<std::size_t>(i)], j);
    return out;
  };
  for (int trial = 0; trial < 2; ++trial) {
    std::vector<int> perm(static_cast<std::size_t>(spec.tokens()));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    StormInputs<double> p = in;
    p.current = permute(in.current, perm);
    p.pos = permute(in.pos, perm);
    for (auto& f : p.frames) f = permute(f, perm);
    StormTape<double> tape;
    net.forward(p, tape);
    const Mat<double> expect = permute(ref.out, perm);
    double worst = 0.0;
    for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, std::abs(expect.data[i] - tape.out.data[i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("vjp agrees with central differences for every denoiser") {
  Rng rng(10);
  SUBCASE("STORM, random weights") {
    Rng init(11);
    const StormDenoiser d(init_storm(small_storm(), init, false));
    const GridSpec spec = make_grid(8, 8, 1, 2, 2);
    CHECK(vjp_fd_error(d, spec, random_context(spec, 2, rng), 20, 1e-3, 12) < 1e-5);
  }
  SUBCASE("Gaussian, diagonal and stationary") {
    const GridSpec spec = make_grid(8, 8, 1, 1, 1);
    const GaussianDenoiser diag(GaussianPrior::diagonal(spec, 0.2, 0.7));
    const GaussianDenoiser stat(GaussianPrior::stationary(spec, {3.0, 1.0, 0.0}));
    CHECK(vjp_fd_error(diag, spec, {}, 20, 1e-3, 13) < 1e-5);
    CHECK(vjp_fd_error(stat, spec, {}, 20, 1e-3, 14) < 1e-5);
  }
  SUBCASE("tiled") {
    const GridSpec spec = make_grid(16, 16, 1, 1, 1);
    const GaussianDenoiser stat(GaussianPrior::stationary(spec, {3.0, 1.0, 0.0}));
    const TiledDenoiser tiled(stat, plan_tiles(spec, 8, 2));
    CHECK(vjp_fd_error(tiled, spec, {}, 20, 1e-3, 15) < 1e-5);
  }
  SUBCASE("identity") {
    const GridSpec spec = make_grid(4, 4, 1, 1, 1);
    CHECK(vjp_fd_error(IdentityDenoiser(), spec, {}, 20, 1e-3, 16) < 1e-5);
  }
}
