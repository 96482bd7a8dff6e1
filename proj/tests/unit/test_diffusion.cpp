#include "doctest.h"
#include "helpers.hpp"
#include "sda/diffusion.hpp"
#include "sda/error.hpp"
#include "sda/gaussian.hpp"
#include "sda/oracle.hpp"
#include "sda/tiling.hpp"

using namespace sda;
using namespace sda::test;

TEST_CASE("schedule endpoints and monotonicity") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(100));
    const double lo = 1e-3 + rng.uniform();
    const double hi = lo * (1.5 + 100 * rng.uniform());
    const double rho = 0.5 + 10 * rng.uniform();
    const NoiseSchedule s = build_schedule(n, lo, hi, rho);
    REQUIRE(s.n_steps() == n);
    CHECK(s[0] == hi);
    CHECK(s[n - 1] == lo);
    for (int i = 1; i < n; ++i) CHECK(s[i] < s[i - 1]);
  }
}

TEST_CASE("schedule linear case and default length") {
  const NoiseSchedule s = build_schedule(3, 1.0, 3.0, 1.0);
  CHECK(s[0] == doctest::Approx(3.0));
  CHECK(s[1] == doctest::Approx(2.0));
  CHECK(s[2] == doctest::Approx(1.0));
  CHECK(ScheduleParams{}.n_steps == 80);
  CHECK_THROWS_AS(build_schedule(3, 2.0, 1.0, 7.0), ConfigError);
}

TEST_CASE("add_noise") {
  const GridSpec spec = make_grid(64, 64, 1, 1, 1);
  Rng r0(2);
  const StateField x = normal_field(spec, r0);
  Rng r1(3);
  CHECK(bit_equal(add_noise(x, 0.0, r1).z, x));

  Rng a(4), b(4);
  const NoisyState za = add_noise(x, 1.0, a), zb = add_noise(x, 1.0, b);
  CHECK(bit_equal(za.z, zb.z));
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = za.z[i] - x[i];
  CHECK(var_of(d) > 0.9);
  CHECK(var_of(d) < 1.1);
}

TEST_CASE("score from denoiser") {
  const GridSpec one = make_grid(1, 1, 1, 1, 1);
  const IdentityDenoiser id;
  Rng rng(5);
  const NoisyState z{normal_field(make_grid(4, 4, 1, 1, 1), rng), 0.7};
  const Score zero = score_from_denoiser(id, z, {}, 1e-3);
  for (double v : zero.values.values()) CHECK(v == 0.0);

  const GaussianDenoiser g(GaussianPrior::diagonal(one, 0.0, 1.0));
  const Score s = score_from_denoiser(g, {StateField(one, 2.0), 1.0}, {}, 1e-3);
  CHECK(s.values[0] == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("Gaussian denoiser score equals the closed-form score at every schedule sigma") {
  const GridSpec spec = make_grid(8, 8, 1, 1, 1);
  Rng rng(6);
  std::vector<double> mean(spec.size()), var(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    mean[i] = rng.normal();
    var[i] = 0.2 + rng.uniform();
  }
  const NoiseSchedule sched = build_schedule(80, 0.002, 10.0, 7.0);
  for (const GaussianPrior& prior :
       {GaussianPrior::diagonal(spec, mean, var), GaussianPrior::stationary(spec, {3.0, 1.5, 0.2})}) {
    const GaussianDenoiser g(prior);
    for (double sigma : sched.sigmas()) {
      const StateField z = normal_field(spec, rng, 1.0 + sigma);
      const Score a = score_from_denoiser(g, {z, sigma}, {}, 0.0);
      const Score b = gaussian_score(prior, z, sigma);
      double scale = 0.0;
      for (double v : b.values.values()) scale = std::max(scale, std::abs(v));
      const double tol = 1e-10;
      CHECK(max_abs_diff(a.values, b.values) <= tol * scale);
    }
  }
}

TEST_CASE("reverse_step degenerate steps") {
  const GridSpec spec = make_grid(4, 4, 1, 1, 1);
  Rng rng(7);
  const NoisyState z{normal_field(spec, rng), 2.0};
  const Score zero{StateField(spec)};
  CHECK(bit_equal(reverse_step(z, 1.0, zero, rng, SamplerMode::ode).z, z.z));
  const Score s{normal_field(spec, rng)};
  CHECK(bit_equal(reverse_step(z, 2.0, s, rng, SamplerMode::ode).z, z.z));
  CHECK(bit_equal(reverse_step(z, 2.0, s, rng, SamplerMode::sde).z, z.z));
}

TEST_CASE("reverse ODE with the exact score reproduces a 1-D Gaussian") {
  const GridSpec one = make_grid(1, 1, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::diagonal(one, 0.0, 1.0));
  const NoiseSchedule sched = build_schedule(80, 0.002, 10.0, 7.0);
  SamplerOptions opts;
  opts.mode = SamplerMode::ode;
  std::vector<double> xs;
  for (int i = 0; i < 2000; ++i) {
    Rng rng(8, static_cast<std::uint64_t>(i));
    xs.push_back(sample_prior(g, {}, one, sched, rng, opts)[0]);
  }
  CHECK(ks_normal(xs, 0.0, 1.0) < 0.05);
}

TEST_CASE("reverse ODE preserves linear functionals of a diagonal Gaussian") {
  const GridSpec spec = make_grid(2, 2, 1, 1, 1);
  const std::vector<double> mean{0.5, -1.0, 0.0, 2.0}, var{1.0, 0.25, 2.0, 0.5};
  const GaussianDenoiser g(GaussianPrior::diagonal(spec, mean, var));
  const NoiseSchedule sched = build_schedule(80, 0.002, 10.0, 7.0);
  SamplerOptions opts;
  opts.mode = SamplerMode::ode;
  std::vector<StateField> samples;
  for (int i = 0; i < 2000; ++i) {
    Rng rng(9, static_cast<std::uint64_t>(i));
    samples.push_back(sample_prior(g, {}, spec, sched, rng, opts));
  }
  Rng dirs(10);
  for (int f = 0; f < 5; ++f) {
    std::vector<double> a(4);
    for (double& v : a) v = dirs.normal();
    // Exact flow from z ~ N(0, smax^2) keeps (z - mu) / sqrt(v + s^2) fixed,
    // followed by the final denoise at smin.
    const double smin = 0.002, smax = 10.0;
    double m = 0.0, s2 = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double c = var[i] / std::sqrt((var[i] + smin * smin) * (var[i] + smax * smax));
      m += a[i] * mean[i] * (1.0 - c);
      s2 += a[i] * a[i] * c * c * smax * smax;
    }
    std::vector<double> proj;
    for (const auto& x : samples) {
      double p = 0.0;
      for (int i = 0; i < 4; ++i) p += a[i] * x[i];
      proj.push_back(p);
    }
    CHECK(ks_normal(proj, m, s2) < 1.63 / std::sqrt(2000.0));  // alpha = 0.01
  }
}

TEST_CASE("prior sampling mean on a diagonal prior") {
  const GridSpec spec = make_grid(16, 16, 1, 1, 1);
  const double mu = 0.3, sd = 1.0;
  const GaussianDenoiser g(GaussianPrior::diagonal(spec, mu, sd * sd));
  const NoiseSchedule sched = build_schedule(80, 0.002, 10.0, 7.0);
  StateField sum(spec);
  for (int i = 0; i < 512; ++i) {
    Rng rng(11, static_cast<std::uint64_t>(i));
    const StateField x = sample_prior(g, {}, spec, sched, rng);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += x[j] / 512.0;
  }
  int outside = 0;
  for (double v : sum.values()) outside += std::abs(v - mu) > 4.0 * sd / std::sqrt(512.0);  // 256 cells
  CHECK(outside == 0);
}

TEST_CASE("sampling is reproducible and full-overlap tiling matches") {
  const GridSpec spec = make_grid(16, 16, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::stationary(spec, {4.0, 1.0, 0.0}));
  const NoiseSchedule sched = build_schedule(20, 0.002, 10.0, 7.0);
  SamplerOptions ode;
  ode.mode = SamplerMode::ode;
  Rng a(12), b(12);
  const StateField xa = sample_prior(g, {}, spec, sched, a, ode);
  CHECK(bit_equal(xa, sample_prior(g, {}, spec, sched, b, ode)));

  const TilePlan plan = plan_tiles(spec, 8, 8);
  SamplerOptions tiled = ode;
  tiled.tiling = &plan;
  Rng c(12);
  CHECK(max_abs_diff(sample_prior(g, {}, spec, sched, c, tiled), xa) < 1e-6);
}
