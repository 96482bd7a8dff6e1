#include "doctest.h"
#include "helpers.hpp"
#include "sda/error.hpp"
#include "sda/oracle.hpp"

using namespace sda;
using namespace sda::test;

TEST_CASE("scalar conjugacy and limits") {
  const GridSpec one = make_grid(1, 1, 1, 1, 1);
  const GaussianPrior prior = GaussianPrior::diagonal(one, 0.0, 1.0);
  const auto op = ObservationOperator::full(one);
  const GaussianPosterior p = exact_gaussian_posterior(prior, op, {{1.0}, {1.0}});
  CHECK(p.mean[0] == doctest::Approx(0.5));
  CHECK(p.var[0] == doctest::Approx(0.5));

  const GaussianPosterior vague = exact_gaussian_posterior(prior, op, {{1.0}, {1e12}});
  CHECK(std::abs(vague.mean[0]) < 1e-11);
  CHECK(vague.var[0] == doctest::Approx(1.0));

  const GaussianPosterior sharp = exact_gaussian_posterior(prior, op, {{1.0}, {1e-8}});
  CHECK(std::abs(sharp.mean[0] - 1.0) < 1e-4);
  CHECK(sharp.var[0] < 1e-4);
}

TEST_CASE("dense posterior: two correlated cells") {
  const DenseGaussian p = dense_gaussian_posterior({0.0, 0.0}, {1.0, 0.8, 0.8, 1.0}, {0}, {0.5}, {1.0});
  CHECK(p.mean[1] == doctest::Approx(0.8 / 1.5));
  CHECK(p.mean[0] == doctest::Approx(1.0 / 1.5));
  CHECK(p.var(0) == doctest::Approx(1.0 - 1.0 / 1.5));

  const DenseGaussian none = dense_gaussian_posterior({0.3, -1.0}, {1.0, 0.8, 0.8, 1.0}, {}, {}, {});
  CHECK(none.mean == std::vector<double>{0.3, -1.0});
  CHECK(none.cov == std::vector<double>{1.0, 0.8, 0.8, 1.0});

  CHECK_THROWS_AS(dense_gaussian_posterior({0.0, 0.0}, {1.0, 2.0, 2.0, 1.0}, {0, 1}, {0.0, 0.0}, {0.0, 0.0}),
                  NumericalError);
  CHECK_THROWS_AS(dense_gaussian_posterior(std::vector<double>(257), std::vector<double>(257 * 257), {}, {}, {}),
                  ConfigError);
}

TEST_CASE("dense and closed-form paths agree") {
  Rng rng(1);
  SUBCASE("diagonal prior, partial mask") {
    const GridSpec spec = make_grid(6, 6, 1, 1, 1);
    std::vector<double> mean(spec.size()), var(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
      mean[i] = rng.normal();
      var[i] = 0.2 + rng.uniform();
    }
    const GaussianPrior prior = GaussianPrior::diagonal(spec, mean, var);
    const auto op = ObservationOperator::random(spec, 0.4, 2);
    const ObservationSet y = observe(normal_field(spec, rng), op, 0.3, rng);
    const GaussianPosterior a = exact_gaussian_posterior(prior, op, y);
    const DenseGaussian b = dense_gaussian_posterior(prior, op, y);
    for (int i = 0; i < b.dim(); ++i) {
      CHECK(std::abs(a.mean[i] - b.mean[i]) < 1e-10);
      CHECK(std::abs(a.var[i] - b.var(i)) < 1e-10);
      CHECK(a.var[i] <= var[static_cast<std::size_t>(i)]);
    }
  }
  SUBCASE("stationary prior, full mask") {
    const GridSpec spec = make_grid(8, 8, 1, 1, 1);
    const GaussianPrior prior = GaussianPrior::stationary(spec, {2.0, 1.3, 0.4});
    const auto op = ObservationOperator::full(spec);
    const ObservationSet y = observe(normal_field(spec, rng), op, 0.5, rng);
    const GaussianPosterior a = exact_gaussian_posterior(prior, op, y);
    const DenseGaussian b = dense_gaussian_posterior(prior, op, y);
    const auto cov = dense_covariance(prior);
    for (int i = 0; i < b.dim(); ++i) {
      CHECK(std::abs(a.mean[i] - b.mean[i]) < 1e-10);
      CHECK(std::abs(a.var[i] - b.var(i)) < 1e-10);
      CHECK(b.var(i) <= cov[static_cast<std::size_t>(i) * b.dim() + i] + 1e-12);
    }
  }
  SUBCASE("stationary prior, partial mask is refused") {
    const GridSpec spec = make_grid(8, 8, 1, 1, 1);
    const auto op = ObservationOperator::random(spec, 0.5, 3);
    CHECK_THROWS_AS(exact_gaussian_posterior(GaussianPrior::stationary(spec, {}), op,
                                             observe(StateField(spec), op, 0.1, rng)),
                    CapabilityError);
  }
}

TEST_CASE("fd_check") {
  auto linear = [](const std::vector<double>& x) { return 3.0 * x[0] - 2.0 * x[1]; };
  for (double h : {1e-6, 1e-3, 1.0, 10.0})
    CHECK(fd_check(linear, {3.0, -2.0}, {0.4, 7.0}, {1.0, 0.5}, h).rel_error < 1e-15 / h + 1e-12);

  auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
  const FdResult q = fd_check(square, {2.0}, {1.0}, {1.0}, 1e-4);
  CHECK(q.numeric == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(q.rel_error < 1e-10);
  CHECK(fd_check(square, {0.0}, {0.0}, {1.0}, 1e-4).rel_error == 0.0);
}

TEST_CASE("tiled-vs-global audit") {
  const GridSpec spec = make_grid(16, 16, 1, 1, 1);
  const GrfParams grf{4.0, 1.0, 0.0};
  const GaussianDenoiser g(GaussianPrior::stationary(spec, grf));
  const NoiseSchedule sched = build_schedule(20, 0.002, 10.0, 7.0);
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  const auto single = tiled_vs_global_audit(g, {plan_tiles(spec, 16, 0)}, sched, {}, nullptr, seeds);
  for (const auto& row : single) {
    CHECK(row.max_disc == 0.0);
    CHECK(row.step_max_disc == 0.0);
  }

  const std::vector<TilePlan> sweep{plan_tiles(spec, 8, 0), plan_tiles(spec, 8, 2), plan_tiles(spec, 8, 4)};
  const auto prior_rows = tiled_vs_global_audit(g, sweep, sched, {}, nullptr, seeds);
  for (std::uint64_t s : seeds) {
    double prev = 1e300;
    for (const auto& row : prior_rows) {
      if (row.seed != s) continue;
      CHECK(row.step_mean_disc <= prev);
      prev = row.step_mean_disc;
    }
  }

  Rng rng(5);
  const auto op = ObservationOperator::random(spec, 0.2, 6);
  const ObservationSet y = observe(sample_grf(spec, grf, rng), op, 0.1, rng);
  const AuditObservations obs{&op, &y, {}};
  const std::vector<TilePlan> half{plan_tiles(spec, 8, 4)};
  const auto post = tiled_vs_global_audit(g, half, sched, {}, &obs, seeds);
  const auto prior = tiled_vs_global_audit(g, half, sched, {}, nullptr, seeds);
  double post_mean = 0.0, prior_mean = 0.0;
  for (const auto& r : post) post_mean += r.mean_disc;
  for (const auto& r : prior) prior_mean += r.mean_disc;
  CHECK(post.front().mode == "posterior");
  CHECK(post_mean < 2.0 * prior_mean);
  CHECK(audit_csv(post).rfind("plan,halo,seed,mode,max_disc,mean_disc\n", 0) == 0);
}
