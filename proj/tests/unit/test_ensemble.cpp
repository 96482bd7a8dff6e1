#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "sda/ensemble.hpp"
#include "sda/error.hpp"
#include "sda/gaussian.hpp"
#include "sda/guidance.hpp"

using namespace sda;
using namespace sda::test;

namespace {

Ensemble from_values(const std::vector<double>& per_member) {
  const GridSpec one = make_grid(1, 1, 1, 1, 1);
  Ensemble e;
  for (double v : per_member) e.members.emplace_back(one, v);
  return e;
}

}  // namespace

TEST_CASE("generate_ensemble") {
  const GridSpec spec = make_grid(4, 4, 1, 1, 1);
  const MemberSampler sampler = [&](int, Rng& rng) { return normal_field(spec, rng); };
  const Rng root(3, 1);
  const Ensemble single = generate_ensemble(1, sampler, 1, root, Provenance::prior);
  Rng direct = root.substream(0);
  CHECK(bit_equal(single.members[0], sampler(0, direct)));

  const Ensemble a = generate_ensemble(64, sampler, 1, root, Provenance::prior);
  const Ensemble b = generate_ensemble(64, sampler, 8, root, Provenance::prior);
  for (int i = 0; i < 64; ++i) CHECK(bit_equal(a.members[i], b.members[i]));

  const StateField truth = normal_field(spec, direct);
  const auto ma = ensemble_metrics(a, truth), mb = ensemble_metrics(b, truth);
  REQUIRE(ma.size() == mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) CHECK(ma[i].value == mb[i].value);

  const MemberSampler failing = [](int m, Rng&) -> StateField {
    if (m == 2) throw NumericalError("boom");
    return StateField(make_grid(1, 1, 1, 1, 1));
  };
  CHECK_THROWS_AS(generate_ensemble(4, failing, 2, root, Provenance::prior), NumericalError);
}

TEST_CASE("rmse") {
  const GridSpec two = make_grid(1, 2, 1, 1, 1);
  const StateField a(two, std::vector<double>{0.0, 0.0}), t(two, std::vector<double>{3.0, 4.0});
  CHECK(rmse(a, t) == doctest::Approx(std::sqrt(12.5)));
  CHECK(rmse(t, t) == 0.0);
  CHECK(rmse(StateField(two, std::vector<double>{3.5, 4.5}), t) == doctest::Approx(0.5));
}

TEST_CASE("spread") {
  CHECK(spread(from_values({0.0, 2.0})).mean == doctest::Approx(std::sqrt(2.0)));
  CHECK(spread(from_values({1.5, 1.5, 1.5})).mean == 0.0);
  CHECK(spread(from_values({0.0, 6.0})).mean == doctest::Approx(3.0 * std::sqrt(2.0)));
  CHECK_THROWS_AS(spread(from_values({1.0})), ConfigError);
}

TEST_CASE("crps") {
  const GridSpec one = make_grid(1, 1, 1, 1, 1);
  CHECK(crps(from_values({0.0, 2.0}), StateField(one, 1.0)) == doctest::Approx(0.5));
  CHECK(crps(from_values({1.0, 1.0, 1.0}), StateField(one, 1.0)) == 0.0);
  CHECK(crps(from_values({2.5}), StateField(one, -1.0)) == doctest::Approx(3.5));
  // Unbiased pair term: n / (n - 1) times the biased one.
  CHECK(crps(from_values({0.0, 2.0}), StateField(one, 1.0), true) == doctest::Approx(0.0));

  // Order-statistic form against the direct pair sum.
  Rng rng(4);
  std::vector<double> xs;
  for (int i = 0; i < 17; ++i) xs.push_back(rng.normal());
  const double y = 0.3;
  double abs_err = 0.0, pairs = 0.0;
  for (double a : xs) {
    abs_err += std::abs(a - y) / xs.size();
    for (double b : xs) pairs += std::abs(a - b) / (xs.size() * xs.size());
  }
  CHECK(crps(from_values(xs), StateField(one, y)) == doctest::Approx(abs_err - 0.5 * pairs).epsilon(1e-12));
}

TEST_CASE("spread-skill") {
  const GridSpec one = make_grid(1, 1, 1, 1, 1);
  const SpreadSkill zero = spread_skill(from_values({2.0, 2.0}), StateField(one, 1.0));
  CHECK(zero.ratio == 0.0);
  CHECK_FALSE(zero.infinite);
  const SpreadSkill inf = spread_skill(from_values({0.0, 2.0}), StateField(one, 1.0));
  CHECK(inf.infinite);
  CHECK(inf.ratio == std::numeric_limits<double>::infinity());
}

TEST_CASE("spread-skill of a calibrated ensemble") {
  // Truth and members are exchangeable draws of the same law; a truth fixed at
  // the members' centre would instead give a ratio near sqrt(n).
  const GridSpec spec = make_grid(16, 16, 1, 1, 1);
  Rng rng(5);
  const StateField centre = normal_field(spec, rng, 3.0);
  const StateField truth = centre + normal_field(spec, rng);
  Ensemble e;
  for (int m = 0; m < 512; ++m) e.members.push_back(centre + normal_field(spec, rng));
  const double ratio = spread_skill(e, truth).ratio;
  CHECK(ratio > 0.8);
  CHECK(ratio < 1.2);
}

TEST_CASE("metrics rows carry provenance") {
  const Ensemble e = [] {
    Ensemble x = from_values({0.0, 1.0, 3.0});
    x.provenance = Provenance::posterior;
    x.seed = 9;
    return x;
  }();
  const auto rows = ensemble_metrics(e, StateField(make_grid(1, 1, 1, 1, 1), 1.0));
  CHECK(rows.size() == 4);
  const std::string csv = metrics_csv(rows);
  CHECK(csv.rfind("metric,value,n_members,provenance,seed\n", 0) == 0);
  CHECK(csv.find("crps,") != std::string::npos);
  CHECK(csv.find(",3,posterior,9") != std::string::npos);
  CHECK(parse_provenance(to_string(Provenance::prior)) == Provenance::prior);
}

TEST_CASE("posterior beats prior on the conjugate benchmark") {
  const GridSpec spec = make_grid(8, 8, 1, 1, 1);
  const GaussianDenoiser g(GaussianPrior::diagonal(spec, 0.0, 1.0));
  const NoiseSchedule sched = build_schedule(40, 0.002, 10.0, 7.0);
  int rmse_wins = 0, crps_wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng r(seed, 77);
    const StateField truth = normal_field(spec, r);
    const auto op = ObservationOperator::random(spec, 0.2, seed);
    const ObservationSet y = observe(truth, op, 0.25, r);
    const Rng root(seed, 78);
    const Ensemble prior = generate_ensemble(
        64, [&](int, Rng& rng) { return sample_prior(g, {}, spec, sched, rng); }, 1, root, Provenance::prior);
    const Ensemble post = generate_ensemble(
        64, [&](int, Rng& rng) { return assimilate(g, {}, spec, y, op, sched, {}, rng); }, 1, root,
        Provenance::posterior);
    rmse_wins += rmse(ensemble_mean(post), truth) < rmse(ensemble_mean(prior), truth);
    crps_wins += crps(post, truth) < crps(prior, truth);
  }
  CHECK(rmse_wins >= 4);
  CHECK(crps_wins >= 4);
}
