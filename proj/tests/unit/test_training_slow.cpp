// Convergence checks that need full training runs (minutes on one core).

#include "doctest.h"
#include "helpers.hpp"
#include "sda/gaussian.hpp"
#include "sda/recipes.hpp"
#include "sda/train.hpp"

using namespace sda;
using namespace sda::test;

namespace {

/// Mean cosine between the trained and analytic scores over fresh samples.
double score_cosine(const Denoiser& trained, const Denoiser& exact, const DatasetGenerator& data,
                    double sigma, int samples) {
  double total = 0.0;
  for (int t = 0; t < samples; ++t) {
    Rng rng(99, static_cast<std::uint64_t>(t));
    const TrainingExample ex = data(rng);
    const StateField z = ex.x + sigma * normal_field(ex.x.spec(), rng);
    const StateField a = exact.evaluate(z, sigma, ex.ctx), b = trained.evaluate(z, sigma, ex.ctx);
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double sa = a[i] - z[i], sb = b[i] - z[i];
      ab += sa * sb;
      aa += sa * sa;
      bb += sb * sb;
    }
    total += ab / std::sqrt(aa * bb);
  }
  return total / samples;
}

}  // namespace

TEST_CASE("constant data: the trained denoiser returns the constant") {
  const GridSpec spec = make_grid(8, 8, 1, 2, 1);
  StormConfig model;
  model.d_model = 32;
  model.K = 1;
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.batch = 32;
  cfg.lr = 1e-2;
  cfg.decay_steps = 2000;
  cfg.final_lr_fraction = 0.01;
  // Cover the probed noise levels evenly; the log-normal law rarely visits sigma = 5.
  cfg.law = SigmaLaw::log_uniform;
  cfg.sigma_lo = 0.05;
  cfg.sigma_hi = 10.0;
  // The target is stated on the denoiser output, so train on plain output MSE.
  cfg.edm_weighting = false;
  cfg.seed = 2;
  const double value = 0.7;
  const TrainResult r = train_denoiser(constant_dataset(spec, value), model, cfg);
  CHECK(r.final_smoothed_loss < 0.01 * r.initial_loss);
  const StormDenoiser d(r.state.params);
  Rng rng(3);
  const TemporalContext ctx({StateField(spec, value)});
  for (double sigma : {0.1, 1.0, 5.0}) {
    const StateField z = StateField(spec, value) + sigma * normal_field(spec, rng);
    double worst = 0.0;
    const StateField out = d.evaluate(z, sigma, ctx);
    for (double v : out.values()) worst = std::max(worst, std::abs(v - value));
    CHECK(worst < 0.01);
  }
}

TEST_CASE("Gaussian toy: trained denoiser tracks the closed form") {
  const recipes::ToyModelConfig toy = recipes::ToyModelConfig::defaults();
  const TrainResult trained = recipes::train_toy_model(toy);
  const recipes::CriterionReport r = recipes::toy_training(toy, trained);
  INFO(r.line());
  CHECK(r.pass());
}

TEST_CASE("GRF 16x16: trained score aligns with the analytic score") {
  const GridSpec spec = make_grid(16, 16, 1, 2, 2);
  const GrfParams grf{2.0, 1.0, 0.0};
  StormConfig model;
  model.K = 2;
  TrainConfig cfg;
  cfg.steps = 6000;
  cfg.lr = 3e-3;
  cfg.decay_steps = 6000;
  cfg.final_lr_fraction = 0.1;
  cfg.seed = 1;
  const auto data = grf_dataset(spec, grf);
  const TrainResult r = train_denoiser(data, model, cfg);
  const StormDenoiser trained(r.state.params);
  const GaussianDenoiser exact(GaussianPrior::stationary(spec, grf));
  for (double sigma : {0.1, 1.0, 5.0}) {
    const double cos = score_cosine(trained, exact, data, sigma, 20);
    INFO("sigma " << sigma << " cosine " << cos);
    CHECK(cos > 0.95);
  }
}
