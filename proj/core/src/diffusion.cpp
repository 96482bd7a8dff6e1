#include "sda/diffusion.hpp"

#include <cmath>
#include <iomanip>
#include <memory>
#include <sstream>

#include "sda/error.hpp"
#include "sda/tiling.hpp"

namespace sda {

StateField Denoiser::vjp_region(const StateField&, double, const TemporalContext&,
                                const StateField&, const Region&) const {
  throw CapabilityError("denoiser '" + name() + "' does not provide a vjp");
}

NoiseSchedule::NoiseSchedule(ScheduleParams params, std::vector<double> sigmas)
    : params_(params), sigmas_(std::move(sigmas)) {
  if (sigmas_.size() < 2) throw ConfigError("noise schedule needs at least 2 levels");
  for (std::size_t i = 0; i < sigmas_.size(); ++i) {
    if (!(sigmas_[i] > 0.0) || !std::isfinite(sigmas_[i])) {
      throw ConfigError("noise schedule levels must be positive and finite");
    }
    if (i > 0 && !(sigmas_[i] < sigmas_[i - 1])) {
      throw ConfigError("noise schedule must be strictly decreasing");
    }
  }
}

NoiseSchedule build_schedule(int n_steps, double sigma_min, double sigma_max, double rho) {
  if (n_steps < 2) throw ConfigError("n_steps must be >= 2");
  if (!(sigma_min > 0.0) || !(sigma_min < sigma_max)) {
    throw ConfigError("schedule requires 0 < sigma_min < sigma_max");
  }
  if (!(rho > 0.0)) throw ConfigError("schedule rho must be > 0");
  const double a = std::pow(sigma_max, 1.0 / rho);
  const double b = std::pow(sigma_min, 1.0 / rho);
  std::vector<double> sigmas(static_cast<std::size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i) {
    const double t = static_cast<double>(i) / (n_steps - 1);
    sigmas[static_cast<std::size_t>(i)] = std::pow(a + t * (b - a), rho);
  }
  sigmas.front() = sigma_max;
  sigmas.back() = sigma_min;
  return NoiseSchedule({n_steps, sigma_min, sigma_max, rho}, std::move(sigmas));
}

NoiseSchedule build_schedule(const ScheduleParams& p) {
  return build_schedule(p.n_steps, p.sigma_min, p.sigma_max, p.rho);
}

std::string schedule_csv(const NoiseSchedule& schedule) {
  std::ostringstream ss;
  ss << "i,sigma\n" << std::setprecision(17);
  for (int i = 0; i < schedule.n_steps(); ++i) ss << i << ',' << schedule[i] << '\n';
  return ss.str();
}

NoisyState add_noise(const StateField& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("add_noise: sigma must be >= 0");
  NoisyState out{x, sigma};
  if (sigma == 0.0) return out;
  for (double& v : out.z.values()) v += sigma * rng.normal();
  return out;
}

Score score_from_denoised(const StateField& xhat, const NoisyState& z, double sigma_floor) {
  if (!(z.sigma >= sigma_floor) || z.sigma <= 0.0) {
    throw ConfigError("score requested at sigma below the floor");
  }
  require_same_shape(xhat, z.z, "score_from_denoised");
  const double inv = 1.0 / (z.sigma * z.sigma);
  Score s{StateField(z.z.spec())};
  for (std::size_t i = 0; i < xhat.size(); ++i) s.values[i] = (xhat[i] - z.z[i]) * inv;
  return s;
}

Score score_from_denoiser(const Denoiser& denoiser, const NoisyState& z,
                          const TemporalContext& ctx, double sigma_floor) {
  if (!(z.sigma >= sigma_floor) || z.sigma <= 0.0) {
    throw ConfigError("score requested at sigma below the floor");
  }
  return score_from_denoised(denoiser.evaluate(z.z, z.sigma, ctx), z, sigma_floor);
}

SamplerMode parse_sampler_mode(const std::string& s) {
  if (s == "sde") return SamplerMode::sde;
  if (s == "ode") return SamplerMode::ode;
  throw ConfigError("sampler mode must be 'sde' or 'ode', got '" + s + "'");
}

std::string to_string(SamplerMode mode) { return mode == SamplerMode::sde ? "sde" : "ode"; }

NoisyState reverse_step(const NoisyState& z, double sigma_next, const Score& score, Rng& rng,
                        SamplerMode mode) {
  if (sigma_next > z.sigma) throw ConfigError("reverse_step: noise level must not increase");
  if (!(sigma_next >= 0.0)) throw ConfigError("reverse_step: negative target sigma");
  if (sigma_next == z.sigma) return z;
  require_same_shape(z.z, score.values, "reverse_step");
  const double dvar = z.sigma * z.sigma - sigma_next * sigma_next;
  NoisyState out{z.z, sigma_next};
  if (mode == SamplerMode::sde) {
    const double noise_scale = std::sqrt(dvar);
    for (std::size_t i = 0; i < out.z.size(); ++i) {
      out.z[i] += dvar * score.values[i] + noise_scale * rng.normal();
    }
  } else {
    for (std::size_t i = 0; i < out.z.size(); ++i) out.z[i] += 0.5 * dvar * score.values[i];
  }
  return out;
}

StateField run_reverse(const Denoiser& denoiser, const TemporalContext& ctx, const GridSpec& spec,
                       const NoiseSchedule& schedule, Rng& rng, const SamplerOptions& options,
                       const ScoreCorrection& correction) {
  std::unique_ptr<TiledDenoiser> tiled;
  const Denoiser* active = &denoiser;
  if (options.tiling != nullptr) {
    tiled = std::make_unique<TiledDenoiser>(denoiser, *options.tiling, options.tile_workers);
    active = tiled.get();
  }
  const double floor = schedule.sigma_floor();
  NoisyState state{StateField(spec), schedule.sigma_max()};
  for (double& v : state.z.values()) v = schedule.sigma_max() * rng.normal();
  if (options.on_init) options.on_init(state);

  for (int i = 0; i + 1 < schedule.n_steps(); ++i) {
    const StateField xhat = active->evaluate(state.z, state.sigma, ctx);
    if (!xhat.all_finite()) {
      throw NumericalError("non-finite denoiser output at step " + std::to_string(i));
    }
    Score score = score_from_denoised(xhat, state, floor);
    if (correction) correction(*active, state, xhat, score);
    state = reverse_step(state, schedule[i + 1], score, rng, options.mode);
    if (options.on_step) options.on_step(i, state);
  }
  return active->evaluate(state.z, state.sigma, ctx);
}

StateField sample_prior(const Denoiser& denoiser, const TemporalContext& ctx,
                        const GridSpec& spec, const NoiseSchedule& schedule, Rng& rng,
                        const SamplerOptions& options) {
  return run_reverse(denoiser, ctx, spec, schedule, rng, options, {});
}

}  // namespace sda
