#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sda/denoiser.hpp"
#include "sda/field.hpp"
#include "sda/rng.hpp"

namespace sda {

class TilePlan;

struct ScheduleParams {
  int n_steps = 80;
  double sigma_min = 0.002;
  double sigma_max = 10.0;
  double rho = 7.0;
};

/// Descending noise ladder sigma_0 = sigma_max > ... > sigma_{n-1} = sigma_min,
/// sigma_i = (smax^(1/rho) + i/(n-1) (smin^(1/rho) - smax^(1/rho)))^rho.
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleParams params, std::vector<double> sigmas);

  const ScheduleParams& params() const { return params_; }
  const std::vector<double>& sigmas() const { return sigmas_; }
  int n_steps() const { return static_cast<int>(sigmas_.size()); }
  double operator[](int i) const { return sigmas_[static_cast<std::size_t>(i)]; }
  double sigma_min() const { return sigmas_.back(); }
  double sigma_max() const { return sigmas_.front(); }
  /// Smallest sigma a score may be requested at (sigma_min / 2).
  double sigma_floor() const { return 0.5 * sigmas_.back(); }

 private:
  ScheduleParams params_;
  std::vector<double> sigmas_;
};

NoiseSchedule build_schedule(int n_steps, double sigma_min, double sigma_max, double rho);
NoiseSchedule build_schedule(const ScheduleParams& params);

/// "i,sigma" audit listing.
std::string schedule_csv(const NoiseSchedule& schedule);

/// z_t = x + sigma * eps, tagged with its noise level.
struct NoisyState {
  StateField z;
  double sigma = 0.0;
};

/// Gradient of a log-density with respect to z_t.
struct Score {
  StateField values;
};

NoisyState add_noise(const StateField& x, double sigma, Rng& rng);

/// (xhat - z) / sigma^2; throws ConfigError below `sigma_floor`.
Score score_from_denoised(const StateField& xhat, const NoisyState& z, double sigma_floor);

Score score_from_denoiser(const Denoiser& denoiser, const NoisyState& z,
                          const TemporalContext& ctx, double sigma_floor);

enum class SamplerMode { sde, ode };

SamplerMode parse_sampler_mode(const std::string& s);
std::string to_string(SamplerMode mode);

/// One Euler-Maruyama step in sigma^2 increments from z.sigma to sigma_next:
///   sde: z + (s_i^2 - s_j^2) S + sqrt(s_i^2 - s_j^2) eps
///   ode: z + 0.5 (s_i^2 - s_j^2) S
/// sigma_next > z.sigma is an error; an equal level returns z unchanged.
NoisyState reverse_step(const NoisyState& z, double sigma_next, const Score& score, Rng& rng,
                        SamplerMode mode);

struct SamplerOptions {
  SamplerMode mode = SamplerMode::sde;
  /// When set, every denoiser call goes through tiled_denoise on this plan.
  const TilePlan* tiling = nullptr;
  int tile_workers = 1;
  /// Called once on the initial draw z ~ N(0, sigma_max^2 I); may modify it.
  std::function<void(NoisyState&)> on_init;
  /// Called after each reverse step with the step index and the new state.
  std::function<void(int, const NoisyState&)> on_step;
};

/// Full reverse trajectory from z ~ N(0, sigma_max^2 I) down to sigma_min;
/// returns D(z, sigma_min; ctx).
StateField sample_prior(const Denoiser& denoiser, const TemporalContext& ctx,
                        const GridSpec& spec, const NoiseSchedule& schedule, Rng& rng,
                        const SamplerOptions& options = {});

/// Hook that adds extra terms to the prior score at each step. It receives the
/// denoiser actually in use (the tiled wrapper when tiling is on), the state,
/// and the denoised estimate the prior score was formed from.
using ScoreCorrection = std::function<void(const Denoiser&, const NoisyState&,
                                           const StateField& xhat, Score& score)>;

/// Shared reverse-trajectory driver behind sample_prior and assimilate.
StateField run_reverse(const Denoiser& denoiser, const TemporalContext& ctx, const GridSpec& spec,
                       const NoiseSchedule& schedule, Rng& rng, const SamplerOptions& options,
                       const ScoreCorrection& correction);

}  // namespace sda
