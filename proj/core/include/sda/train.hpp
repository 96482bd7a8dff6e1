#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sda/field.hpp"
#include "sda/grf.hpp"
#include "sda/rng.hpp"
#include "sda/storm.hpp"

namespace sda {

enum class SigmaLaw { log_normal, log_uniform };

SigmaLaw parse_sigma_law(const std::string& s);
std::string to_string(SigmaLaw law);

struct TrainConfig {
  int steps = 2000;
  int batch = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  SigmaLaw law = SigmaLaw::log_normal;
  double p_mean = -1.2;  // log-normal law: ln sigma ~ N(p_mean, p_std^2)
  double p_std = 1.2;
  double sigma_lo = 0.002;  // log-uniform range, also clips the log-normal law
  double sigma_hi = 80.0;
  /// EDM weighting (sigma^2 + sigma_data^2) / (sigma sigma_data)^2; off gives plain MSE.
  bool edm_weighting = true;
  /// Learning rate decays linearly to lr * final_lr_fraction by absolute step
  /// decay_steps (0 keeps it constant).
  int decay_steps = 0;
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;
  /// Divergence: loss above this factor times the initial loss ...
  double divergence_factor = 10.0;
  /// ... for this many consecutive steps aborts training.
  int divergence_patience = 100;

  void validate() const;
};

/// One training pair: clean target and its context.
struct TrainingExample {
  StateField x;
  TemporalContext ctx;
};

using DatasetGenerator = std::function<TrainingExample(Rng&)>;

/// Independent N(mean, var) cells; context frames are further independent draws.
DatasetGenerator gaussian_toy_dataset(const GridSpec& spec, double mean, double var);

enum class ContextMode { independent, evolved };

/// Periodic GRF targets. `independent` context frames carry no information
/// about the target; `evolved` frames are the trajectory leading to it.
DatasetGenerator grf_dataset(const GridSpec& spec, const GrfParams& grf,
                             ContextMode mode = ContextMode::independent,
                             const Dynamics& dyn = {}, double model_noise = 0.1);

/// Every cell equal to `value`.
DatasetGenerator constant_dataset(const GridSpec& spec, double value);

double draw_sigma(const TrainConfig& cfg, Rng& rng);

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double sigma_mean = 0.0;
  double grad_norm = 0.0;
};

/// Resumable optimizer state.
struct TrainState {
  StormParams params;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  int step = 0;

  static TrainState fresh(StormParams params);
};

struct TrainResult {
  TrainState state;
  std::vector<TrainLogRow> log;
  double initial_loss = 0.0;
  /// Mean loss over the last 10% of steps (at least 1).
  double final_smoothed_loss = 0.0;
};

/// Runs `cfg.steps` Adam steps from `state`. Each sample of step s draws from
/// Rng(seed, s * batch + i), so a resumed run reproduces an uninterrupted one
/// bit for bit. Throws NumericalError on divergence or non-finite loss.
TrainResult train_denoiser(const DatasetGenerator& data, TrainState state, const TrainConfig& cfg,
                           const std::function<void(const TrainLogRow&)>& on_step = {});

/// Convenience: fresh zero-residual init from the config seed.
TrainResult train_denoiser(const DatasetGenerator& data, const StormConfig& model,
                           const TrainConfig& cfg);

std::string train_log_csv(const std::vector<TrainLogRow>& log);

/// Expected loss of the exact denoiser for iid N(., prior_var) cells under the
/// training law and weighting (Monte Carlo over `samples` sigma draws).
double gaussian_toy_baseline(const TrainConfig& cfg, double prior_var, double sigma_data,
                             int samples = 200000);

/// Checkpoint = parameters plus Adam moments and step counter.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace sda
