#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sda/bench.hpp"
#include "sda/guidance.hpp"
#include "sda/storm.hpp"
#include "sda/train.hpp"

namespace sda::recipes {

/// One measured condition inside a criterion.
struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CriterionReport {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool pass() const;
  /// "PASS|FAIL [id] title: name=detail; ...".
  std::string line() const;
};

// 1. Posterior ensemble against the exact conjugate posterior.
struct ConjugateConfig {
  int edge = 16;
  double fraction = 0.2;
  double noise_var = 1.0;
  double prior_var = 1.0;
  int members = 1024;
  int n_steps = 200;
  int workers = 1;
  GuidanceSchedule guidance;
  std::uint64_t seed = 0;
  double rmse_tol = 0.05;  // times the prior standard deviation
  double var_tol = 0.20;   // relative, every observed cell
  double time_limit_s = 300.0;
};
CriterionReport conjugate_gaussian(const ConjugateConfig& cfg);

// 2. CRPS falls as the observed fraction grows.
struct CrpsConfig {
  int edge = 16;
  double length_scale = 4.0;
  std::vector<double> fractions{0.0, 0.1, 0.2};
  double noise_var = 0.1;
  int members = 256;
  int n_steps = 80;
  int seeds = 5;
  int required = 4;
  int workers = 1;
  GuidanceSchedule guidance;
};
CriterionReport crps_monotonicity(const CrpsConfig& cfg);

// 3. Wall-time scaling regimes and tiled memory.
struct ScalingCriterionConfig {
  ScalingConfig global;  // vit-global sweep
  ScalingConfig tiled;   // storm-tiled sweep
  double memory_from_tokens = 1e4;
  double time_limit_s = 900.0;

  static ScalingCriterionConfig defaults();
};
CriterionReport scaling_law(const ScalingCriterionConfig& cfg, std::vector<BenchRecord>* records = nullptr);

// 4. Counted flops versus the cost model, and K sensitivity.
struct DecouplingConfig {
  int edge = 32;
  int K = 4;
  int d_model = 16;
  int n_layers = 2;
  int n_heads = 2;
  int repeats = 5;
  std::uint64_t seed = 0;
  bool timing = true;  // off: flop counts only
};
CriterionReport decoupling(const DecouplingConfig& cfg);

// 5. Ensemble weak scaling.
CriterionReport weak_scaling(const EnsembleBenchConfig& cfg, double ratio_tol = 1.25);

// 6. Tiled versus global evaluation.
struct TilingFidelityConfig {
  int edge = 32;
  int core = 8;
  std::vector<int> halos{0, 2, 4};
  double length_scale = 4.0;
  int seeds = 5;
  int n_steps = 40;
};
CriterionReport tiling_fidelity(const TilingFidelityConfig& cfg);

// 7. Context propagation across tiles.
struct PropagationConfig {
  int core = 8;
  int tiles_per_side = 4;
  double length_scale = 4.0;
  int n_steps = 80;
  std::uint64_t seed = 0;
};
CriterionReport context_propagation(const PropagationConfig& cfg);

/// The trained toy denoiser shared by criteria 8 and 9: iid N(mean, var)
/// cells on an edge x edge grid.
struct ToyModelConfig {
  int edge = 8;
  double mean = 0.5;
  double var = 0.25;
  StormConfig model;
  TrainConfig train;

  static ToyModelConfig defaults();
  GridSpec grid() const;
};
TrainResult train_toy_model(const ToyModelConfig& cfg);

// 8. Likelihood-score gradients against finite differences.
struct GradientConfig {
  int triples = 20;
  double h = 1e-4;
  double gaussian_tol = 1e-5;
  double storm_tol = 1e-3;
  std::uint64_t seed = 0;
};
/// The trained-model check is skipped when `trained` is null.
CriterionReport gradient_check(const GradientConfig& cfg, const ToyModelConfig& toy,
                               const StormParams* trained);

// 9. Score identity and trained-score agreement.
struct ScoreConfig {
  double identity_tol = 1e-10;
  double cosine_min = 0.95;
  std::vector<double> sigmas{0.1, 1.0, 5.0};
  int samples = 20;
};
/// The trained-model check is skipped when `trained` is null.
CriterionReport score_identity(const ScoreConfig& cfg, const ToyModelConfig& toy,
                               const StormParams* trained);

// 10. Blend weights form a partition of unity.
CriterionReport partition_of_unity(double tol = 1e-12);

/// Toy-model convergence examples: RMSE against the closed form over the
/// training sigma law and final loss against the variance baseline.
CriterionReport toy_training(const ToyModelConfig& toy, const TrainResult& trained,
                             double rmse_tol = 0.05, double baseline_factor = 1.2);

}  // namespace sda::recipes
