#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sda/denoiser.hpp"
#include "sda/diffusion.hpp"
#include "sda/field.hpp"
#include "sda/rng.hpp"

namespace sda {

/// Pointwise subsampling h(x) = x[mask] over (var, row, col).
class ObservationOperator {
 public:
  ObservationOperator() = default;
  ObservationOperator(GridSpec spec, std::vector<std::uint8_t> mask);

  /// Exactly llround(fraction * spec.size()) entries chosen by a seeded shuffle.
  static ObservationOperator random(const GridSpec& spec, double fraction, std::uint64_t seed);
  static ObservationOperator full(const GridSpec& spec);
  static ObservationOperator empty(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  /// Flat value indices of observed entries, ascending.
  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t count() const { return indices_.size(); }

  std::vector<double> apply(const StateField& x) const;
  /// Scatter observation-space values into a zero field (h transpose).
  StateField adjoint(const std::vector<double>& values) const;

 private:
  GridSpec spec_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> indices_;
};

/// Observed values in mask order with per-entry error variance.
struct ObservationSet {
  std::vector<double> values;
  std::vector<double> noise_var;

  std::size_t size() const { return values.size(); }
};

/// values = x[mask] + sqrt(R) eps.
ObservationSet observe(const StateField& x, const ObservationOperator& op, double noise_var, Rng& rng);

enum class GuidanceMode {
  constant,             // zeta_t = zeta0
  residual_normalized,  // zeta_t = zeta0 / ||y - h(xhat)||
  annealed,             // per-entry zeta0 R / (R + v_t), v_t = sigma^2 s^2 / (sigma^2 + s^2)
};

GuidanceMode parse_guidance_mode(const std::string& s);
std::string to_string(GuidanceMode mode);

struct GuidanceSchedule {
  GuidanceMode mode = GuidanceMode::annealed;
  double zeta0 = 0.5;
  /// Prior variance scale s^2 used by the annealed mode.
  double data_var = 1.0;
  /// Ablation only: replace the denoiser Jacobian by the identity.
  bool identity_jacobian = false;

  void validate() const;
};

/// Weight multiplying each entry's R^{-1} residual, for the given mode.
std::vector<double> guidance_weights(const GuidanceSchedule& sched, const ObservationSet& y,
                                     const std::vector<double>& residual, double sigma);

/// -zeta_t grad_z ||y - h(xhat(z))||^2_{R^-1}, computed as the denoiser vjp
/// with cotangent 2 zeta_t h^T R^{-1} (y - h(xhat)). `xhat` must equal
/// D(z, sigma; ctx).
Score likelihood_score(const NoisyState& z, const StateField& xhat, const ObservationSet& y,
                       const ObservationOperator& op, const Denoiser& denoiser,
                       const TemporalContext& ctx, const GuidanceSchedule& sched,
                       double sigma_floor);

/// Convenience overload that evaluates xhat itself.
Score likelihood_score(const NoisyState& z, const ObservationSet& y, const ObservationOperator& op,
                       const Denoiser& denoiser, const TemporalContext& ctx,
                       const GuidanceSchedule& sched, double sigma_floor);

Score posterior_score(const Score& prior, const Score& lik);

/// One posterior sample by reverse sampling with the posterior score.
StateField assimilate(const Denoiser& denoiser, const TemporalContext& ctx, const GridSpec& spec,
                      const ObservationSet& y, const ObservationOperator& op,
                      const NoiseSchedule& schedule, const GuidanceSchedule& sched, Rng& rng,
                      const SamplerOptions& options = {});

/// Observation CSV "var,row,col,value" plus a JSON sidecar (path + ".json")
/// holding R, the mask seed and the grid.
struct ObservationFile {
  ObservationOperator op;
  ObservationSet obs;
  std::uint64_t mask_seed = 0;
  double fraction = 0.0;
};

void write_observations(const std::filesystem::path& csv, const ObservationFile& file);
ObservationFile read_observations(const std::filesystem::path& csv, const GridSpec& spec);

}  // namespace sda
