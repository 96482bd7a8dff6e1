#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sda/diffusion.hpp"
#include "sda/gaussian.hpp"
#include "sda/guidance.hpp"
#include "sda/tiling.hpp"

namespace sda {

/// Exact posterior moments of a linear-Gaussian model.
struct GaussianPosterior {
  StateField mean;
  StateField var;  // per-value marginal variance
  /// Stationary case: posterior eigenvalues per Fourier mode (ny*nx).
  std::vector<double> spectrum;
};

/// Closed-form conjugate update. Diagonal priors are updated per value
/// (prior kept where unobserved). Stationary priors need a full mask with a
/// single R and are updated per Fourier mode. Anything else throws
/// CapabilityError; use dense_gaussian_posterior for those.
GaussianPosterior exact_gaussian_posterior(const GaussianPrior& prior,
                                           const ObservationOperator& op,
                                           const ObservationSet& y);

inline constexpr int kDenseOracleMaxDim = 256;

/// Dense mean and covariance (row-major dim x dim).
struct DenseGaussian {
  std::vector<double> mean;
  std::vector<double> cov;

  int dim() const { return static_cast<int>(mean.size()); }
  double var(int i) const { return cov[static_cast<std::size_t>(i) * dim() + i]; }
};

/// Kalman update with pointwise H selecting `observed` indices, solved by a
/// Cholesky factorization of H C H^T + R. Throws NumericalError when that
/// matrix is not positive definite and ConfigError above kDenseOracleMaxDim.
DenseGaussian dense_gaussian_posterior(const std::vector<double>& mean,
                                       const std::vector<double>& cov,
                                       const std::vector<std::size_t>& observed,
                                       const std::vector<double>& noise_var,
                                       const std::vector<double>& values);

/// Dense covariance of a prior over all values (small grids only).
std::vector<double> dense_covariance(const GaussianPrior& prior);

DenseGaussian dense_gaussian_posterior(const GaussianPrior& prior, const ObservationOperator& op,
                                       const ObservationSet& y);

struct FdResult {
  double numeric = 0.0;   // central difference
  double analytic = 0.0;  // <gradient, direction>
  double rel_error = 0.0;
};

/// Central difference (f(x + h v) - f(x - h v)) / 2h against <grad, v>.
/// Relative error is |numeric - analytic| / max(|numeric|, |analytic|), and 0
/// when both vanish.
FdResult fd_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& gradient, const std::vector<double>& point,
                  const std::vector<double>& direction, double h);

/// Score of the prior convolved with N(0, sigma^2 I): -(C + sigma^2 I)^{-1} (z - mu).
Score gaussian_score(const GaussianPrior& prior, const StateField& z, double sigma);

/// Optional posterior inputs for the audit.
struct AuditObservations {
  const ObservationOperator* op = nullptr;
  const ObservationSet* obs = nullptr;
  GuidanceSchedule guidance;
};

struct AuditRow {
  std::string plan;  // "c<core>h<halo>"
  int core = 0;
  int halo = 0;
  std::uint64_t seed = 0;
  std::string mode;       // prior | posterior
  double max_disc = 0.0;  // final samples, same seed
  double mean_disc = 0.0;
  double step_max_disc = 0.0;  // denoised fields along the global trajectory
  double step_mean_disc = 0.0;
};

/// For every (plan, seed) runs the global and the tiled sampler from the same
/// seed and compares final samples; also compares tiled and global denoised
/// fields at each state of the global trajectory. Grids above 64x64 are refused.
std::vector<AuditRow> tiled_vs_global_audit(const Denoiser& denoiser,
                                            const std::vector<TilePlan>& plans,
                                            const NoiseSchedule& schedule,
                                            const TemporalContext& ctx,
                                            const AuditObservations* observations,
                                            const std::vector<std::uint64_t>& seeds,
                                            SamplerMode mode = SamplerMode::sde,
                                            int workers = 1);

/// "plan,halo,seed,mode,max_disc,mean_disc".
std::string audit_csv(const std::vector<AuditRow>& rows);

}  // namespace sda
