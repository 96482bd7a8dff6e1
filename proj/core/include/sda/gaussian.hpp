#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "sda/denoiser.hpp"
#include "sda/grf.hpp"

namespace sda {

/// Gaussian prior N(mu, C) used by the closed-form denoiser and the oracles.
///
/// Diagonal: independent cells with per-value mean and variance.
/// Stationary: each variable is an independent periodic GRF whose covariance
/// is diagonal in Fourier space (eigenvalues `spectrum`).
struct GaussianPrior {
  enum class Kind { diagonal, stationary };

  Kind kind = Kind::diagonal;
  GridSpec spec;
  std::vector<double> mean;  // one per value
  std::vector<double> var;   // diagonal only, one per value
  GrfParams grf;             // stationary only
  std::vector<double> spectrum;    // stationary only, ny*nx
  std::vector<double> covariance;  // stationary only, periodic lag table ny*nx

  static GaussianPrior diagonal(const GridSpec& spec, std::vector<double> mean,
                                std::vector<double> var);
  static GaussianPrior diagonal(const GridSpec& spec, double mean, double var);
  static GaussianPrior stationary(const GridSpec& spec, const GrfParams& grf);

  /// Covariance between two cells of the same variable (global coordinates).
  double cov(int r0, int c0, int r1, int c1) const;
};

/// Exact conditional expectation x_hat = mu + C (C + sigma^2 I)^{-1} (z - mu).
///
/// Diagonal priors act per cell. Stationary priors use the Fourier filter
/// lambda / (lambda + sigma^2) on whole-domain calls; tile crops are not
/// periodic, so they get the dense conditional expectation of the crop's
/// marginal covariance (eigendecomposition cached per crop shape).
class GaussianDenoiser final : public Denoiser {
 public:
  explicit GaussianDenoiser(GaussianPrior prior);

  const GaussianPrior& prior() const { return prior_; }

  StateField evaluate_region(const StateField& z, double sigma, const TemporalContext& ctx,
                             const Region& region) const override;
  StateField vjp_region(const StateField& z, double sigma, const TemporalContext& ctx,
                        const StateField& cotangent, const Region& region) const override;
  bool has_vjp() const override { return true; }
  bool pointwise() const override { return prior_.kind == GaussianPrior::Kind::diagonal; }
  std::string name() const override;

 private:
  struct CropBasis;
  /// Applies the shrinkage operator C (C + sigma^2 I)^{-1} to `d` in place.
  void shrink(std::vector<double>& d, double sigma, const GridSpec& local,
              const Region& region) const;
  std::shared_ptr<const CropBasis> crop_basis(int rows, int cols) const;

  GaussianPrior prior_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const CropBasis>> cache_;
};

}  // namespace sda
