#pragma once

#include <vector>

#include "sda/field.hpp"
#include "sda/rng.hpp"

namespace sda {

/// Stationary squared-exponential Gaussian random field on a periodic grid.
struct GrfParams {
  double length_scale = 4.0;  // cells; +inf gives a spatially constant offset
  double variance = 1.0;
  double mean = 0.0;
};

void validate(const GrfParams& grf);

/// Eigenvalues of the circulant covariance (one per Fourier mode, row-major
/// ny x nx), clipped at zero so the embedding is positive semi-definite.
std::vector<double> grf_spectrum(int ny, int nx, const GrfParams& grf);

/// Covariance c(dr, dc) implied by the clipped spectrum, indexed by periodic
/// lag [dr * nx + dc]. This is the exact covariance of sample_grf draws.
std::vector<double> grf_covariance(int ny, int nx, const GrfParams& grf);

/// Independent GRF draw per variable via circulant embedding.
StateField sample_grf(const GridSpec& spec, const GrfParams& grf, Rng& rng);

/// Toy forecast model f: circular shift then a 3-point smoothing stencil
/// (weights smooth, 1 - 2 smooth, smooth) along columns.
struct Dynamics {
  int shift_rows = 0;
  int shift_cols = 1;
  double smooth = 0.25;

  static Dynamics identity() { return {0, 0, 0.0}; }
  static Dynamics pure_shift(int cols) { return {0, cols, 0.0}; }
};

/// One forecast step: f(x) + model_noise * N(0, I).
StateField advance(const StateField& x, const Dynamics& dyn, double model_noise, Rng& rng);

/// K frames, frame 0 = x0 and frame j+1 = advance(frame j).
TemporalContext evolve_context(const StateField& x0, int K, double model_noise, Rng& rng,
                               const Dynamics& dyn = {});

}  // namespace sda
