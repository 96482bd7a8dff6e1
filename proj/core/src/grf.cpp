#include "sda/grf.hpp"

#include <cmath>
#include <complex>

#include "sda/error.hpp"
#include "sda/fft.hpp"

namespace sda {
namespace {

int periodic_lag(int d, int n) { return std::min(d, n - d); }

}  // namespace

void validate(const GrfParams& grf) {
  if (!(grf.length_scale > 0.0)) throw ConfigError("GRF length_scale must be > 0");
  if (!(grf.variance >= 0.0)) throw ConfigError("GRF variance must be >= 0");
  if (!std::isfinite(grf.mean)) throw ConfigError("GRF mean must be finite");
}

std::vector<double> grf_spectrum(int ny, int nx, const GrfParams& grf) {
  validate(grf);
  const std::size_t n = static_cast<std::size_t>(ny) * nx;
  std::vector<std::complex<double>> c(n);
  for (int r = 0; r < ny; ++r) {
    for (int col = 0; col < nx; ++col) {
      double value = grf.variance;
      if (std::isfinite(grf.length_scale)) {
        const double dr = periodic_lag(r, ny);
        const double dc = periodic_lag(col, nx);
        value *= std::exp(-(dr * dr + dc * dc) / (2.0 * grf.length_scale * grf.length_scale));
      }
      c[static_cast<std::size_t>(r) * nx + col] = value;
    }
  }
  fft2(c, ny, nx, /*inverse=*/false);
  std::vector<double> lambda(n);
  for (std::size_t i = 0; i < n; ++i) lambda[i] = std::max(0.0, c[i].real());
  return lambda;
}

std::vector<double> grf_covariance(int ny, int nx, const GrfParams& grf) {
  const auto lambda = grf_spectrum(ny, nx, grf);
  const std::size_t n = lambda.size();
  std::vector<std::complex<double>> c(lambda.begin(), lambda.end());
  fft2(c, ny, nx, /*inverse=*/true);
  std::vector<double> cov(n);
  for (std::size_t i = 0; i < n; ++i) cov[i] = c[i].real() / static_cast<double>(n);
  return cov;
}

StateField sample_grf(const GridSpec& spec, const GrfParams& grf, Rng& rng) {
  const auto lambda = grf_spectrum(spec.ny, spec.nx, grf);
  const std::size_t n = lambda.size();
  StateField out(spec, grf.mean);
  std::vector<std::complex<double>> w(n);
  for (int v = 0; v < spec.n_vars; ++v) {
    for (std::size_t i = 0; i < n; ++i) {
      const double scale = std::sqrt(lambda[i] / static_cast<double>(n));
      const double a = rng.normal();
      const double b = rng.normal();
      w[i] = {scale * a, scale * b};
    }
    fft2(w, spec.ny, spec.nx, /*inverse=*/false);
    double* dst = &out.values()[out.index(v, 0, 0)];
    for (std::size_t i = 0; i < n; ++i) dst[i] = grf.mean + w[i].real();
  }
  return out;
}

StateField advance(const StateField& x, const Dynamics& dyn, double model_noise, Rng& rng) {
  const GridSpec& spec = x.spec();
  const int ny = spec.ny;
  const int nx = spec.nx;
  auto wrap = [](int i, int n) { return ((i % n) + n) % n; };
  StateField shifted(spec);
  for (int v = 0; v < spec.n_vars; ++v) {
    for (int r = 0; r < ny; ++r) {
      for (int c = 0; c < nx; ++c) {
        shifted.at(v, wrap(r + dyn.shift_rows, ny), wrap(c + dyn.shift_cols, nx)) = x.at(v, r, c);
      }
    }
  }
  StateField out(spec);
  const double s = dyn.smooth;
  for (int v = 0; v < spec.n_vars; ++v) {
    for (int r = 0; r < ny; ++r) {
      for (int c = 0; c < nx; ++c) {
        double value = shifted.at(v, r, c);
        if (s != 0.0) {
          value = s * shifted.at(v, r, wrap(c - 1, nx)) + (1.0 - 2.0 * s) * value +
                  s * shifted.at(v, r, wrap(c + 1, nx));
        }
        if (model_noise != 0.0) value += model_noise * rng.normal();
        out.at(v, r, c) = value;
      }
    }
  }
  return out;
}

TemporalContext evolve_context(const StateField& x0, int K, double model_noise, Rng& rng,
                               const Dynamics& dyn) {
  if (K < 1) throw ConfigError("evolve_context: K must be >= 1");
  std::vector<StateField> frames;
  frames.reserve(static_cast<std::size_t>(K));
  frames.push_back(x0);
  for (int k = 1; k < K; ++k) frames.push_back(advance(frames.back(), dyn, model_noise, rng));
  return TemporalContext(std::move(frames));
}

}  // namespace sda
