#include "sda/gaussian.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>

#include "sda/error.hpp"
#include "sda/fft.hpp"

namespace sda {

GaussianPrior GaussianPrior::diagonal(const GridSpec& spec, std::vector<double> mean,
                                      std::vector<double> var) {
  if (mean.size() != spec.size() || var.size() != spec.size()) {
    throw ShapeError("diagonal prior: mean/var must have one entry per value");
  }
  for (double v : var) {
    if (!(v >= 0.0)) throw ConfigError("diagonal prior variances must be >= 0");
  }
  GaussianPrior p;
  p.kind = Kind::diagonal;
  p.spec = spec;
  p.mean = std::move(mean);
  p.var = std::move(var);
  return p;
}

GaussianPrior GaussianPrior::diagonal(const GridSpec& spec, double mean, double var) {
  return diagonal(spec, std::vector<double>(spec.size(), mean), std::vector<double>(spec.size(), var));
}

GaussianPrior GaussianPrior::stationary(const GridSpec& spec, const GrfParams& grf) {
  GaussianPrior p;
  p.kind = Kind::stationary;
  p.spec = spec;
  p.grf = grf;
  p.mean.assign(spec.size(), grf.mean);
  p.spectrum = grf_spectrum(spec.ny, spec.nx, grf);
  p.covariance = grf_covariance(spec.ny, spec.nx, grf);
  return p;
}

double GaussianPrior::cov(int r0, int c0, int r1, int c1) const {
  const int dr = ((r1 - r0) % spec.ny + spec.ny) % spec.ny;
  const int dc = ((c1 - c0) % spec.nx + spec.nx) % spec.nx;
  return covariance[static_cast<std::size_t>(dr) * spec.nx + dc];
}

struct GaussianDenoiser::CropBasis {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd values;
};

GaussianDenoiser::GaussianDenoiser(GaussianPrior prior) : prior_(std::move(prior)) {}

std::string GaussianDenoiser::name() const {
  return prior_.kind == GaussianPrior::Kind::diagonal ? "gaussian-diagonal" : "gaussian-stationary";
}

std::shared_ptr<const GaussianDenoiser::CropBasis> GaussianDenoiser::crop_basis(int rows,
                                                                                int cols) const {
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find({rows, cols});
    if (it != cache_.end()) return it->second;
  }
  const int n = rows * cols;
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) c(i, j) = prior_.cov(i / cols, i % cols, j / cols, j % cols);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  if (eig.info() != Eigen::Success) throw NumericalError("crop covariance eigendecomposition failed");
  auto basis = std::make_shared<CropBasis>();
  basis->vectors = eig.eigenvectors();
  basis->values = eig.eigenvalues().cwiseMax(0.0);
  std::lock_guard lock(cache_mutex_);
  return cache_.emplace(std::make_pair(rows, cols), std::move(basis)).first->second;
}

void GaussianDenoiser::shrink(std::vector<double>& d, double sigma, const GridSpec& local,
                              const Region& region) const {
  const double s2 = sigma * sigma;
  if (prior_.kind == GaussianPrior::Kind::diagonal) {
    for (int v = 0; v < local.n_vars; ++v) {
      for (int r = 0; r < local.ny; ++r) {
        for (int c = 0; c < local.nx; ++c) {
          const std::size_t li = (static_cast<std::size_t>(v) * local.ny + r) * local.nx + c;
          const std::size_t gi = (static_cast<std::size_t>(v) * prior_.spec.ny + r + region.row0) *
                                     prior_.spec.nx + c + region.col0;
          const double cv = prior_.var[gi];
          d[li] *= cv == 0.0 ? 0.0 : cv / (cv + s2);
        }
      }
    }
    return;
  }
  const std::size_t cells = local.cells();
  const bool whole = region.rows == prior_.spec.ny && region.cols == prior_.spec.nx;
  if (whole) {
    std::vector<std::complex<double>> buf(cells);
    for (int v = 0; v < local.n_vars; ++v) {
      double* dv = d.data() + v * cells;
      for (std::size_t i = 0; i < cells; ++i) buf[i] = dv[i];
      fft2(buf, local.ny, local.nx, false);
      for (std::size_t i = 0; i < cells; ++i) {
        const double lam = prior_.spectrum[i];
        buf[i] *= lam == 0.0 ? 0.0 : lam / (lam + s2);
      }
      fft2(buf, local.ny, local.nx, true);
      for (std::size_t i = 0; i < cells; ++i) dv[i] = buf[i].real() / static_cast<double>(cells);
    }
    return;
  }
  const auto basis = crop_basis(local.ny, local.nx);
  const Eigen::VectorXd gain =
      basis->values.unaryExpr([s2](double lam) { return lam == 0.0 ? 0.0 : lam / (lam + s2); });
  for (int v = 0; v < local.n_vars; ++v) {
    Eigen::Map<Eigen::VectorXd> dv(d.data() + v * cells, static_cast<Eigen::Index>(cells));
    const Eigen::VectorXd coeff = gain.cwiseProduct(basis->vectors.transpose() * dv);
    dv = basis->vectors * coeff;
  }
}

StateField GaussianDenoiser::evaluate_region(const StateField& z, double sigma,
                                             const TemporalContext&, const Region& region) const {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_denoise: sigma must be >= 0");
  const GridSpec& local = z.spec();
  if (local.n_vars != prior_.spec.n_vars || region.rows != local.ny || region.cols != local.nx ||
      region.row1() > prior_.spec.ny || region.col1() > prior_.spec.nx) {
    throw ShapeError("gaussian_denoise: field/region do not match the prior grid");
  }
  if (sigma == 0.0) return z;
  std::vector<double> d(z.size());
  std::vector<double> mu(z.size());
  for (int v = 0; v < local.n_vars; ++v) {
    for (int r = 0; r < local.ny; ++r) {
      for (int c = 0; c < local.nx; ++c) {
        const std::size_t li = z.index(v, r, c);
        const std::size_t gi = (static_cast<std::size_t>(v) * prior_.spec.ny + r + region.row0) *
                                   prior_.spec.nx + c + region.col0;
        mu[li] = prior_.mean[gi];
        d[li] = z[li] - mu[li];
      }
    }
  }
  shrink(d, sigma, local, region);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += mu[i];
  return StateField(local, std::move(d));
}

StateField GaussianDenoiser::vjp_region(const StateField& z, double sigma, const TemporalContext&,
                                        const StateField& cotangent, const Region& region) const {
  require_same_shape(z, cotangent, "gaussian vjp");
  if (sigma == 0.0) return cotangent;
  std::vector<double> d(cotangent.vector());
  shrink(d, sigma, z.spec(), region);
  return StateField(z.spec(), std::move(d));
}

}  // namespace sda
