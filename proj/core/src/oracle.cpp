#include "sda/oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "sda/error.hpp"
#include "sda/fft.hpp"
#include "sda/parallel.hpp"

namespace sda {

namespace {

void check_observations(const GaussianPrior& prior, const ObservationOperator& op,
                        const ObservationSet& y) {
  const GridSpec& g = op.spec();
  if (g.ny != prior.spec.ny || g.nx != prior.spec.nx || g.n_vars != prior.spec.n_vars) {
    throw ShapeError("observation operator does not match the prior grid");
  }
  if (y.size() != op.count() || y.noise_var.size() != y.size()) {
    throw ShapeError("observation set does not match the operator");
  }
  for (double r : y.noise_var) {
    if (!(r > 0.0)) throw ConfigError("posterior oracle needs R > 0 at observed entries");
  }
}

/// Applies the Fourier multiplier `gain(lambda)` to one variable's slice.
template <class Gain>
void spectral_filter(double* values, int ny, int nx, const std::vector<double>& spectrum,
                     Gain gain) {
  const std::size_t n = static_cast<std::size_t>(ny) * nx;
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = values[i];
  fft2(buf, ny, nx, false);
  for (std::size_t k = 0; k < n; ++k) buf[k] *= gain(spectrum[k]);
  fft2(buf, ny, nx, true);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = buf[i].real() * inv;
}

}  // namespace

GaussianPosterior exact_gaussian_posterior(const GaussianPrior& prior,
                                           const ObservationOperator& op,
                                           const ObservationSet& y) {
  check_observations(prior, op, y);
  const GridSpec& g = prior.spec;
  GaussianPosterior post{StateField(g, prior.mean), StateField(g), {}};

  if (prior.kind == GaussianPrior::Kind::diagonal) {
    for (std::size_t i = 0; i < g.size(); ++i) post.var[i] = prior.var[i];
    for (std::size_t k = 0; k < op.count(); ++k) {
      const std::size_t i = op.indices()[k];
      const double c = prior.var[i];
      const double r = y.noise_var[k];
      post.mean[i] = (r * prior.mean[i] + c * y.values[k]) / (c + r);
      post.var[i] = c * r / (c + r);
    }
    return post;
  }

  if (op.count() != g.size()) {
    throw CapabilityError("stationary prior with a partial mask has no per-mode update");
  }
  const double r = y.noise_var.empty() ? 0.0 : y.noise_var[0];
  for (double v : y.noise_var) {
    if (v != r) throw CapabilityError("stationary prior needs a single observation variance");
  }
  const std::size_t cells = g.cells();
  post.spectrum.resize(cells);
  double var_cell = 0.0;
  for (std::size_t k = 0; k < cells; ++k) {
    post.spectrum[k] = prior.spectrum[k] * r / (prior.spectrum[k] + r);
    var_cell += post.spectrum[k];
  }
  var_cell /= static_cast<double>(cells);
  // Full mask: indices are 0..size-1 in order, so y.values is laid out like the field.
  std::vector<double> innov(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) innov[i] = y.values[i] - prior.mean[i];
  for (int v = 0; v < g.n_vars; ++v) {
    double* slice = innov.data() + static_cast<std::size_t>(v) * cells;
    spectral_filter(slice, g.ny, g.nx, prior.spectrum, [r](double lam) { return lam / (lam + r); });
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    post.mean[i] = prior.mean[i] + innov[i];
    post.var[i] = var_cell;
  }
  return post;
}

DenseGaussian dense_gaussian_posterior(const std::vector<double>& mean,
                                       const std::vector<double>& cov,
                                       const std::vector<std::size_t>& observed,
                                       const std::vector<double>& noise_var,
                                       const std::vector<double>& values) {
  const auto n = static_cast<Eigen::Index>(mean.size());
  if (n > kDenseOracleMaxDim) {
    throw ConfigError("dense oracle is limited to " + std::to_string(kDenseOracleMaxDim) +
                      " state dimensions");
  }
  if (cov.size() != mean.size() * mean.size()) throw ShapeError("dense oracle: covariance size");
  const auto m = static_cast<Eigen::Index>(observed.size());
  if (noise_var.size() != observed.size() || values.size() != observed.size()) {
    throw ShapeError("dense oracle: observation lengths disagree");
  }
  for (std::size_t idx : observed) {
    if (idx >= mean.size()) throw ShapeError("dense oracle: observed index out of range");
  }
  DenseGaussian out{mean, cov};
  if (m == 0) return out;

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> c(cov.data(), n, n);
  const Eigen::Map<const Eigen::VectorXd> mu(mean.data(), n);

  Mat ch(n, m);  // C H^T
  for (Eigen::Index j = 0; j < m; ++j) ch.col(j) = c.col(static_cast<Eigen::Index>(observed[j]));
  Mat s(m, m);  // H C H^T + R
  Eigen::VectorXd innov(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto oi = static_cast<Eigen::Index>(observed[i]);
    for (Eigen::Index j = 0; j < m; ++j) s(i, j) = ch(oi, j);
    s(i, i) += noise_var[i];
    innov(i) = values[i] - mu(oi);
  }
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("dense oracle: innovation matrix is not positive definite");
  }
  const Eigen::VectorXd post_mean = mu + ch * llt.solve(innov);
  const Mat post_cov = c - ch * llt.solve(Mat(ch.transpose()));
  out.mean.assign(post_mean.data(), post_mean.data() + n);
  Eigen::Map<Mat>(out.cov.data(), n, n) = post_cov;
  return out;
}

std::vector<double> dense_covariance(const GaussianPrior& prior) {
  const GridSpec& g = prior.spec;
  const std::size_t n = g.size();
  if (n > static_cast<std::size_t>(kDenseOracleMaxDim)) {
    throw ConfigError("dense covariance is limited to " + std::to_string(kDenseOracleMaxDim) +
                      " values");
  }
  std::vector<double> cov(n * n, 0.0);
  if (prior.kind == GaussianPrior::Kind::diagonal) {
    for (std::size_t i = 0; i < n; ++i) cov[i * n + i] = prior.var[i];
    return cov;
  }
  const std::size_t cells = g.cells();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i / cells != j / cells) continue;  // variables are independent
      const std::size_t a = i % cells, b = j % cells;
      cov[i * n + j] = prior.cov(static_cast<int>(a / g.nx), static_cast<int>(a % g.nx),
                                 static_cast<int>(b / g.nx), static_cast<int>(b % g.nx));
    }
  }
  return cov;
}

DenseGaussian dense_gaussian_posterior(const GaussianPrior& prior, const ObservationOperator& op,
                                       const ObservationSet& y) {
  check_observations(prior, op, y);
  return dense_gaussian_posterior(prior.mean, dense_covariance(prior), op.indices(), y.noise_var,
                                  y.values);
}

FdResult fd_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& gradient, const std::vector<double>& point,
                  const std::vector<double>& direction, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be > 0");
  if (gradient.size() != point.size() || direction.size() != point.size()) {
    throw ShapeError("fd_check: gradient, point and direction lengths differ");
  }
  std::vector<double> plus(point), minus(point);
  for (std::size_t i = 0; i < point.size(); ++i) {
    plus[i] += h * direction[i];
    minus[i] -= h * direction[i];
  }
  FdResult r;
  r.numeric = (f(plus) - f(minus)) / (2.0 * h);
  for (std::size_t i = 0; i < point.size(); ++i) r.analytic += gradient[i] * direction[i];
  const double scale = std::max(std::abs(r.numeric), std::abs(r.analytic));
  r.rel_error = scale == 0.0 ? 0.0 : std::abs(r.numeric - r.analytic) / scale;
  return r;
}

Score gaussian_score(const GaussianPrior& prior, const StateField& z, double sigma) {
  const GridSpec& g = prior.spec;
  if (z.spec().ny != g.ny || z.spec().nx != g.nx || z.spec().n_vars != g.n_vars) {
    throw ShapeError("gaussian_score: state does not match the prior grid");
  }
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_score: sigma must be >= 0");
  const double s2 = sigma * sigma;
  StateField out(z.spec());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - prior.mean[i];
  if (prior.kind == GaussianPrior::Kind::diagonal) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double total = prior.var[i] + s2;
      if (!(total > 0.0)) throw NumericalError("gaussian_score: singular covariance");
      out[i] = -out[i] / total;
    }
    return {out};
  }
  for (double lam : prior.spectrum) {
    if (!(lam + s2 > 0.0)) throw NumericalError("gaussian_score: singular covariance");
  }
  const std::size_t cells = g.cells();
  for (int v = 0; v < g.n_vars; ++v) {
    double* slice = out.values().data() + static_cast<std::size_t>(v) * cells;
    spectral_filter(slice, g.ny, g.nx, prior.spectrum, [s2](double lam) { return -1.0 / (lam + s2); });
  }
  return {out};
}

std::vector<AuditRow> tiled_vs_global_audit(const Denoiser& denoiser,
                                            const std::vector<TilePlan>& plans,
                                            const NoiseSchedule& schedule,
                                            const TemporalContext& ctx,
                                            const AuditObservations* observations,
                                            const std::vector<std::uint64_t>& seeds,
                                            SamplerMode mode, int workers) {
  const bool posterior = observations != nullptr;
  if (posterior && (observations->op == nullptr || observations->obs == nullptr)) {
    throw ConfigError("audit observations need both an operator and a set");
  }
  std::vector<AuditRow> rows(plans.size() * seeds.size());
  for (const auto& plan : plans) {
    if (plan.grid().ny > 64 || plan.grid().nx > 64) {
      throw ConfigError("tiled-vs-global audit is limited to 64x64 grids");
    }
  }
  parallel_for(rows.size(), workers, [&](std::size_t job) {
    const TilePlan& plan = plans[job / seeds.size()];
    const std::uint64_t seed = seeds[job % seeds.size()];
    const GridSpec& spec = plan.grid();
    const TiledDenoiser tiled(denoiser, plan, 1);

    double step_max = 0.0, step_sum = 0.0;
    std::size_t step_count = 0;
    SamplerOptions global_opts;
    global_opts.mode = mode;
    global_opts.on_step = [&](int, const NoisyState& z) {
      if (z.sigma <= 0.0) return;
      const StateField a = denoiser.evaluate(z.z, z.sigma, ctx);
      const StateField b = tiled.evaluate(z.z, z.sigma, ctx);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        step_max = std::max(step_max, d);
        step_sum += d;
      }
      step_count += a.size();
    };
    SamplerOptions tiled_opts;
    tiled_opts.mode = mode;
    tiled_opts.tiling = &plan;

    auto run = [&](const SamplerOptions& opts) {
      Rng rng(seed);
      if (posterior) {
        return assimilate(denoiser, ctx, spec, *observations->obs, *observations->op, schedule,
                          observations->guidance, rng, opts);
      }
      return sample_prior(denoiser, ctx, spec, schedule, rng, opts);
    };
    const StateField global = run(global_opts);
    const StateField local = run(tiled_opts);

    AuditRow& row = rows[job];
    row.core = plan.core();
    row.halo = plan.halo();
    row.plan = "c" + std::to_string(plan.core()) + "h" + std::to_string(plan.halo());
    row.seed = seed;
    row.mode = posterior ? "posterior" : "prior";
    double sum = 0.0;
    for (std::size_t i = 0; i < global.size(); ++i) {
      const double d = std::abs(global[i] - local[i]);
      row.max_disc = std::max(row.max_disc, d);
      sum += d;
    }
    row.mean_disc = sum / static_cast<double>(global.size());
    row.step_max_disc = step_max;
    row.step_mean_disc = step_count ? step_sum / static_cast<double>(step_count) : 0.0;
  });
  return rows;
}

std::string audit_csv(const std::vector<AuditRow>& rows) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "plan,halo,seed,mode,max_disc,mean_disc\n";
  for (const auto& r : rows) {
    ss << r.plan << ',' << r.halo << ',' << r.seed << ',' << r.mode << ',' << r.max_disc << ','
       << r.mean_disc << '\n';
  }
  return ss.str();
}

}  // namespace sda
