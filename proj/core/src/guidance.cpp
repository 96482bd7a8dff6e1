#include "sda/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sda/error.hpp"
#include "sda/io.hpp"

namespace sda {

ObservationOperator::ObservationOperator(GridSpec spec, std::vector<std::uint8_t> mask)
    : spec_(spec), mask_(std::move(mask)) {
  if (mask_.size() != spec_.size()) throw ShapeError("observation mask does not match the grid");
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (mask_[i] != 0) indices_.push_back(i);
  }
}

ObservationOperator ObservationOperator::random(const GridSpec& spec, double fraction,
                                                std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("observation fraction must lie in [0, 1]");
  const std::size_t n = spec.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, 0x0B5ull);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < count; ++i) mask[order[i]] = 1;
  return ObservationOperator(spec, std::move(mask));
}

ObservationOperator ObservationOperator::full(const GridSpec& spec) {
  return ObservationOperator(spec, std::vector<std::uint8_t>(spec.size(), 1));
}

ObservationOperator ObservationOperator::empty(const GridSpec& spec) {
  return ObservationOperator(spec, std::vector<std::uint8_t>(spec.size(), 0));
}

std::vector<double> ObservationOperator::apply(const StateField& x) const {
  if (x.size() != mask_.size()) throw ShapeError("observation operator: field shape mismatch");
  std::vector<double> out(indices_.size());
  for (std::size_t i = 0; i < indices_.size(); ++i) out[i] = x[indices_[i]];
  return out;
}

StateField ObservationOperator::adjoint(const std::vector<double>& values) const {
  if (values.size() != indices_.size()) throw ShapeError("observation adjoint: length mismatch");
  StateField out(spec_);
  for (std::size_t i = 0; i < indices_.size(); ++i) out[indices_[i]] = values[i];
  return out;
}

ObservationSet observe(const StateField& x, const ObservationOperator& op, double noise_var, Rng& rng) {
  if (!(noise_var >= 0.0)) throw ConfigError("observation noise variance must be >= 0");
  ObservationSet y;
  y.values = op.apply(x);
  y.noise_var.assign(y.values.size(), noise_var);
  const double sd = std::sqrt(noise_var);
  if (sd > 0.0) {
    for (double& v : y.values) v += sd * rng.normal();
  }
  return y;
}

GuidanceMode parse_guidance_mode(const std::string& s) {
  if (s == "constant") return GuidanceMode::constant;
  if (s == "residual_normalized") return GuidanceMode::residual_normalized;
  if (s == "annealed") return GuidanceMode::annealed;
  throw ConfigError("guidance mode must be constant, residual_normalized or annealed, got '" + s + "'");
}

std::string to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::constant: return "constant";
    case GuidanceMode::residual_normalized: return "residual_normalized";
    case GuidanceMode::annealed: return "annealed";
  }
  return "?";
}

void GuidanceSchedule::validate() const {
  if (!(zeta0 >= 0.0)) throw ConfigError("guidance zeta0 must be >= 0");
  if (!(data_var > 0.0)) throw ConfigError("guidance data_var must be > 0");
}

std::vector<double> guidance_weights(const GuidanceSchedule& sched, const ObservationSet& y,
                                     const std::vector<double>& residual, double sigma) {
  std::vector<double> w(y.size(), sched.zeta0);
  switch (sched.mode) {
    case GuidanceMode::constant:
      break;
    case GuidanceMode::residual_normalized: {
      double norm = 0.0;
      for (double r : residual) norm += r * r;
      norm = std::sqrt(norm);
      const double zeta = norm > 0.0 ? sched.zeta0 / norm : 0.0;
      std::fill(w.begin(), w.end(), zeta);
      break;
    }
    case GuidanceMode::annealed: {
      const double s2 = sigma * sigma;
      const double vt = s2 * sched.data_var / (s2 + sched.data_var);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = sched.zeta0 * y.noise_var[i] / (y.noise_var[i] + vt);
      }
      break;
    }
  }
  return w;
}

Score likelihood_score(const NoisyState& z, const StateField& xhat, const ObservationSet& y,
                       const ObservationOperator& op, const Denoiser& denoiser,
                       const TemporalContext& ctx, const GuidanceSchedule& sched,
                       double sigma_floor) {
  sched.validate();
  if (!(z.sigma >= sigma_floor) || z.sigma <= 0.0) {
    throw ConfigError("likelihood score requested at sigma below the floor");
  }
  if (y.size() != op.count() || y.noise_var.size() != y.size()) {
    throw ShapeError("observation set does not match the operator");
  }
  require_same_shape(z.z, xhat, "likelihood_score");
  for (double r : y.noise_var) {
    if (!(r > 0.0)) throw ConfigError("likelihood score needs R > 0 for every observed entry");
  }
  if (op.count() == 0) return Score{StateField(z.z.spec())};

  const std::vector<double> hx = op.apply(xhat);
  std::vector<double> residual(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y.values[i] - hx[i];
  const std::vector<double> w = guidance_weights(sched, y, residual, z.sigma);
  std::vector<double> cot(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) cot[i] = 2.0 * w[i] * residual[i] / y.noise_var[i];
  const StateField cotangent = op.adjoint(cot);
  if (sched.identity_jacobian) return Score{cotangent};
  Score s{denoiser.vjp(z.z, z.sigma, ctx, cotangent)};
  if (!s.values.all_finite()) throw NumericalError("non-finite likelihood score");
  return s;
}

Score likelihood_score(const NoisyState& z, const ObservationSet& y, const ObservationOperator& op,
                       const Denoiser& denoiser, const TemporalContext& ctx,
                       const GuidanceSchedule& sched, double sigma_floor) {
  return likelihood_score(z, denoiser.evaluate(z.z, z.sigma, ctx), y, op, denoiser, ctx, sched,
                          sigma_floor);
}

Score posterior_score(const Score& prior, const Score& lik) {
  require_same_shape(prior.values, lik.values, "posterior_score");
  return Score{prior.values + lik.values};
}

StateField assimilate(const Denoiser& denoiser, const TemporalContext& ctx, const GridSpec& spec,
                      const ObservationSet& y, const ObservationOperator& op,
                      const NoiseSchedule& schedule, const GuidanceSchedule& sched, Rng& rng,
                      const SamplerOptions& options) {
  sched.validate();
  if (op.spec().ny != spec.ny || op.spec().nx != spec.nx || op.spec().n_vars != spec.n_vars) throw ShapeError("observation operator does not match the grid");
  if (op.count() == 0 || sched.zeta0 == 0.0) {
    return run_reverse(denoiser, ctx, spec, schedule, rng, options, {});
  }
  const double floor = schedule.sigma_floor();
  const ScoreCorrection correction = [&](const Denoiser& active, const NoisyState& z,
                                         const StateField& xhat, Score& score) {
    const Score lik = likelihood_score(z, xhat, y, op, active, ctx, sched, floor);
    score = posterior_score(score, lik);
  };
  return run_reverse(denoiser, ctx, spec, schedule, rng, options, correction);
}

void write_observations(const std::filesystem::path& csv, const ObservationFile& file) {
  const GridSpec& g = file.op.spec();
  if (file.obs.size() != file.op.count()) throw ShapeError("observation file: set/operator mismatch");
  std::ostringstream ss;
  ss << "var,row,col,value\n" << std::setprecision(17);
  for (std::size_t i = 0; i < file.op.count(); ++i) {
    const std::size_t idx = file.op.indices()[i];
    const std::size_t cells = g.cells();
    const int v = static_cast<int>(idx / cells);
    const int r = static_cast<int>((idx % cells) / g.nx);
    const int c = static_cast<int>(idx % g.nx);
    ss << v << ',' << r << ',' << c << ',' << file.obs.values[i] << '\n';
  }
  write_text(csv, ss.str());

  nlohmann::json j;
  j["grid"] = {{"ny", g.ny}, {"nx", g.nx}, {"n_vars", g.n_vars}};
  j["n_obs"] = file.op.count();
  j["mask_seed"] = file.mask_seed;
  j["fraction"] = file.fraction;
  j["R"] = file.obs.noise_var;
  write_text(csv.string() + ".json", j.dump(2) + "\n");
}

ObservationFile read_observations(const std::filesystem::path& csv, const GridSpec& spec) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(csv.string() + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("observation sidecar: ") + e.what());
  }
  if (j.at("grid").at("ny") != spec.ny || j.at("grid").at("nx") != spec.nx ||
      j.at("grid").at("n_vars") != spec.n_vars) {
    throw ShapeError("observation file grid does not match");
  }
  std::istringstream in(read_text(csv));
  std::string line;
  std::getline(in, line);
  if (line != "var,row,col,value") throw FormatError("observation CSV header mismatch");
  std::vector<std::uint8_t> mask(spec.size(), 0);
  std::vector<std::pair<std::size_t, double>> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int v = 0, r = 0, c = 0;
    double val = 0.0;
    char comma = 0;
    std::istringstream ls(line);
    if (!(ls >> v >> comma >> r >> comma >> c >> comma >> val)) throw FormatError("bad observation row: " + line);
    if (v < 0 || v >= spec.n_vars || r < 0 || r >= spec.ny || c < 0 || c >= spec.nx) {
      throw FormatError("observation outside the grid: " + line);
    }
    const std::size_t idx = (static_cast<std::size_t>(v) * spec.ny + r) * spec.nx + c;
    mask[idx] = 1;
    entries.push_back({idx, val});
  }
  std::sort(entries.begin(), entries.end());
  ObservationFile file;
  file.op = ObservationOperator(spec, std::move(mask));
  if (file.op.count() != entries.size()) throw FormatError("duplicate observation entries");
  for (const auto& e : entries) file.obs.values.push_back(e.second);
  const auto R = j.at("R").get<std::vector<double>>();
  if (R.size() == 1) {
    file.obs.noise_var.assign(entries.size(), R[0]);
  } else if (R.size() == entries.size()) {
    file.obs.noise_var = R;  // stored in mask order
  } else {
    throw FormatError("observation sidecar R has the wrong length");
  }
  file.mask_seed = j.value("mask_seed", std::uint64_t{0});
  file.fraction = j.value("fraction", 0.0);
  return file;
}

}  // namespace sda
