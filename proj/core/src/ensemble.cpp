#include "sda/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <sstream>

#include "sda/error.hpp"
#include "sda/io.hpp"
#include "sda/parallel.hpp"

namespace sda {

std::string to_string(Provenance p) { return p == Provenance::prior ? "prior" : "posterior"; }

Provenance parse_provenance(const std::string& s) {
  if (s == "prior") return Provenance::prior;
  if (s == "posterior") return Provenance::posterior;
  throw ConfigError("mode must be prior or posterior, got '" + s + "'");
}

namespace {

template <class E>
[[noreturn]] void rethrow_with_member(const E& e, int member) {
  throw E("ensemble member " + std::to_string(member) + ": " + e.what());
}

}  // namespace

Ensemble generate_ensemble(int n, const MemberSampler& sampler, int workers, const Rng& rng,
                           Provenance provenance, std::string fingerprint) {
  if (n < 1) throw ConfigError("ensemble size must be >= 1");
  Ensemble ens;
  ens.provenance = provenance;
  ens.seed = rng.seed();
  ens.fingerprint = std::move(fingerprint);
  ens.members.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const int member = static_cast<int>(i);
    Rng local = rng.substream(i);
    try {
      ens.members[i] = sampler(member, local);
    } catch (const NumericalError& e) {
      rethrow_with_member(e, member);
    } catch (const ConfigError& e) {
      rethrow_with_member(e, member);
    } catch (const ShapeError& e) {
      rethrow_with_member(e, member);
    } catch (const CapabilityError& e) {
      rethrow_with_member(e, member);
    }
  });
  for (std::size_t i = 1; i < ens.members.size(); ++i) {
    require_same_shape(ens.members[0], ens.members[i], "generate_ensemble");
  }
  return ens;
}

namespace {

void require_members(const Ensemble& ens, int min_members, const char* what) {
  if (ens.size() < min_members) {
    throw ConfigError(std::string(what) + " needs at least " + std::to_string(min_members) +
                      " members");
  }
  for (const auto& m : ens.members) require_same_shape(ens.members[0], m, what);
}

}  // namespace

StateField ensemble_mean(const Ensemble& ens) {
  require_members(ens, 1, "ensemble_mean");
  StateField mean(ens.members[0].spec());
  for (const auto& m : ens.members) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += m[i];
  }
  const double inv = 1.0 / ens.size();
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] *= inv;
  return mean;
}

double rmse(const StateField& estimate, const StateField& truth) {
  require_same_shape(estimate, truth, "rmse");
  if (estimate.size() == 0) throw ShapeError("rmse of an empty field");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = estimate[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

Spread spread(const Ensemble& ens) {
  require_members(ens, 2, "spread");
  const StateField mean = ensemble_mean(ens);
  Spread s;
  s.per_cell = StateField(mean.spec());
  for (const auto& m : ens.members) {
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = m[i] - mean[i];
      s.per_cell[i] += d * d;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    s.per_cell[i] = std::sqrt(s.per_cell[i] / (ens.size() - 1));
    total += s.per_cell[i];
  }
  s.mean = total / static_cast<double>(mean.size());
  return s;
}

double crps(const Ensemble& ens, const StateField& truth, bool unbiased) {
  require_members(ens, unbiased ? 2 : 1, "crps");
  require_same_shape(ens.members[0], truth, "crps");
  const std::size_t n = ens.members.size();
  const double dn = static_cast<double>(n);
  std::vector<double> x(n);
  double total = 0.0;
  for (std::size_t cell = 0; cell < truth.size(); ++cell) {
    double abs_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ens.members[i][cell];
      abs_err += std::abs(x[i] - truth[cell]);
    }
    // Sum over ordered pairs of |x_i - x_j| from the sorted order statistics.
    std::sort(x.begin(), x.end());
    double pair = 0.0;
    for (std::size_t i = 0; i < n; ++i) pair += (2.0 * i - dn + 1.0) * x[i];
    pair *= 2.0;
    const double pair_mean = unbiased ? pair / (dn * (dn - 1.0)) : pair / (dn * dn);
    total += abs_err / dn - 0.5 * pair_mean;
  }
  return total / static_cast<double>(truth.size());
}

SpreadSkill spread_skill(const Ensemble& ens, const StateField& truth) {
  const Spread s = spread(ens);
  const double err = rmse(ensemble_mean(ens), truth);
  if (err == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {s.mean / err, false};
}

std::vector<MetricRow> ensemble_metrics(const Ensemble& ens, const StateField& truth) {
  std::vector<MetricRow> rows;
  auto add = [&](const char* name, double v) {
    rows.push_back({name, v, ens.size(), ens.provenance, ens.seed});
  };
  add("rmse", rmse(ensemble_mean(ens), truth));
  if (ens.size() >= 2) {
    add("spread", spread(ens).mean);
    add("spread_skill", spread_skill(ens, truth).ratio);
  }
  add("crps", crps(ens, truth));
  return rows;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "metric,value,n_members,provenance,seed\n";
  for (const auto& r : rows) {
    ss << r.metric << ',';
    if (std::isinf(r.value)) {
      ss << (r.value > 0 ? "inf" : "-inf");
    } else {
      ss << r.value;
    }
    ss << ',' << r.n_members << ',' << to_string(r.provenance) << ',' << r.seed << '\n';
  }
  return ss.str();
}

std::vector<std::filesystem::path> write_ensemble(const std::filesystem::path& dir,
                                                  const Ensemble& ens) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (int i = 0; i < ens.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%04d.sdaf", i);
    const auto path = dir / name;
    write_fields(path, std::span<const StateField>(&ens.members[static_cast<std::size_t>(i)], 1));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace sda
