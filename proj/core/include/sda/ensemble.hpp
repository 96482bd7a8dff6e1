#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sda/field.hpp"
#include "sda/rng.hpp"

namespace sda {

enum class Provenance { prior, posterior };

std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& s);

struct Ensemble {
  std::vector<StateField> members;
  Provenance provenance = Provenance::prior;
  std::uint64_t seed = 0;
  /// Free-form description of what produced the members.
  std::string fingerprint;

  int size() const { return static_cast<int>(members.size()); }
};

/// Draws one member from its own generator.
using MemberSampler = std::function<StateField(int member, Rng& rng)>;

/// Member i draws from rng.substream(i), so the ensemble is identical for any
/// worker count. A failing member is reported by index.
Ensemble generate_ensemble(int n, const MemberSampler& sampler, int workers, const Rng& rng,
                           Provenance provenance, std::string fingerprint = {});

StateField ensemble_mean(const Ensemble& ens);

/// Root mean square difference over all values.
double rmse(const StateField& estimate, const StateField& truth);

struct Spread {
  StateField per_cell;  // unbiased standard deviation
  double mean = 0.0;    // mean of per_cell
};

/// Throws ConfigError for fewer than two members.
Spread spread(const Ensemble& ens);

/// Mean over cells of E|X - y| - 0.5 E|X - X'|, the pair term averaged over all
/// ordered pairs including i = j. `unbiased` rescales the pair term by n / (n - 1).
double crps(const Ensemble& ens, const StateField& truth, bool unbiased = false);

struct SpreadSkill {
  double ratio = 0.0;
  /// Set when the ensemble mean matches the truth exactly; ratio is then +inf.
  bool infinite = false;
};

/// Mean spread divided by the RMSE of the ensemble mean.
SpreadSkill spread_skill(const Ensemble& ens, const StateField& truth);

struct MetricRow {
  std::string metric;
  double value = 0.0;
  int n_members = 0;
  Provenance provenance = Provenance::prior;
  std::uint64_t seed = 0;
};

/// rmse, spread, crps and spread_skill rows for one ensemble.
std::vector<MetricRow> ensemble_metrics(const Ensemble& ens, const StateField& truth);

/// "metric,value,n_members,provenance,seed".
std::string metrics_csv(const std::vector<MetricRow>& rows);

/// One field container per member: dir/member_0000.sdaf, ...
std::vector<std::filesystem::path> write_ensemble(const std::filesystem::path& dir,
                                                  const Ensemble& ens);

}  // namespace sda
