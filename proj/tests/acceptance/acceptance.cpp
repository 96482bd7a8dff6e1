// Acceptance suite: one PASS/FAIL line per criterion.
//
//   sda_acceptance            all criteria
//   sda_acceptance 3 7        only the listed criteria
//
// The exit status is 0 whenever every criterion ran to completion; a FAIL line
// is a measured result, not a crash.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <optional>
#include <set>
#include <string>

#include "sda/parallel.hpp"
#include "sda/recipes.hpp"

using namespace sda;
using namespace sda::recipes;

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };

  std::printf("# hardware threads: %d\n", hardware_workers());
  std::fflush(stdout);

  const ToyModelConfig toy = ToyModelConfig::defaults();
  std::optional<TrainResult> trained;
  auto model = [&]() -> const TrainResult& {
    if (!trained) {
      trained = train_toy_model(toy);
      std::printf("# %s\n", toy_training(toy, *trained).line().c_str());
      std::fflush(stdout);
    }
    return *trained;
  };

  int failed = 0, errors = 0;
  auto run = [&](int id, auto&& fn) {
    if (!wanted(id)) return;
    try {
      const CriterionReport r = fn();
      std::printf("%s\n", r.line().c_str());
      failed += r.pass() ? 0 : 1;
    } catch (const std::exception& e) {
      std::printf("FAIL [%d] error: %s\n", id, e.what());
      ++errors;
    }
    std::fflush(stdout);
  };

  run(1, [] { return conjugate_gaussian({}); });
  run(2, [] { return crps_monotonicity({}); });
  run(3, [] { return scaling_law(ScalingCriterionConfig::defaults()); });
  run(4, [] { return decoupling({}); });
  run(5, [] { return weak_scaling({}); });
  run(6, [] { return tiling_fidelity({}); });
  run(7, [] { return context_propagation({}); });
  run(8, [&] { return gradient_check({}, toy, &model().state.params); });
  run(9, [&] { return score_identity({}, toy, &model().state.params); });
  run(10, [] { return partition_of_unity(); });

  std::printf("# %d criteria failed, %d errored\n", failed, errors);
  return errors == 0 ? 0 : 1;
}
