#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace sda::cli {

/// A subcommand returns the process exit code; errors propagate as exceptions.
struct Command {
  std::string name;
  std::string help;
  int (*run)(const RunConfig& config);
};

const std::vector<Command>& commands();

int cmd_generate_data(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_assimilate(const RunConfig& config);
int cmd_bench(const RunConfig& config);
int cmd_bench_scaling(const RunConfig& config);
int cmd_bench_ensemble(const RunConfig& config);
int cmd_bench_frontier(const RunConfig& config);
int cmd_verify(const RunConfig& config);
int cmd_probe_propagation(const RunConfig& config);

}  // namespace sda::cli
