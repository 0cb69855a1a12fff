#ifndef LAVREG_LAB_EXPERIMENTS_HPP
#define LAVREG_LAB_EXPERIMENTS_HPP

#include <string>
#include <vector>

#include "lab/config.hpp"
#include "lab/report.hpp"

namespace lavreg::lab {

struct RegistryEntry {
  std::string name;
  std::string operation;  // the rate_lab / parameter_rules operation it drives
  std::string description;
};

const std::vector<RegistryEntry>& experiment_registry();

/// Deterministic registry listing (byte-identical across runs).
std::string list_experiments();

/// Executes one experiment; does not touch the filesystem.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs = 1);

/// Full front-end path: run, write report.json + curves into the output
/// directory, print the one-line summary. Returns the process exit status:
/// 0 all invariants passed, 1 config/runtime error, 2 invariant failure or a
/// window error (diagnostic trace embedded in report.json).
int run(const std::string& config_path, const std::string& out_dir_override = "",
        int jobs = 1);

}  // namespace lavreg::lab

#endif  // LAVREG_LAB_EXPERIMENTS_HPP
