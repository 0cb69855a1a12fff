#ifndef LAVREG_LAB_CONFIG_HPP
#define LAVREG_LAB_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lavreg/operators.hpp"

namespace lavreg::lab {

/// Config rejection with the failing field named, e.g. "rule.b0".
struct ConfigError : std::runtime_error {
  ConfigError(std::string fld, const std::string& msg)
      : std::runtime_error(fld + ": " + msg), field(std::move(fld)) {}
  std::string field;
};

struct LambdaSpec {
  std::string kind;  // inverse_index | inverse_index_clamped | inverse_index_with_null |
                     // exponential | explicit
  double floor = 0.0;
  std::vector<double> values;
};

struct OperatorCfg {
  std::string kind;  // integration | abel | diagonal
  int n = 0;
  double alpha = 0.5;
  LambdaSpec lambdas;
};

struct WitnessCfg {
  double p = 0.5;
  std::uint64_t seed = 1;
};

struct NoiseCfg {
  std::vector<double> delta_grid;  // decreasing
  std::uint64_t seed = 1;
};

struct RuleCfg {
  std::string name = "balance";  // MD | apriori | balance | functional | qfunctional
  double b0 = 1.5;
  double b1 = 2.0;
  double c = 1.0;
  double p = 0.9;
};

struct ExperimentConfig {
  std::string experiment;
  OperatorCfg op;
  WitnessCfg witness;
  NoiseCfg noise;
  RuleCfg rule;
  int grid_points = 80;
  std::optional<double> expected_slope;
  std::string output_dir = ".";
  nlohmann::json raw;  // echoed into the report
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);

DenseOperator<double> build_operator(const OperatorCfg& cfg);

}  // namespace lavreg::lab

#endif  // LAVREG_LAB_CONFIG_HPP
