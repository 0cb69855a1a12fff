#ifndef LAVREG_LAB_REPORT_HPP
#define LAVREG_LAB_REPORT_HPP

#include <string>
#include <vector>

#include <json.hpp>

namespace lavreg::lab {

/// One verifiable claim inside a report.
struct InvariantCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;

  nlohmann::json to_json() const {
    return {{"name", name}, {"passed", passed}, {"value", value}, {"threshold", threshold}};
  }
};

/// A curve serialized as a two-column CSV, "%.17g" fields.
struct Curve {
  std::string filename;
  std::string x_name;
  std::string y_name;
  std::vector<double> xs;
  std::vector<double> ys;
};

std::string curve_csv(const Curve& c);

/// Everything one experiment produces. report.json holds no timestamps, so
/// reruns with the same seeds are byte-identical; wall-clock metadata goes to
/// the run_meta.json sidecar.
struct ExperimentResult {
  std::string experiment;
  nlohmann::json results;
  std::vector<InvariantCheck> invariants;
  std::vector<Curve> curves;
  std::string summary;  // one line for stdout

  bool passed() const {
    for (const auto& c : invariants)
      if (!c.passed) return false;
    return true;
  }
};

nlohmann::json report_json(const ExperimentResult& r, const nlohmann::json& config_echo);

/// Writes report.json, the curve CSVs, and the run_meta.json sidecar into
/// out_dir (created if needed).
void write_result(const ExperimentResult& r, const nlohmann::json& config_echo,
                  const std::string& out_dir);

}  // namespace lavreg::lab

#endif  // LAVREG_LAB_REPORT_HPP
