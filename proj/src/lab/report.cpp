#include "lab/report.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace lavreg::lab {

std::string curve_csv(const Curve& c) {
  std::string out = c.x_name + "," + c.y_name + "\n";
  char buf[96];
  for (std::size_t i = 0; i < c.xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", c.xs[i], c.ys[i]);
    out += buf;
  }
  return out;
}

nlohmann::json report_json(const ExperimentResult& r, const nlohmann::json& config_echo) {
  nlohmann::json inv = nlohmann::json::array();
  for (const auto& c : r.invariants) inv.push_back(c.to_json());
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : r.curves) curves.push_back(c.filename);
  return {{"experiment", r.experiment},
          {"config", config_echo},
          {"results", r.results},
          {"invariants", inv},
          {"curves", curves},
          {"passed", r.passed()}};
}

void write_result(const ExperimentResult& r, const nlohmann::json& config_echo,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "report.json");
    out << report_json(r, config_echo).dump(2) << "\n";
  }
  for (const auto& c : r.curves) {
    std::ofstream out(fs::path(out_dir) / c.filename);
    out << curve_csv(c);
  }
  {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    nlohmann::json meta = {
        {"unix_millis",
         std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
    std::ofstream out(fs::path(out_dir) / "run_meta.json");
    out << meta.dump(2) << "\n";
  }
}

}  // namespace lavreg::lab
