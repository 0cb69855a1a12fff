#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "lab/experiments.hpp"

using namespace lavreg::lab;
namespace fs = std::filesystem;

namespace {

nlohmann::json exact_rate_config() {
  return {{"experiment", "exact-rate"},
          {"operator",
           {{"kind", "diagonal"},
            {"n", 200},
            {"lambdas-spec", {{"kind", "inverse_index"}}}}},
          {"witness", {{"p", 0.5}, {"seed", 11}}},
          {"grid", {{"points", 70}}}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  TempDir(const char* tag) : path(fs::temp_directory_path() / tag) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parses and validates") {
  auto cfg = parse_config(exact_rate_config());
  CHECK(cfg.experiment == "exact-rate");
  CHECK(cfg.op.n == 200);
  CHECK(cfg.witness.p == 0.5);
  CHECK(cfg.grid_points == 70);
}

TEST_CASE("config rejection names the failing field") {
  auto j = exact_rate_config();
  j["experiment"] = "mystery";
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("experiment"), ConfigError);

  j = exact_rate_config();
  j["operator"]["n"] = 1;
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("operator.n"), ConfigError);

  j = exact_rate_config();
  j["operator"].erase("lambdas-spec");
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("operator.lambdas-spec"),
                       ConfigError);

  // MD band constants at or below M = 1 must be rejected by name
  j = exact_rate_config();
  j["experiment"] = "md-sweep";
  j["rule"] = {{"name", "MD"}, {"b0", 0.5}, {"b1", 2.0}};
  try {
    parse_config(j);
    FAIL("expected rejection of rule.b0");
  } catch (const ConfigError& e) {
    CHECK(e.field == "rule.b0");
    CHECK(std::string(e.what()).find("M = 1") != std::string::npos);
  }

  j = exact_rate_config();
  j["noise"] = {{"delta-grid", {1e-3, 1e-2}}};  // increasing: rejected
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("noise.delta-grid"), ConfigError);

  j = exact_rate_config();
  j["operator"]["kind"] = "abel";  // alpha missing
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("operator.alpha"), ConfigError);
}

TEST_CASE("registry holds the six experiments, one operation each") {
  const auto& reg = experiment_registry();
  CHECK(reg.size() == 6);
  for (const auto& e : reg) {
    CHECK_FALSE(e.name.empty());
    CHECK(e.operation.find('.') != std::string::npos);
    CHECK_FALSE(e.description.empty());
  }
}

TEST_CASE("experiment listing is stable") {
  const std::string a = list_experiments();
  const std::string b = list_experiments();
  CHECK(a == b);
  CHECK(a.find("exact-rate") != std::string::npos);
  CHECK(a.find("md-sweep") != std::string::npos);
}

TEST_CASE("end-to-end exact-rate run") {
  TempDir dir("lavreg_test_run");
  auto cfg_path = dir.path / "config.json";
  {
    auto j = exact_rate_config();
    std::ofstream out(cfg_path);
    out << j.dump(2);
  }
  const int status = run(cfg_path.string(), (dir.path / "out").string());
  CHECK(status == 0);
  REQUIRE(fs::exists(dir.path / "out" / "report.json"));
  auto report = nlohmann::json::parse(slurp(dir.path / "out" / "report.json"));
  CHECK(report["experiment"] == "exact-rate");
  CHECK(report["passed"] == true);
  const double slope = report["results"]["fit"]["slope"].get<double>();
  CHECK(std::abs(slope - 0.5) <= 0.05);
  CHECK(fs::exists(dir.path / "out" / "bias_curve.csv"));
  CHECK(fs::exists(dir.path / "out" / "run_meta.json"));
}

TEST_CASE("config errors exit with status 1") {
  TempDir dir("lavreg_test_badcfg");
  auto cfg_path = dir.path / "config.json";
  {
    auto j = exact_rate_config();
    j["experiment"] = "md-sweep";
    j["rule"] = {{"name", "MD"}, {"b0", 0.5}, {"b1", 2.0}};
    std::ofstream out(cfg_path);
    out << j.dump(2);
  }
  CHECK(run(cfg_path.string(), (dir.path / "out").string()) == 1);
  CHECK(run((dir.path / "missing.json").string(), "") == 1);
}

TEST_CASE("reruns with the same seeds are byte-identical") {
  TempDir dir("lavreg_test_det");
  auto cfg_path = dir.path / "config.json";
  {
    auto j = exact_rate_config();
    j["operator"]["n"] = 120;
    std::ofstream out(cfg_path);
    out << j.dump(2);
  }
  CHECK(run(cfg_path.string(), (dir.path / "a").string()) == 0);
  CHECK(run(cfg_path.string(), (dir.path / "b").string()) == 0);
  CHECK(slurp(dir.path / "a" / "report.json") == slurp(dir.path / "b" / "report.json"));
  CHECK(slurp(dir.path / "a" / "bias_curve.csv") == slurp(dir.path / "b" / "bias_curve.csv"));
}

TEST_CASE("LAVREG_SEED overrides the config seeds") {
  TempDir dir("lavreg_test_seed");
  auto cfg_path = dir.path / "config.json";
  {
    auto j = exact_rate_config();
    j["operator"]["n"] = 100;
    std::ofstream out(cfg_path);
    out << j.dump(2);
  }
  setenv("LAVREG_SEED", "4242", 1);
  CHECK(run(cfg_path.string(), (dir.path / "out").string()) == 0);
  unsetenv("LAVREG_SEED");
  auto report = nlohmann::json::parse(slurp(dir.path / "out" / "report.json"));
  CHECK(report["results"]["effective_seeds"]["witness"] == 4242);
  CHECK(report["results"]["effective_seeds"]["noise"] == 4242);
  // config echo keeps the original value for audit
  CHECK(report["config"]["witness"]["seed"] == 11);
}

TEST_CASE("csv serialization round-trips doubles") {
  Curve c{"x.csv", "x", "y", {1.0 / 3.0, 2.5e-17}, {0.1, 7.0}};
  const std::string csv = curve_csv(c);
  CHECK(csv.rfind("x,y\n", 0) == 0);
  CHECK(csv.find("0.33333333333333331") != std::string::npos);
  // every emitted field parses back to the exact double
  std::size_t pos = csv.find('\n') + 1;
  std::size_t row = 0;
  while (pos < csv.size() && row < c.xs.size()) {
    const char* s = csv.c_str() + pos;
    char* end = nullptr;
    CHECK(std::strtod(s, &end) == c.xs[row]);
    CHECK(std::strtod(end + 1, &end) == c.ys[row]);
    pos = csv.find('\n', pos) + 1;
    ++row;
  }
  CHECK(row == c.xs.size());
}
