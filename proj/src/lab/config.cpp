#include "lab/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace lavreg::lab {

namespace {

const std::set<std::string> kExperiments = {"exact-rate", "noisy-rate", "saturation",
                                            "converse",   "sandwich",   "md-sweep"};

double require_number(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

std::vector<double> parse_delta_grid(const nlohmann::json& j, const std::string& field) {
  std::vector<double> out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(require_number(v, field));
  } else if (j.is_object()) {
    const double lo = require_number(j.value("lo", nlohmann::json()), field + ".lo");
    const double hi = require_number(j.value("hi", nlohmann::json()), field + ".hi");
    const int pts = j.value("points", 0);
    if (pts < 2) throw ConfigError(field + ".points", "need at least 2 points");
    if (!(lo > 0.0) || !(hi > lo)) throw ConfigError(field, "need 0 < lo < hi");
    out = geomspace(lo, hi, pts);
    std::reverse(out.begin(), out.end());
  } else {
    throw ConfigError(field, "expected an array or {lo, hi, points}");
  }
  if (out.empty()) throw ConfigError(field, "empty noise-level grid");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i] > 0.0)) throw ConfigError(field, "noise levels must be positive");
    if (i > 0 && !(out[i] < out[i - 1]))
      throw ConfigError(field, "noise levels must be strictly decreasing");
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.raw = j;
  if (!j.is_object()) throw ConfigError("(root)", "config must be a JSON object");

  cfg.experiment = j.value("experiment", std::string());
  if (!kExperiments.count(cfg.experiment))
    throw ConfigError("experiment",
                      "unknown experiment tag '" + cfg.experiment +
                          "' (run `lavreg list` for the registry)");

  if (!j.contains("operator") || !j["operator"].is_object())
    throw ConfigError("operator", "missing operator object");
  const auto& op = j["operator"];
  cfg.op.kind = op.value("kind", std::string());
  if (cfg.op.kind != "integration" && cfg.op.kind != "abel" && cfg.op.kind != "diagonal")
    throw ConfigError("operator.kind", "must be integration, abel or diagonal");
  cfg.op.n = op.value("n", 0);
  if (cfg.op.n < 2) throw ConfigError("operator.n", "must be an integer >= 2");
  if (cfg.op.kind == "abel") {
    if (!op.contains("alpha")) throw ConfigError("operator.alpha", "required for abel");
    cfg.op.alpha = require_number(op["alpha"], "operator.alpha");
    if (!(cfg.op.alpha > 0.0) || !(cfg.op.alpha < 1.0))
      throw ConfigError("operator.alpha", "must lie in (0,1)");
  }
  if (cfg.op.kind == "diagonal") {
    if (!op.contains("lambdas-spec") || !op["lambdas-spec"].is_object())
      throw ConfigError("operator.lambdas-spec", "required for diagonal operators");
    const auto& ls = op["lambdas-spec"];
    cfg.op.lambdas.kind = ls.value("kind", std::string());
    const std::set<std::string> kinds = {"inverse_index", "inverse_index_clamped",
                                         "inverse_index_with_null", "exponential", "explicit"};
    if (!kinds.count(cfg.op.lambdas.kind))
      throw ConfigError("operator.lambdas-spec.kind", "unknown spectrum kind");
    if (cfg.op.lambdas.kind == "inverse_index_clamped") {
      cfg.op.lambdas.floor =
          require_number(ls.value("floor", nlohmann::json()), "operator.lambdas-spec.floor");
      if (!(cfg.op.lambdas.floor > 0.0))
        throw ConfigError("operator.lambdas-spec.floor", "must be positive");
    }
    if (cfg.op.lambdas.kind == "explicit") {
      if (!ls.contains("values") || !ls["values"].is_array() || ls["values"].empty())
        throw ConfigError("operator.lambdas-spec.values", "nonempty array required");
      for (const auto& v : ls["values"]) {
        const double x = require_number(v, "operator.lambdas-spec.values");
        if (!(x >= 0.0))
          throw ConfigError("operator.lambdas-spec.values", "eigenvalues must be >= 0");
        cfg.op.lambdas.values.push_back(x);
      }
    }
  }

  if (j.contains("witness")) {
    const auto& w = j["witness"];
    if (!w.is_object()) throw ConfigError("witness", "expected an object");
    cfg.witness.p = require_number(w.value("p", nlohmann::json(0.5)), "witness.p");
    if (!(cfg.witness.p > 0.0)) throw ConfigError("witness.p", "must be positive");
    cfg.witness.seed = w.value("seed", std::uint64_t(1));
  }

  if (j.contains("noise")) {
    const auto& nz = j["noise"];
    if (!nz.is_object()) throw ConfigError("noise", "expected an object");
    if (nz.contains("delta-grid"))
      cfg.noise.delta_grid = parse_delta_grid(nz["delta-grid"], "noise.delta-grid");
    cfg.noise.seed = nz.value("seed", std::uint64_t(1));
  }
  if (cfg.noise.delta_grid.empty()) {
    cfg.noise.delta_grid = geomspace(1e-6, 1e-2, 21);
    std::reverse(cfg.noise.delta_grid.begin(), cfg.noise.delta_grid.end());
  }

  if (j.contains("rule")) {
    const auto& r = j["rule"];
    if (!r.is_object()) throw ConfigError("rule", "expected an object");
    cfg.rule.name = r.value("name", cfg.rule.name);
    const std::set<std::string> rules = {"MD", "apriori", "balance", "functional",
                                         "qfunctional"};
    if (!rules.count(cfg.rule.name)) throw ConfigError("rule.name", "unknown rule");
    if (r.contains("b0")) cfg.rule.b0 = require_number(r["b0"], "rule.b0");
    if (r.contains("b1")) cfg.rule.b1 = require_number(r["b1"], "rule.b1");
    if (r.contains("c")) cfg.rule.c = require_number(r["c"], "rule.c");
    if (r.contains("p")) cfg.rule.p = require_number(r["p"], "rule.p");
    if (cfg.rule.name == "MD") {
      // every operator this front end builds is accretive, so M = 1
      if (!(cfg.rule.b0 > 1.0))
        throw ConfigError("rule.b0", "band constant must exceed the operator constant M = 1");
      if (!(cfg.rule.b1 >= cfg.rule.b0)) throw ConfigError("rule.b1", "need b1 >= b0");
    }
    if (cfg.rule.name == "apriori") {
      if (!(cfg.rule.p > 0.0) || !(cfg.rule.p <= 1.0))
        throw ConfigError("rule.p", "a-priori exponent must lie in (0,1]");
      if (!(cfg.rule.c > 0.0)) throw ConfigError("rule.c", "must be positive");
    }
  }

  if (j.contains("grid")) {
    cfg.grid_points = j["grid"].value("points", cfg.grid_points);
    if (cfg.grid_points < 8) throw ConfigError("grid.points", "need at least 8 points");
  }
  if (j.contains("expected_slope"))
    cfg.expected_slope = require_number(j["expected_slope"], "expected_slope");
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("(json)", e.what());
  }
  return parse_config(j);
}

DenseOperator<double> build_operator(const OperatorCfg& cfg) {
  if (cfg.kind == "integration") return build_integration_operator<double>(cfg.n);
  if (cfg.kind == "abel") return build_abel_operator<double>(cfg.n, cfg.alpha);
  std::vector<double> lam;
  if (cfg.lambdas.kind == "explicit") {
    lam = cfg.lambdas.values;
  } else {
    lam.resize(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
      double v = 1.0 / (i + 1);
      if (cfg.lambdas.kind == "inverse_index_clamped") v = std::max(v, cfg.lambdas.floor);
      if (cfg.lambdas.kind == "exponential") v = std::pow(2.0, -(i + 1));
      lam[static_cast<std::size_t>(i)] = v;
    }
    if (cfg.lambdas.kind == "inverse_index_with_null") lam.back() = 0.0;
  }
  return build_diagonal_operator<double>(lam);
}

}  // namespace lavreg::lab
