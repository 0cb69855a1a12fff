// Acceptance suite: one line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lab/experiments.hpp"
#include "lavreg/rates.hpp"

using namespace lavreg;
using Vec = Vector<double>;
using Mat = Matrix<double>;
using clock_type = std::chrono::steady_clock;

namespace {

int failures = 0;

struct Criterion {
  std::string name;
  std::vector<std::string> issues;
  clock_type::time_point start = clock_type::now();

  explicit Criterion(std::string n) : name(std::move(n)) {}

  void expect(bool ok, const std::string& what) {
    if (!ok) issues.push_back(what);
  }

  void finish() {
    const double secs =
        std::chrono::duration<double>(clock_type::now() - start).count();
    if (issues.empty()) {
      std::printf("%-58s PASS  (%.1f s)\n", name.c_str(), secs);
    } else {
      ++failures;
      std::printf("%-58s FAIL  (%.1f s)\n", name.c_str(), secs);
      for (const auto& s : issues) std::printf("    - %s\n", s.c_str());
    }
  }
};

DenseOperator<double> inverse_index_diag(int n, bool with_null = false) {
  std::vector<double> lam(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) lam[static_cast<std::size_t>(i)] = 1.0 / (i + 1);
  if (with_null) lam.back() = 0.0;
  return build_diagonal_operator<double>(lam);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// --------------------------------------------------------------------------

void criterion_1_certificates() {
  Criterion c("1. nonnegativity/accretivity certificates (M = 1)");
  auto check_op = [&](const DenseOperator<double>& op) {
    const auto t0 = clock_type::now();
    auto rep = certify(op, certification_grid(), 1e-8);
    const double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
    c.expect(rep.passed, op.label + ": certificate failed, max ratio " +
                             fmt("%.3e", rep.max_ratio));
    c.expect(op.m_constant == 1.0, op.label + ": M != 1");
    c.expect(secs < 5.0, op.label + ": certificate runtime " + fmt("%.1f", secs) + " s");
  };
  for (int n : {16, 64, 256}) check_op(build_integration_operator<double>(n));
  for (double alpha : {0.3, 0.5, 0.7}) check_op(build_abel_operator<double>(64, alpha));
  c.finish();
}

void criterion_2_monotonicity() {
  Criterion c("2. bias/resolvent monotonicity suite");
  std::vector<DenseOperator<double>> ops;
  for (int n : {16, 64, 256}) ops.push_back(build_integration_operator<double>(n));
  for (double alpha : {0.3, 0.5, 0.7}) ops.push_back(build_abel_operator<double>(64, alpha));
  const auto grid = certification_grid();
  for (const auto& op : ops) {
    const Index n = op.dim();
    Rng rng(0xC2u);
    Mat us(n, 50);
    for (int k = 0; k < 50; ++k) us.col(k) = rng.unit_sphere(n);
    Mat prev_bias = Mat::Zero(n, 50);
    double worst_bias = 0.0, worst_res = 0.0;
    std::vector<double> prev_b(50, 0.0), prev_r(50, std::numeric_limits<double>::infinity());
    for (double g : grid) {
      Resolvent<double> res(op, g);
      Mat sol = res.solve_matrix(us);
      for (int k = 0; k < 50; ++k) {
        const double bn = g * sol.col(k).norm();
        const double rn = sol.col(k).norm();
        worst_bias = std::max(worst_bias, prev_b[k] - bn);
        worst_res = std::max(worst_res, rn - prev_r[k]);
        prev_b[k] = bn;
        prev_r[k] = rn;
      }
    }
    c.expect(worst_bias <= 1e-12, op.label + ": bias norm decreased by " + fmt("%.2e", worst_bias));
    c.expect(worst_res <= 1e-12,
             op.label + ": resolvent norm increased by " + fmt("%.2e", worst_res));
    // limit ||e_gamma|| -> ||u|| at gamma = 1e6 ||A||
    Vec u = us.col(0);
    const double lim = bias(op, 1e6 * op.norm2, u).norm();
    c.expect(std::abs(lim - u.norm()) <= 1e-5,
             op.label + ": bias limit off by " + fmt("%.2e", std::abs(lim - u.norm())));
  }
  c.finish();
}

void criterion_3_fractional() {
  Criterion c("3. fractional-power oracle");
  {
    std::vector<double> lam;
    for (int i = 0; i < 30; ++i) lam.push_back(std::pow(10.0, -4.0 * i / 29.0));
    auto op = build_diagonal_operator<double>(lam);
    auto quad = QuadratureSpec::auto_for(op);
    for (double p : {0.25, 0.5, 0.75}) {
      auto ap = frac_power_matrix(op, p, quad);
      double worst = 0.0, max_pow = 0.0;
      for (std::size_t i = 0; i < lam.size(); ++i) {
        max_pow = std::max(max_pow, std::pow(lam[i], p));
        worst = std::max(worst,
                         std::abs(ap.entries(Index(i), Index(i)) - std::pow(lam[i], p)));
      }
      c.expect(worst <= 1e-8 * max_pow,
               fmt("diagonal disagreement %.2e at p=%.2f", worst, p));
    }
  }
  {
    auto op = build_integration_operator<double>(32);
    auto quad = QuadratureSpec::auto_for(op);
    auto h = frac_power_matrix(op, 0.5, quad);
    const double defect = operator_norm_2<double>(Mat(h.entries * h.entries - op.entries));
    c.expect(defect <= 1e-6 * op.norm2, fmt("semigroup defect %.2e", defect));

    Rng rng(7);
    Vec u = op.apply(rng.unit_sphere(32));
    auto neg = neg_frac_power_apply(op, 0.3, u, quad);
    Vec back = frac_power_apply(op, 0.3, neg.value, quad);
    const double rt = (back - u).norm() / u.norm();
    c.expect(rt <= 1e-4, fmt("negative-power round trip %.2e", rt));
  }
  c.finish();
}

void criterion_4_exact_rates() {
  Criterion c("4. exact-data rates on diag(1/i), n = 400");
  auto op = inverse_index_diag(400);
  auto quad = QuadratureSpec::auto_for(op);
  auto grid = gamma_grid(op, 90);
  for (double p : {0.25, 0.5, 0.75, 1.0, 1.5}) {
    auto wit = make_source_witness(op, p, 11, quad);
    auto rep = exact_data_rate(op, wit, grid);
    const double target = std::min(p, 1.0);
    c.expect(std::abs(rep.fit.slope - target) <= 0.05,
             fmt("p=%.2f: slope %.4f vs %.2f", p, rep.fit.slope, target));
  }
  c.finish();
}

void criterion_5_noisy_rates() {
  Criterion c("5. noisy-data rates, balance and MD rules");
  auto op = inverse_index_diag(1024);
  auto quad = QuadratureSpec::auto_for(op);
  std::vector<double> deltas = geomspace(1e-7, 1e-2, 31);
  std::reverse(deltas.begin(), deltas.end());
  for (double p : {0.25, 0.5, 0.75, 1.0}) {
    auto wit = make_source_witness(op, p, 11, quad);
    const double target = p / (p + 1);
    auto bal = noisy_rate(op, wit, deltas, NoisyRule::balance, {}, 5);
    c.expect(std::abs(bal.fit.slope - target) <= 0.05,
             fmt("balance p=%.2f: slope %.4f vs %.4f", p, bal.fit.slope, target));
    auto md = noisy_rate(op, wit, deltas, NoisyRule::md, {}, 5);
    c.expect(std::abs(md.fit.slope - target) <= 0.05,
             fmt("MD p=%.2f: slope %.4f vs %.4f", p, md.fit.slope, target));
  }
  c.finish();
}

void criterion_6_saturation_floors() {
  Criterion c("6. saturation floors, exact and noisy");
  auto op = inverse_index_diag(300, /*with_null=*/true);
  auto quad = QuadratureSpec::auto_for(op);
  auto grid = geomspace(discretization_floor(op), 0.3 * op.norm2, 40);
  std::vector<double> deltas = geomspace(1e-6, 1e-2, 17);
  std::reverse(deltas.begin(), deltas.end());

  std::vector<Vec> witnesses;
  for (int k = 0; k < 9; ++k) {
    const double p = 0.3 + 0.15 * (k % 5);
    witnesses.push_back(make_source_witness(op, p, 100 + k, quad).u);
  }
  Vec pure_null = Vec::Zero(300);
  pure_null[299] = 1.0;
  witnesses.push_back(pure_null);

  for (std::size_t k = 0; k < witnesses.size(); ++k) {
    const bool is_null = k + 1 == witnesses.size();
    auto sat = saturation_probe(op, witnesses[k], grid);
    c.expect(sat.floor > 0.0, fmt("witness %g: exact floor nonpositive", double(k)));
    auto noisy = noisy_saturation_probe(op, witnesses[k], deltas, !is_null);
    c.expect(noisy.floor > 0.0, fmt("witness %g: noisy floor nonpositive", double(k)));
    if (is_null) {
      c.expect(noisy.nullspace_dominated, "pure-null witness not flagged");
      c.expect(std::abs(noisy.fit.slope) <= 0.05,
               fmt("pure-null witness slope %.3f (want ~0)", noisy.fit.slope));
    }
  }
  bool rejected = false;
  try {
    saturation_probe(op, Vec(Vec::Zero(300)), grid);
  } catch (const InvalidParameterError&) {
    rejected = true;
  }
  c.expect(rejected, "zero input not rejected by the exact probe");
  rejected = false;
  try {
    noisy_saturation_probe(op, Vec(Vec::Zero(300)), deltas);
  } catch (const InvalidParameterError&) {
    rejected = true;
  }
  c.expect(rejected, "zero input not rejected by the noisy probe");
  c.finish();
}

void criterion_7_sandwich() {
  Criterion c("7. sandwich of the error functionals");
  auto diag = inverse_index_diag(200);
  auto integ = build_integration_operator<double>(128);
  for (int which : {0, 1}) {
    const DenseOperator<double>& op = which ? integ : diag;
    auto quad = QuadratureSpec::auto_for(op);
    auto wit = make_source_witness(op, 0.5, 11, quad);
    auto grid = gamma_grid(op, 80);
    for (double delta : {1e-3, 1e-5}) {
      auto F = compute_error_functionals(op, wit.u, delta, grid);
      const std::string tag = op.label + fmt(" delta=%.0e", delta);
      c.expect(F.r_inf <= F.r2 * (1 + 1e-10), tag + ": r_inf > r2");
      c.expect(F.r2 <= F.r1 * (1 + 1e-10), tag + ": r2 > r1");
      c.expect(F.r1 <= 2 * F.r_inf * (1 + 1e-10), tag + ": r1 > 2 r_inf");
      c.expect(F.p_lower <= F.p_upper * (1 + 1e-10), tag + ": p_lower > p_upper");
      c.expect(F.r2 <= 1.1 * F.p_lower,
               tag + fmt(": r2/p_lower = %.3f > 1.1", F.r2 / F.p_lower));
      c.expect(F.r2 <= F.q_upper * (1 + 1e-8), tag + ": r2 > q_upper");
      c.expect(F.q_lower <= F.r1 * (1 + 1e-8), tag + ": q_lower > r1");
    }
  }
  c.finish();
}

void criterion_8_md_rule() {
  Criterion c("8. modified discrepancy principle");
  auto op = inverse_index_diag(1024);
  auto quad = QuadratureSpec::auto_for(op);
  auto grid = gamma_grid(op, 60);

  // infinite branch on small data
  {
    Vec tiny = Vec::Constant(1024, 1e-6);
    auto outcome = md_rule(op, tiny, 1.0, 1.5, 2.0);
    c.expect(outcome.infinite && outcome.solution.norm() == 0.0,
             "small-data input did not take the infinite branch");
  }

  std::vector<double> all_d, all_ratio;
  double worst_band = 0.0, c_max = 0.0;
  int id = 0;
  for (double p : {0.6, 0.75, 0.9}) {
    for (int s = 0; s < 2; ++s) {
      auto wit = make_source_witness(op, p, 500 + 31 * id, quad);
      for (double delta : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        auto prob = make_problem(op, wit.u, delta, 900 + id);
        auto outcome = md_rule(op, prob.f_noisy, delta, 1.5, 2.0);
        if (!outcome.infinite) {
          const double d = outcome.diagnostics.at("discrepancy");
          worst_band = std::max(
              worst_band, std::max(0.0, std::max(1.5 * delta - d, d - 2.0 * delta)) / delta);
        }
        auto r1 = r_delta(op, wit.u, delta, PNorm::one, grid);
        const double ratio = (outcome.solution - wit.u).norm() / r1.value;
        all_d.push_back(delta);
        all_ratio.push_back(ratio);
        c_max = std::max(c_max, ratio);
        ++id;
      }
    }
  }
  c.expect(worst_band <= 1e-10, fmt("band violation %.2e", worst_band));
  auto ratio_fit = fit_rate(all_d, all_ratio);
  c.expect(std::abs(ratio_fit.slope) <= 0.1,
           fmt("weak-ratio trend slope %.4f (need |.| <= 0.1)", ratio_fit.slope));
  std::printf("    [8] weak-ratio constant over 30 problems: c_max = %.3f\n", c_max);
  c.finish();
}

void criterion_9_closed_range() {
  Criterion c("9. closed-range dichotomy (sigma_min >= 0.3)");
  std::vector<double> lam(100);
  for (int i = 0; i < 100; ++i) lam[i] = std::max(1.0 / (i + 1), 0.3);
  auto op = build_diagonal_operator<double>(lam);
  auto exact_grid = geomspace(1e-4, 3e-2, 40);
  auto env_grid = geomspace(1e-7, 3.0, 60);
  std::vector<double> deltas = geomspace(1e-6, 1e-3, 17);
  std::reverse(deltas.begin(), deltas.end());
  for (int s = 0; s < 5; ++s) {
    Rng rng(60 + s);
    Vec u = rng.unit_sphere(100);
    auto rep = exact_data_rate_of(op, u, exact_grid);
    c.expect(std::abs(rep.fit.slope - 1.0) <= 0.05,
             fmt("seed %g: exact slope %.4f", double(s), rep.fit.slope));
    SourceConditionWitness<double> wit;
    wit.p = 1.0;
    wit.w = u;
    wit.u = u;
    auto noisy = noisy_rate(op, wit, deltas, NoisyRule::qfunctional, {}, 3, false, env_grid);
    c.expect(std::abs(noisy.fit.slope - 1.0) <= 0.05,
             fmt("seed %g: noisy slope %.4f", double(s), noisy.fit.slope));
  }
  c.finish();
}

void criterion_10_determinism() {
  Criterion c("10. determinism of the experiment reports");
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "lavreg_acceptance_det";
  fs::remove_all(base);
  fs::create_directories(base);

  const nlohmann::json diag_op = {
      {"kind", "diagonal"}, {"n", 150}, {"lambdas-spec", {{"kind", "inverse_index"}}}};
  std::vector<nlohmann::json> configs = {
      {{"experiment", "exact-rate"}, {"operator", diag_op}, {"witness", {{"p", 0.5}, {"seed", 11}}}},
      {{"experiment", "noisy-rate"},
       {"operator", diag_op},
       {"witness", {{"p", 0.5}, {"seed", 11}}},
       {"noise", {{"delta-grid", {{"lo", 1e-5}, {"hi", 1e-2}, {"points", 10}}}, {"seed", 3}}},
       {"rule", {{"name", "balance"}}}},
      {{"experiment", "saturation"}, {"operator", diag_op}, {"witness", {{"p", 1.0}, {"seed", 5}}}},
      {{"experiment", "converse"}, {"operator", diag_op}, {"witness", {{"p", 0.6}, {"seed", 7}}}},
      {{"experiment", "sandwich"},
       {"operator", diag_op},
       {"witness", {{"p", 0.5}, {"seed", 9}}},
       {"noise", {{"delta-grid", {1e-3}}, {"seed", 2}}}},
      {{"experiment", "md-sweep"},
       {"operator", diag_op},
       {"witness", {{"p", 0.8}, {"seed", 13}}},
       {"noise", {{"delta-grid", {1e-2, 1e-3, 1e-4}}, {"seed", 8}}},
       {"rule", {{"name", "MD"}, {"b0", 1.5}, {"b1", 2.0}}}}};

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  };
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const fs::path cfg_path = base / (std::to_string(i) + ".json");
    {
      std::ofstream out(cfg_path);
      out << configs[i].dump(2);
    }
    const std::string tag = configs[i]["experiment"].get<std::string>();
    for (const char* run_dir : {"a", "b"}) {
      const int status =
          lab::run(cfg_path.string(), (base / run_dir / std::to_string(i)).string());
      c.expect(status == 0, tag + ": run exited with status " + std::to_string(status));
    }
    const std::string a = slurp(base / "a" / std::to_string(i) / "report.json");
    const std::string b = slurp(base / "b" / std::to_string(i) / "report.json");
    c.expect(!a.empty() && a == b, tag + ": reports differ between reruns");
  }
  fs::remove_all(base);
  c.finish();
}

}  // namespace

int main() {
  std::printf("lavreg acceptance suite\n");
  criterion_1_certificates();
  criterion_2_monotonicity();
  criterion_3_fractional();
  criterion_4_exact_rates();
  criterion_5_noisy_rates();
  criterion_6_saturation_floors();
  criterion_7_sandwich();
  criterion_8_md_rule();
  criterion_9_closed_range();
  criterion_10_determinism();
  if (failures == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criterion(s) failed\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
