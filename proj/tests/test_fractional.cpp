#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lavreg/fractional.hpp"

using namespace lavreg;
using Vec = Vector<double>;
using Mat = Matrix<double>;

TEST_CASE("integer power takes the exact path") {
  auto op = build_integration_operator<double>(12);
  auto quad = QuadratureSpec::auto_for(op);
  auto p1 = frac_power_matrix(op, 1.0, quad);
  CHECK((p1.entries - op.entries).cwiseAbs().maxCoeff() == 0.0);
  auto p2 = frac_power_matrix(op, 2.0, quad);
  CHECK((p2.entries - op.entries * op.entries).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("diagonal oracle: diag(1, 1/4, 1/16)^0.5") {
  auto op = build_diagonal_operator<double>({1.0, 0.25, 0.0625});
  auto quad = QuadratureSpec::auto_for(op);
  auto h = frac_power_matrix(op, 0.5, quad);
  CHECK(std::abs(h.entries(0, 0) - 1.0) < 1e-8);
  CHECK(std::abs(h.entries(1, 1) - 0.5) < 1e-8);
  CHECK(std::abs(h.entries(2, 2) - 0.25) < 1e-8);
}

TEST_CASE("diagonal oracle across lambda in [1e-4, 1] and p grid") {
  std::vector<double> lam;
  for (int i = 0; i < 25; ++i) lam.push_back(std::pow(10.0, -4.0 * i / 24.0));
  auto op = build_diagonal_operator<double>(lam);
  auto quad = QuadratureSpec::auto_for(op);
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    auto ap = frac_power_matrix(op, p, quad);
    double max_pow = 0.0;
    for (double l : lam) max_pow = std::max(max_pow, std::pow(l, p));
    for (std::size_t i = 0; i < lam.size(); ++i)
      CHECK(std::abs(ap.entries(Index(i), Index(i)) - std::pow(lam[i], p)) <=
            1e-8 * max_pow);
  }
}

TEST_CASE("p-continuity against the diagonal oracle on a 10-point grid") {
  auto op = build_diagonal_operator<double>({1.0, 0.3, 0.05, 0.004});
  auto quad = QuadratureSpec::auto_for(op);
  for (int k = 1; k <= 10; ++k) {
    const double p = k / 11.0;
    auto ap = frac_power_matrix(op, p, quad);
    CHECK(std::abs(ap.entries(0, 0) - 1.0) < 1e-8);
    CHECK(std::abs(ap.entries(3, 3) - std::pow(0.004, p)) < 1e-8);
  }
}

TEST_CASE("semigroup defect on the n=32 integration operator") {
  auto op = build_integration_operator<double>(32);
  auto quad = QuadratureSpec::auto_for(op);
  auto h = frac_power_matrix(op, 0.5, quad);
  Mat defect = h.entries * h.entries - op.entries;
  CHECK(operator_norm_2<double>(defect) <= 1e-6 * op.norm2);
}

TEST_CASE("semigroup property for p+q <= 1") {
  auto integ = build_integration_operator<double>(24);
  auto diag = build_diagonal_operator<double>({1.0, 0.5, 0.1, 0.02, 0.003});
  for (const auto& op : {integ, diag}) {
    auto quad = QuadratureSpec::auto_for(op);
    for (auto [p, q] : std::vector<std::pair<double, double>>{
             {0.25, 0.25}, {0.25, 0.5}, {0.5, 0.5}, {0.25, 0.75}}) {
      auto ap = frac_power_matrix(op, p, quad);
      auto aq = frac_power_matrix(op, q, quad);
      auto apq = frac_power_matrix(op, p + q, quad);
      Mat defect = ap.entries * aq.entries - apq.entries;
      CHECK(operator_norm_2<double>(defect) <= 1e-5 * std::pow(op.norm2, p + q));
    }
  }
}

TEST_CASE("matrix power and vector apply agree") {
  auto op = build_integration_operator<double>(20);
  auto quad = QuadratureSpec::auto_for(op);
  Rng rng(5);
  Vec v = rng.unit_sphere(20);
  for (double p : {0.3, 0.7, 1.4}) {
    auto m = frac_power_matrix(op, p, quad);
    Vec direct = frac_power_apply(op, p, v, quad);
    CHECK((m.entries * v - direct).norm() <= 1e-12);
  }
}

TEST_CASE("negative power on a diagonal operator") {
  auto op = build_diagonal_operator<double>({1.0, 0.5});
  auto quad = QuadratureSpec::auto_for(op);
  Vec u(2);
  u << 1, 1;
  auto r = neg_frac_power_apply(op, 0.5, u, quad);
  CHECK(r.value[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.value[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-8));
  CHECK_FALSE(r.source_condition_violated);
}

TEST_CASE("nullspace-dominated input raises the source-condition signal") {
  auto op = build_diagonal_operator<double>({1.0, 0.5, 0.0});
  auto quad = QuadratureSpec::auto_for(op);
  Vec u(3);
  u << 0.1, 0.1, 1.0;
  auto r = neg_frac_power_apply(op, 0.5, u, quad);
  CHECK(r.source_condition_violated);
  CHECK(r.diagnostics.growth_exponent == doctest::Approx(1.5).epsilon(1e-2));
  CHECK(r.diagnostics.tail_s.size() == 5);
}

TEST_CASE("round trip A^q A^{-q} u = u for u in the range") {
  auto op = build_integration_operator<double>(32);
  auto quad = QuadratureSpec::auto_for(op);
  Rng rng(7);
  Vec u = op.apply(rng.unit_sphere(32));
  auto neg = neg_frac_power_apply(op, 0.3, u, quad);
  CHECK_FALSE(neg.source_condition_violated);
  Vec back = frac_power_apply(op, 0.3, neg.value, quad);
  CHECK((back - u).norm() <= 1e-4 * u.norm());
}

TEST_CASE("abel operator matches the fractional power of integration") {
  // discretization-level agreement, improving with n
  double prev = std::numeric_limits<double>::infinity();
  for (Index n : {16, 32, 64}) {
    auto v = build_integration_operator<double>(n);
    auto quad = QuadratureSpec::auto_for(v);
    auto half = frac_power_matrix(v, 0.5, quad);
    auto abel = build_abel_operator<double>(n, 0.5);
    const double rel = operator_norm_2<double>(Mat(half.entries - abel.entries)) / v.norm2;
    const double bound = 1.2 * std::sqrt(1.0 / n);  // h^{min(alpha,1-alpha)} scale
    CHECK(rel < bound);
    CHECK(rel < prev);
    prev = rel;
  }
}

TEST_CASE("quadrature accuracy warning fires on a starved rule") {
  auto op = build_diagonal_operator<double>({1.0, 1e-3});
  auto quad = QuadratureSpec::auto_for(op);
  quad.node_count = 21;
  FracPowerDiagnostics<double> diag;
  frac_power_matrix(op, 0.5, quad, &diag);
  CHECK(diag.accuracy_warning);
  CHECK(diag.truncation_estimate > quad.frac_tol);
}

TEST_CASE("auto-configured quadrature brackets the spectrum with margin") {
  for (Index n : {32, 64}) {
    auto op = build_integration_operator<double>(n);
    auto quad = QuadratureSpec::auto_for(op);
    CHECK(quad.s_min * 1e3 < op.sigma_min_pos);
    CHECK(quad.s_max > 1e3 * op.norm2);
    CHECK(quad.rule == "tanh-sinh-on-log-axis");
  }
}

TEST_CASE("parameter validation") {
  auto op = build_diagonal_operator<double>({1.0});
  auto quad = QuadratureSpec::auto_for(op);
  Vec u(1);
  u << 1;
  CHECK_THROWS_AS(frac_power_matrix(op, 0.0, quad), InvalidParameterError);
  CHECK_THROWS_AS(frac_power_matrix(op, -0.5, quad), InvalidParameterError);
  CHECK_THROWS_AS(neg_frac_power_apply(op, 0.0, u, quad), InvalidParameterError);
  CHECK_THROWS_AS(neg_frac_power_apply(op, 1.0, u, quad), InvalidParameterError);
}
