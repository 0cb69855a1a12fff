#ifndef LAVREG_RULES_HPP
#define LAVREG_RULES_HPP

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lavreg/operators.hpp"
#include "lavreg/regularization.hpp"
#include "lavreg/types.hpp"

namespace lavreg {

// ---------------------------------------------------------------------------
// Outcome of a parameter choice. gamma = infinity is a distinguished state
// (solution := 0), never a float sentinel inside arithmetic.

template <typename Scalar>
struct ParameterChoiceOutcome {
  bool infinite = false;
  Scalar gamma = Scalar(0);  // meaningful only when !infinite
  Vector<Scalar> solution;
  std::string rule;
  std::map<std::string, Scalar> diagnostics;
};

// ---------------------------------------------------------------------------
// Modified discrepancy principle
//
// With d(gamma) = ||gamma (A+gamma I)^{-1} Delta_gamma|| and
// Delta_gamma = A u_gamma^delta - f^delta = -gamma (A+gamma I)^{-1} f^delta:
//   * ||f^delta|| <= b1 delta  ->  gamma = infinity,
//   * otherwise locate gamma with b0 delta <= d(gamma) <= b1 delta,
// where b1 >= b0 > M. d is continuous with d(gamma) -> ||f^delta|| as
// gamma -> infinity, so an upward scan, a geometric downward scan and a final
// bisection (on the band, not on monotonicity) always land inside the band.

template <typename Scalar>
ParameterChoiceOutcome<Scalar> md_rule(const DenseOperator<Scalar>& op,
                                       const Vector<Scalar>& f_noisy, Scalar delta,
                                       Scalar b0, Scalar b1) {
  if (!(delta > Scalar(0))) throw InvalidParameterError("md_rule: delta must be positive");
  if (!(b0 > op.m_constant))
    throw InvalidParameterError("md_rule: b0 must exceed the operator constant M");
  if (!(b1 >= b0)) throw InvalidParameterError("md_rule: need b1 >= b0");
  if (f_noisy.size() != op.dim()) throw InvalidDimensionError("md_rule: dimension mismatch");

  ParameterChoiceOutcome<Scalar> out;
  out.rule = "MD";
  const Scalar lo_band = b0 * delta, hi_band = b1 * delta;

  if (f_noisy.norm() <= hi_band) {
    out.infinite = true;
    out.solution = Vector<Scalar>::Zero(op.dim());
    out.diagnostics["band_lo"] = lo_band;
    out.diagnostics["band_hi"] = hi_band;
    out.diagnostics["iterations"] = Scalar(0);
    return out;
  }

  std::vector<std::pair<double, double>> trace;
  int evals = 0;
  auto d = [&](double g) {
    Resolvent<Scalar> res(op, Scalar(g));
    Vector<Scalar> delta_g = Scalar(-g) * res.solve(f_noisy);
    const double val = static_cast<double>(Scalar(g) * res.solve(delta_g).norm());
    trace.push_back({g, val});
    ++evals;
    return val;
  };
  auto finish = [&](double g, double dval) {
    out.gamma = Scalar(g);
    out.solution = lavrentiev_solve(op, Scalar(g), f_noisy);
    out.diagnostics["gamma"] = Scalar(g);
    out.diagnostics["discrepancy"] = Scalar(dval);
    out.diagnostics["band_lo"] = lo_band;
    out.diagnostics["band_hi"] = hi_band;
    out.diagnostics["iterations"] = Scalar(evals);
    return out;
  };

  const double nrm = static_cast<double>(op.norm2);
  const double lo_b = static_cast<double>(lo_band), hi_b = static_cast<double>(hi_band);

  // upward scan: find gamma_hi with d > b1 delta (exists since d -> ||f||)
  double g_hi = nrm;
  double d_hi = d(g_hi);
  while (d_hi <= hi_b) {
    if (d_hi >= lo_b) return finish(g_hi, d_hi);
    g_hi *= 4.0;
    if (g_hi > 1e12 * nrm)
      throw WindowError("md_rule: discrepancy never exceeds the band", trace);
    d_hi = d(g_hi);
  }
  // downward scan: find gamma_lo with d <= b1 delta
  double g_lo = g_hi;
  double d_lo = d_hi;
  while (d_lo > hi_b) {
    g_lo /= 2.0;
    if (g_lo < 1e-12 * nrm)
      throw WindowError("md_rule: band never entered in the gamma window", trace);
    d_lo = d(g_lo);
  }
  if (d_lo >= lo_b) return finish(g_lo, d_lo);
  // bisect the crossing between d(g_lo) < b0 delta and d(g_hi) > b1 delta
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(g_lo * g_hi);
    const double dm = d(mid);
    if (dm >= lo_b && dm <= hi_b) return finish(mid, dm);
    (dm < lo_b ? g_lo : g_hi) = mid;
  }
  throw WindowError("md_rule: bisection failed to land in the band", trace);
}

// ---------------------------------------------------------------------------
// A-priori rule: gamma = c * delta^{1/(p+1)}

template <typename Scalar>
Scalar apriori_rule(Scalar delta, Scalar p, Scalar c) {
  if (!(delta > Scalar(0))) throw InvalidParameterError("apriori_rule: delta must be positive");
  if (!(p > Scalar(0)) || !(p <= Scalar(1)))
    throw InvalidParameterError("apriori_rule: p must lie in (0,1]");
  if (!(c > Scalar(0))) throw InvalidParameterError("apriori_rule: c must be positive");
  return c * Scalar(std::pow(static_cast<double>(delta),
                             1.0 / (static_cast<double>(p) + 1.0)));
}

// ---------------------------------------------------------------------------
// Quasi-optimality diagnostics

template <typename Scalar>
struct QuasiOptimality {
  Scalar weak_ratio = Scalar(0);    // ||u_gamma^delta - u|| / R_{delta,1}
  Scalar strong_ratio = Scalar(0);  // ||u_gamma^delta - u|| / p_lower
  bool defined = false;
};

template <typename Scalar>
QuasiOptimality<Scalar> quasi_optimality_ratio(const RegularizationProblem<Scalar>& problem,
                                               const ParameterChoiceOutcome<Scalar>& outcome,
                                               const ErrorFunctionals<Scalar>& functionals) {
  QuasiOptimality<Scalar> out;
  const Vector<Scalar> err = outcome.solution - problem.u_true;
  const Scalar e = err.norm();
  if (!(functionals.r1 > Scalar(0)) || !(functionals.p_lower > Scalar(0)))
    return out;  // undefined-ratio signal
  out.weak_ratio = e / functionals.r1;
  out.strong_ratio = e / functionals.p_lower;
  out.defined = true;
  return out;
}

}  // namespace lavreg

#endif  // LAVREG_RULES_HPP
