#ifndef LAVREG_FRACTIONAL_HPP
#define LAVREG_FRACTIONAL_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lavreg/operators.hpp"
#include "lavreg/types.hpp"

namespace lavreg {

// ---------------------------------------------------------------------------
// Quadrature of the fractional-power integral
//
//   A^q = (sin pi q / pi) * int_0^inf s^(q-1) (A + sI)^{-1} A ds,  0 < q < 1,
//
// evaluated as a tanh-sinh rule on the log axis t = log s over
// [log s_min, log s_max]. The omitted tails carry mass ~ s_min^q and
// ~ s_max^(q-1), far above the target accuracy, so both are restored by
// closed-form corrections: a frozen-resolvent term below s_min and a two-term
// Neumann expansion above s_max.

struct QuadratureSpec {
  int node_count = 601;       // nodes of the fine rule (kept odd for the embedded half rule)
  double s_min = 0.0;
  double s_max = 0.0;
  std::string rule = "tanh-sinh-on-log-axis";
  bool tail_correction = true;
  double tail_floor = 0.0;    // diagnostics window floor for the divergence probe
  double frac_tol = tol::frac_quadrature;

  template <typename Scalar>
  static QuadratureSpec auto_for(const DenseOperator<Scalar>& op) {
    QuadratureSpec q;
    const double nrm = static_cast<double>(op.norm2);
    q.s_min = 1e-10 * nrm;
    q.s_max = 1e8 * nrm;
    return q;
  }
};

namespace detail {

struct QuadNode {
  double t;       // abscissa in log s
  double weight;  // fine-rule weight (includes the x-step)
  bool coarse;    // member of the embedded half rule
};

inline std::vector<QuadNode> tanh_sinh_log_nodes(double s_min, double s_max, int n) {
  if (!(s_min > 0.0) || !(s_max > s_min))
    throw InvalidParameterError("quadrature: need 0 < s_min < s_max");
  if (n < 9) throw InvalidParameterError("quadrature: too few nodes");
  if (n % 2 == 0) ++n;  // symmetric rule with a center node
  const double a = std::log(s_min), b = std::log(s_max);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  const double x_max = 3.5;
  const double dx = 2.0 * x_max / (n - 1);
  const double pi_half = 1.5707963267948966;
  std::vector<QuadNode> nodes;
  nodes.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double x = -x_max + j * dx;
    const double sh = pi_half * std::sinh(x);
    const double ch = std::cosh(sh);
    const double w = half * pi_half * std::cosh(x) / (ch * ch) * dx;
    if (!(w > 0.0) || !std::isfinite(w)) continue;
    nodes.push_back({mid + half * std::tanh(sh), w, j % 2 == 0});
  }
  return nodes;
}

}  // namespace detail

template <typename Scalar>
struct FracPowerDiagnostics {
  double truncation_estimate = 0.0;  // fine rule vs embedded half rule, relative
  bool accuracy_warning = false;
  // small-s integrand record for the divergence probe (negative powers only)
  std::vector<double> tail_s;
  std::vector<double> tail_norms;
  double growth_exponent = 0.0;
  bool divergent = false;
};

namespace detail {

/// Shared sweep for A^q applied to a matrix or vector right-hand side.
/// Computes sum_j w_j e^{q t_j} (A + s_j I)^{-1} a_rhs plus the two tail
/// corrections, where a_rhs = A * rhs; `Out` is Matrix<Scalar> or Vector<Scalar>.
template <typename Scalar, typename Out>
Out frac_quadrature_sweep(const DenseOperator<Scalar>& op, Scalar q, const Out& a_rhs,
                          const QuadratureSpec& quad,
                          FracPowerDiagnostics<Scalar>* diag) {
  const auto nodes = detail::tanh_sinh_log_nodes(quad.s_min, quad.s_max, quad.node_count);
  const double qd = static_cast<double>(q);
  PairwiseAccumulator<Out> fine, coarse;
  for (const auto& nd : nodes) {
    const double s = std::exp(nd.t);
    const double factor = std::exp(qd * nd.t);
    if (!(factor > 0.0)) continue;
    Resolvent<Scalar> res(op, Scalar(s));
    Out term;
    if constexpr (std::is_same_v<Out, Matrix<Scalar>>) {
      term = res.solve_matrix(a_rhs);
    } else {
      term = res.solve(a_rhs);
    }
    fine.push(Out(Scalar(factor * nd.weight) * term));
    if (nd.coarse) coarse.push(Out(Scalar(factor * 2.0 * nd.weight) * term));
  }
  Out sum_fine = fine.total();
  Out sum_coarse = coarse.total();

  if (quad.tail_correction) {
    // below s_min, expanding the resolvent around s_min:
    //   int_0^e s^(q-1) R_s A ds ~ (e^q/q) R_e A + e^(q+1)/(q(q+1)) R_e^2 A
    Resolvent<Scalar> res(op, Scalar(quad.s_min));
    const Scalar lo1 = Scalar(std::pow(quad.s_min, qd) / qd);
    const Scalar lo2 = Scalar(std::pow(quad.s_min, qd + 1.0) / (qd * (qd + 1.0)));
    Out lo_term;
    if constexpr (std::is_same_v<Out, Matrix<Scalar>>) {
      Out first = res.solve_matrix(a_rhs);
      lo_term = lo1 * first + lo2 * res.solve_matrix(first);
    } else {
      Out first = res.solve(a_rhs);
      lo_term = lo1 * first + lo2 * res.solve(first);
    }
    // above s_max: R_s A ~ A/s - A^2/s^2
    const Scalar hi1 = Scalar(std::pow(quad.s_max, qd - 1.0) / (1.0 - qd));
    const Scalar hi2 = Scalar(std::pow(quad.s_max, qd - 2.0) / (2.0 - qd));
    Out hi_term = hi1 * a_rhs;
    if constexpr (std::is_same_v<Out, Matrix<Scalar>>) {
      hi_term -= hi2 * (op.entries * a_rhs);
    } else {
      hi_term -= hi2 * op.apply(a_rhs);
    }
    sum_fine += lo_term + hi_term;
    sum_coarse += lo_term + hi_term;
  }

  const double scale = std::sin(3.141592653589793 * qd) / 3.141592653589793;
  sum_fine *= Scalar(scale);
  sum_coarse *= Scalar(scale);
  if (diag) {
    const double ref = sum_fine.norm();
    diag->truncation_estimate = ref > 0.0 ? (sum_fine - sum_coarse).norm() / ref : 0.0;
    diag->accuracy_warning = diag->truncation_estimate > quad.frac_tol;
  }
  return sum_fine;
}

}  // namespace detail

/// A^p as a dense matrix; p = floor(p) integer factor times the fractional-power integral
/// for the fractional remainder.
template <typename Scalar>
DenseOperator<Scalar> frac_power_matrix(const DenseOperator<Scalar>& op, Scalar p,
                                        const QuadratureSpec& quad,
                                        FracPowerDiagnostics<Scalar>* diag = nullptr) {
  if (!(p > Scalar(0))) throw InvalidParameterError("frac_power_matrix: p must be positive");
  const Index n = op.dim();
  const double pd = static_cast<double>(p);
  const int whole = static_cast<int>(std::floor(pd));
  const double q = pd - whole;

  Matrix<Scalar> integer_part = Matrix<Scalar>::Identity(n, n);
  for (int k = 0; k < whole; ++k) integer_part = op.entries * integer_part;

  Matrix<Scalar> result;
  if (q < 1e-14) {
    result = integer_part;
    if (diag) *diag = {};
  } else {
    FracPowerDiagnostics<Scalar> local;
    Matrix<Scalar> frac = detail::frac_quadrature_sweep<Scalar, Matrix<Scalar>>(
        op, Scalar(q), op.entries, quad, &local);
    result = whole > 0 ? Matrix<Scalar>(frac * integer_part) : frac;
    if (diag) *diag = local;
  }

  DenseOperator<Scalar> out;
  out.entries = std::move(result);
  out.label = op.label + "^" + std::to_string(pd);
  out.m_constant = op.m_constant;  // heuristic; re-certify on demand
  out.accretive = op.accretive;
  out.diagonal = op.diagonal;
  out.grid_step = op.grid_step;
  detail::fill_spectral_scales(out);
  return out;
}

/// A^p v without forming the matrix power (one vector solve per node).
template <typename Scalar>
Vector<Scalar> frac_power_apply(const DenseOperator<Scalar>& op, Scalar p,
                                const Vector<Scalar>& v, const QuadratureSpec& quad,
                                FracPowerDiagnostics<Scalar>* diag = nullptr) {
  if (!(p > Scalar(0))) throw InvalidParameterError("frac_power_apply: p must be positive");
  if (v.size() != op.dim()) throw InvalidDimensionError("frac_power_apply: dimension mismatch");
  const double pd = static_cast<double>(p);
  const int whole = static_cast<int>(std::floor(pd));
  const double q = pd - whole;

  Vector<Scalar> x = v;
  for (int k = 0; k < whole; ++k) x = op.apply(x);
  if (q < 1e-14) {
    if (diag) *diag = {};
    return x;
  }
  FracPowerDiagnostics<Scalar> local;
  Vector<Scalar> out = detail::frac_quadrature_sweep<Scalar, Vector<Scalar>>(
      op, Scalar(q), op.apply(x), quad, &local);
  if (diag) *diag = local;
  return out;
}

template <typename Scalar>
struct NegFracPowerResult {
  Vector<Scalar> value;
  FracPowerDiagnostics<Scalar> diagnostics;
  bool source_condition_violated = false;
};

/// w ~ A^{-q} u through the companion integral
/// (sin pi q / pi) int_0^inf s^{-q} (A + sI)^{-1} u ds.
///
/// The small-s integrand norms are recorded at the 5 smallest nodes at or
/// above quad.tail_floor; growth faster than s^{-(1-0.01)} marks the source
/// condition u in R(A^q) as violated. That is a signal, not an error: the
/// returned value is still the quadrature sum.
template <typename Scalar>
NegFracPowerResult<Scalar> neg_frac_power_apply(const DenseOperator<Scalar>& op, Scalar q,
                                                const Vector<Scalar>& u,
                                                const QuadratureSpec& quad) {
  if (!(q > Scalar(0)) || !(q < Scalar(1)))
    throw InvalidParameterError("neg_frac_power_apply: q must lie in (0,1)");
  if (u.size() != op.dim())
    throw InvalidDimensionError("neg_frac_power_apply: dimension mismatch");

  const double qd = static_cast<double>(q);
  const auto nodes = detail::tanh_sinh_log_nodes(quad.s_min, quad.s_max, quad.node_count);

  NegFracPowerResult<Scalar> out;
  PairwiseAccumulator<Vector<Scalar>> fine, coarse;
  for (const auto& nd : nodes) {
    const double s = std::exp(nd.t);
    const double factor = std::exp((1.0 - qd) * nd.t);  // s^{-q} ds = e^{(1-q)t} dt
    Resolvent<Scalar> res(op, Scalar(s));
    Vector<Scalar> ru = res.solve(u);
    fine.push(Vector<Scalar>(Scalar(factor * nd.weight) * ru));
    if (nd.coarse) coarse.push(Vector<Scalar>(Scalar(factor * 2.0 * nd.weight) * ru));
  }
  Vector<Scalar> sum_fine = fine.total();
  Vector<Scalar> sum_coarse = coarse.total();

  if (quad.tail_correction) {
    Resolvent<Scalar> res(op, Scalar(quad.s_min));
    const Scalar lo1 = Scalar(std::pow(quad.s_min, 1.0 - qd) / (1.0 - qd));
    const Scalar lo2 =
        Scalar(std::pow(quad.s_min, 2.0 - qd) / ((1.0 - qd) * (2.0 - qd)));
    Vector<Scalar> first = res.solve(u);
    Vector<Scalar> lo_term = lo1 * first + lo2 * res.solve(first);
    const Scalar hi1 = Scalar(std::pow(quad.s_max, -qd) / qd);
    const Scalar hi2 = Scalar(std::pow(quad.s_max, -qd - 1.0) / (qd + 1.0));
    Vector<Scalar> hi_term = hi1 * u - hi2 * op.apply(u);
    sum_fine += lo_term + hi_term;
    sum_coarse += lo_term + hi_term;
  }

  const double scale = std::sin(3.141592653589793 * qd) / 3.141592653589793;
  out.value = Scalar(scale) * sum_fine;
  const double ref = out.value.norm();
  out.diagnostics.truncation_estimate =
      ref > 0.0 ? static_cast<double>((Scalar(scale) * sum_coarse - out.value).norm()) / ref : 0.0;
  out.diagnostics.accuracy_warning = out.diagnostics.truncation_estimate > quad.frac_tol;

  // Divergence probe: the integrand norm g(s) = s^{-q} ||(A+sI)^{-1} u|| at the
  // 5 smallest admissible scales, log-spaced over up to 1.5 decades above the
  // floor but inside the spectrum (above ||A|| every u scales like 1/s, which
  // would contaminate the exponent). The rule's own endpoint nodes coincide in
  // log s to machine precision, so the probe uses its own ladder. Growth
  // faster than s^{-(1-0.01)} means the integral diverges at 0, i.e. u falls
  // outside R(A^q) numerically.
  const double probe_lo = std::max(quad.tail_floor, quad.s_min);
  const double probe_hi = std::min({probe_lo * 31.622776601683793, quad.s_max / 10.0,
                                    std::max(0.3 * static_cast<double>(op.norm2),
                                             3.0 * probe_lo)});
  if (probe_hi > probe_lo) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int j = 0; j < 5; ++j) {
      const double s = probe_lo * std::pow(probe_hi / probe_lo, j / 4.0);
      Resolvent<Scalar> res(op, Scalar(s));
      const double g = std::pow(s, -qd) * static_cast<double>(res.solve(u).norm());
      out.diagnostics.tail_s.push_back(s);
      out.diagnostics.tail_norms.push_back(g);
      const double lx = std::log(s), ly = std::log(std::max(g, 1e-300));
      sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    }
    const double slope = (5.0 * sxy - sx * sy) / (5.0 * sxx - sx * sx);
    out.diagnostics.growth_exponent = -slope;
    out.diagnostics.divergent = out.diagnostics.growth_exponent >= 1.0 - 0.01;
  }
  out.source_condition_violated = out.diagnostics.divergent;
  return out;
}

}  // namespace lavreg

#endif  // LAVREG_FRACTIONAL_HPP
