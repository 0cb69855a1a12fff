#ifndef LAVREG_REGULARIZATION_HPP
#define LAVREG_REGULARIZATION_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lavreg/grids.hpp"
#include "lavreg/operators.hpp"
#include "lavreg/types.hpp"

namespace lavreg {

// ---------------------------------------------------------------------------
// Problems and the regularized solve

template <typename Scalar>
struct RegularizationProblem {
  DenseOperator<Scalar> op;
  Vector<Scalar> u_true;
  Vector<Scalar> f_exact;   // = A u_true
  Scalar delta = Scalar(0);
  Vector<Scalar> f_noisy;   // ||f_exact - f_noisy|| <= delta
  std::uint64_t noise_seed = 0;
};

/// Noise realization: f_noisy = f_exact + delta * d with d a fixed-seed
/// uniform-on-sphere direction, so ||f - f_noisy|| = delta exactly.
template <typename Scalar>
RegularizationProblem<Scalar> make_problem(DenseOperator<Scalar> op, Vector<Scalar> u_true,
                                           Scalar delta, std::uint64_t noise_seed) {
  if (!(delta >= Scalar(0))) throw InvalidParameterError("make_problem: delta must be >= 0");
  RegularizationProblem<Scalar> p;
  p.f_exact = op.apply(u_true);
  p.op = std::move(op);
  p.u_true = std::move(u_true);
  p.delta = delta;
  p.noise_seed = noise_seed;
  Rng rng(noise_seed);
  p.f_noisy = p.f_exact + delta * rng.unit_sphere<Scalar>(p.f_exact.size());
  return p;
}

/// u_gamma^delta = (A + gamma I)^{-1} f.
template <typename Scalar>
Vector<Scalar> lavrentiev_solve(const DenseOperator<Scalar>& op, Scalar gamma,
                                const Vector<Scalar>& f) {
  return resolvent_apply(op, gamma, f);
}

/// Bias e_gamma = u_gamma - u = -gamma (A + gamma I)^{-1} u.
template <typename Scalar>
Vector<Scalar> bias(const DenseOperator<Scalar>& op, Scalar gamma, const Vector<Scalar>& u) {
  return Vector<Scalar>(-gamma * resolvent_apply(op, gamma, u));
}

/// ||e_gamma|| over a gamma grid, one factorization per grid point.
template <typename Scalar>
std::vector<Scalar> bias_norm_curve(const DenseOperator<Scalar>& op, const Vector<Scalar>& u,
                                    const std::vector<double>& grid, int jobs = 1) {
  std::vector<Scalar> out(grid.size());
  parallel_for(
      grid.size(),
      [&](std::size_t i) {
        Resolvent<Scalar> res(op, Scalar(grid[i]));
        out[i] = Scalar(grid[i]) * res.solve(u).norm();
      },
      jobs);
  return out;
}

// ---------------------------------------------------------------------------
// R_{delta,p}: the computable bias/noise-amplification functionals

enum class PNorm { one, two, inf };

template <typename Scalar>
struct RDeltaResult {
  Scalar value = Scalar(0);
  Scalar gamma = Scalar(0);     // minimizer (smallest gamma among ties)
  bool grid_truncated = false;  // minimum sits on a grid endpoint
};

namespace detail {

template <typename Scalar>
Scalar combine_rp(PNorm p, Scalar bias_norm, Scalar noise_term) {
  switch (p) {
    case PNorm::one: return bias_norm + noise_term;
    case PNorm::two: return std::sqrt(bias_norm * bias_norm + noise_term * noise_term);
    default: return std::max(bias_norm, noise_term);
  }
}

/// Grid minimum (ties -> smallest gamma) plus one golden-section refinement
/// between the bracketing neighbors; extra_gammas join the candidate set.
template <typename Scalar>
RDeltaResult<Scalar> minimize_over_grid(const std::function<Scalar(double)>& f,
                                        const std::vector<double>& grid,
                                        const std::vector<double>& extra_gammas = {}) {
  if (grid.empty()) throw InvalidParameterError("minimize_over_grid: empty grid");
  RDeltaResult<Scalar> out;
  std::size_t best = 0;
  Scalar best_val = std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Scalar v = f(grid[i]);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  out.value = best_val;
  out.gamma = Scalar(grid[best]);
  out.grid_truncated = best == 0 || best + 1 == grid.size();
  if (!out.grid_truncated) {
    auto [gx, gv] = golden_refine([&](double g) { return static_cast<double>(f(g)); },
                                  grid[best - 1], grid[best + 1]);
    if (Scalar(gv) < out.value) {
      out.value = Scalar(gv);
      out.gamma = Scalar(gx);
    }
  }
  for (double g : extra_gammas) {
    const Scalar v = f(g);
    if (v < out.value) {
      out.value = v;
      out.gamma = Scalar(g);
    }
  }
  return out;
}

}  // namespace detail

/// R_{delta,p}(u) = inf_gamma { ||e_gamma||^p + (M delta/gamma)^p }^{1/p}
/// (max of the two terms for p = inf), taken over the grid with one
/// golden-section refinement.
template <typename Scalar>
RDeltaResult<Scalar> r_delta(const DenseOperator<Scalar>& op, const Vector<Scalar>& u,
                             Scalar delta, PNorm p, const std::vector<double>& grid) {
  if (!(delta > Scalar(0))) throw InvalidParameterError("r_delta: delta must be positive");
  if (grid.empty()) throw InvalidParameterError("r_delta: empty grid");
  const Scalar m = op.m_constant;
  auto f = [&](double g) {
    Resolvent<Scalar> res(op, Scalar(g));
    const Scalar bn = Scalar(g) * res.solve(u).norm();
    return detail::combine_rp<Scalar>(p, bn, m * delta / Scalar(g));
  };
  return detail::minimize_over_grid<Scalar>(f, grid);
}

// ---------------------------------------------------------------------------
// Worst-case perturbation directions

template <typename Scalar>
struct WorstCaseDirection {
  Scalar epsilon = Scalar(0);
  Scalar beta = Scalar(0);      // root of ||A phi_beta|| = epsilon
  Vector<Scalar> v;             // = -phi_beta, unit norm
  Scalar a_v_norm = Scalar(0);  // ||A v||
  bool window_warning = false;  // operator not numerically non-surjective
};

/// Feasibility floor for worst_case_direction: ||A phi_beta|| at the smallest
/// admissible beta. Below this value no direction with ||A v|| = epsilon can be
/// reached through the resolvent family at finite n.
template <typename Scalar>
Scalar worst_case_epsilon_floor(const DenseOperator<Scalar>& op, const Vector<Scalar>& u) {
  const double beta_lo = 1e-12 * static_cast<double>(op.norm2);
  Vector<Scalar> r = resolvent_apply(op, Scalar(beta_lo), u);
  const Scalar rn = r.norm();
  if (!(rn > Scalar(0))) throw InvalidParameterError("worst_case_epsilon_floor: u ~ 0");
  return op.apply(r).norm() / rn;
}

/// Finds beta with ||A phi_beta|| = epsilon, phi_beta normalized from
/// (A + beta I)^{-1} u, by bisection on log beta; returns v = -phi_beta.
template <typename Scalar>
WorstCaseDirection<Scalar> worst_case_direction(const DenseOperator<Scalar>& op,
                                                const Vector<Scalar>& u, Scalar epsilon) {
  const Scalar un = u.norm();
  if (!(un > Scalar(0))) throw InvalidParameterError("worst_case_direction: u must be nonzero");
  const Scalar au_over_u = op.apply(u).norm() / un;
  if (!(epsilon > Scalar(0)) || !(epsilon < au_over_u))
    throw InvalidParameterError("worst_case_direction: epsilon must lie in (0, ||Au||/||u||)");

  auto g = [&](double beta) {
    Resolvent<Scalar> res(op, Scalar(beta));
    Vector<Scalar> phi = res.solve(u);
    return static_cast<double>(op.apply(phi).norm() / phi.norm());
  };

  const double nrm = static_cast<double>(op.norm2);
  double lo = 1e-12 * nrm, hi = 1e12 * nrm;
  std::vector<std::pair<double, double>> trace;
  double glo = g(lo), ghi = g(hi);
  trace.push_back({lo, glo});
  trace.push_back({hi, ghi});
  const double eps = static_cast<double>(epsilon);
  if (!(glo < eps) || !(ghi > eps))
    throw WindowError("worst_case_direction: root not bracketed in beta window", trace);

  double beta = lo;
  for (int it = 0; it < 200; ++it) {
    beta = std::sqrt(lo * hi);
    const double gm = g(beta);
    trace.push_back({beta, gm});
    if (std::abs(gm - eps) <= 1e-10 * eps) break;
    (gm < eps ? lo : hi) = beta;
  }

  WorstCaseDirection<Scalar> out;
  out.epsilon = epsilon;
  out.beta = Scalar(beta);
  Vector<Scalar> phi = resolvent_apply(op, Scalar(beta), u);
  phi /= phi.norm();
  out.v = -phi;
  out.a_v_norm = op.apply(out.v).norm();
  out.window_warning = static_cast<double>(op.sigma_min) > 1e-3 * nrm;
  return out;
}

// ---------------------------------------------------------------------------
// Brackets for the maximal best possible error P_delta and the interchanged
// functional Q_delta

template <typename Scalar>
struct PDeltaBracket {
  Scalar p_lower = Scalar(0);
  Scalar p_upper = Scalar(0);
  std::vector<Scalar> used_epsilons;
  bool null_case = false;  // u numerically in N(A)
};

/// Epsilon ladder for the lower bracket, following the gamma_0 rule with the
/// finite-n feasibility floor folded in.
template <typename Scalar>
std::vector<Scalar> default_epsilons(const DenseOperator<Scalar>& op, const Vector<Scalar>& u,
                                     Scalar delta, Scalar p_upper) {
  const Scalar un = u.norm();
  const Scalar au_over_u = op.apply(u).norm() / un;
  Scalar gamma0 = au_over_u;
  if (p_upper > Scalar(0)) gamma0 = std::min(delta / (Scalar(2) * p_upper), au_over_u);
  Scalar floor = Scalar(0);
  try {
    floor = worst_case_epsilon_floor(op, u);
  } catch (const InvalidParameterError&) {
    return {};
  }
  std::vector<Scalar> eps;
  for (Scalar cand : {gamma0 / Scalar(2), gamma0 / Scalar(8), gamma0 / Scalar(32),
                      Scalar(2) * floor, Scalar(4) * floor, Scalar(8) * floor,
                      Scalar(16) * floor}) {
    if (cand > Scalar(1.02) * floor && cand < Scalar(0.98) * au_over_u) eps.push_back(cand);
  }
  std::sort(eps.begin(), eps.end());
  eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
  return eps;
}

/// Lower/upper bracket of P_delta(u). The upper bound is R_{delta,1}; the
/// lower bound evaluates inf_gamma ||e_gamma + delta (A+gamma I)^{-1} v_eps||
/// for the worst-case directions v_eps and takes the best epsilon. For u in
/// N(A) the perturbation -delta u/||u|| gives P >= ||u|| directly.
template <typename Scalar>
PDeltaBracket<Scalar> p_delta_bracket(const DenseOperator<Scalar>& op, const Vector<Scalar>& u,
                                      Scalar delta, const std::vector<double>& grid,
                                      std::vector<Scalar> epsilons = {}) {
  PDeltaBracket<Scalar> out;
  RDeltaResult<Scalar> r1 = r_delta(op, u, delta, PNorm::one, grid);
  out.p_upper = r1.value;

  const Scalar un = u.norm();
  if (un == Scalar(0)) {
    out.p_lower = Scalar(0);
    return out;
  }
  if (op.apply(u).norm() <= Scalar(tol::nullspace) * op.norm2 * un) {
    out.null_case = true;
    out.p_lower = un;
    out.p_upper = std::max(out.p_upper, out.p_lower);
    return out;
  }

  // The perturbation -delta u/||u|| is admissible for every u and extends the
  // nullspace construction: ||e_gamma + R Delta|| = ||e_gamma|| (1 + delta/(gamma ||u||)).
  const std::vector<double> extra = {static_cast<double>(r1.gamma)};
  {
    auto pull = [&](double g) {
      Resolvent<Scalar> res(op, Scalar(g));
      const Scalar bn = Scalar(g) * res.solve(u).norm();
      return Scalar(bn * (Scalar(1) + delta / (Scalar(g) * un)));
    };
    RDeltaResult<Scalar> lower = detail::minimize_over_grid<Scalar>(pull, grid, extra);
    out.p_lower = lower.value;
  }

  if (epsilons.empty()) epsilons = default_epsilons(op, u, delta, out.p_upper);
  for (Scalar eps : epsilons) {
    WorstCaseDirection<Scalar> wc;
    try {
      wc = worst_case_direction(op, u, eps);
    } catch (const WindowError&) {
      continue;
    }
    auto h = [&](double g) {
      Resolvent<Scalar> res(op, Scalar(g));
      Vector<Scalar> e = Scalar(-g) * res.solve(u);
      return Scalar((e + delta * res.solve(wc.v)).norm());
    };
    RDeltaResult<Scalar> lower = detail::minimize_over_grid<Scalar>(h, grid, extra);
    if (lower.value > out.p_lower) out.p_lower = lower.value;
    out.used_epsilons.push_back(eps);
  }
  return out;
}

template <typename Scalar>
struct QDeltaBracket {
  Scalar q_lower = Scalar(0);
  Scalar q_upper = Scalar(0);
};

/// Bracket of Q_delta(u) = inf_gamma sup_{||D||<=delta} ||e_gamma + R D||.
/// Inner upper bound: ||e_gamma|| + delta ||R||. Inner lower bound: the better
/// of D along the top right-singular direction of R (both signs) and D chosen
/// so that R D aligns with e_gamma.
template <typename Scalar>
QDeltaBracket<Scalar> q_delta_bracket(const DenseOperator<Scalar>& op, const Vector<Scalar>& u,
                                      Scalar delta, const std::vector<double>& grid) {
  if (!(delta > Scalar(0))) throw InvalidParameterError("q_delta_bracket: delta must be positive");
  if (grid.empty()) throw InvalidParameterError("q_delta_bracket: empty grid");
  QDeltaBracket<Scalar> out;
  Scalar best_lo = std::numeric_limits<Scalar>::infinity();
  Scalar best_hi = std::numeric_limits<Scalar>::infinity();
  for (double g : grid) {
    Resolvent<Scalar> res(op, Scalar(g));
    Vector<Scalar> e = Scalar(-g) * res.solve(u);
    const Scalar en = e.norm();
    auto [rnorm, rdir] = res.norm_and_direction();
    const Scalar hi = en + delta * rnorm;

    Vector<Scalar> rd = res.solve(rdir);
    Scalar lo = std::max((e + delta * rd).norm(), (e - delta * rd).norm());
    if (en > Scalar(0)) {
      // D = delta (A+gamma I) e / ||(A+gamma I) e|| stretches e by delta/||..||
      Vector<Scalar> ae = op.apply(e) + Scalar(g) * e;
      const Scalar an = ae.norm();
      if (an > Scalar(0)) lo = std::max(lo, en * (Scalar(1) + delta / an));
    }
    best_lo = std::min(best_lo, lo);
    best_hi = std::min(best_hi, hi);
  }
  out.q_lower = best_lo;
  out.q_upper = best_hi;
  return out;
}

// ---------------------------------------------------------------------------
// The balance parameter: delta = gamma^2 ||(A + gamma I)^{-1} u||

/// Solves gamma^2 ||(A+gamma I)^{-1} u|| = delta by bisection on log gamma.
/// For accretive A the left side is continuous and strictly increasing with
/// limits 0 and infinity, so the root exists and is unique.
template <typename Scalar>
Scalar balance_gamma(const DenseOperator<Scalar>& op, const Vector<Scalar>& u, Scalar delta) {
  if (!(u.norm() > Scalar(0))) throw InvalidParameterError("balance_gamma: u must be nonzero");
  if (!(delta > Scalar(0))) throw InvalidParameterError("balance_gamma: delta must be positive");
  auto f = [&](double g) {
    Resolvent<Scalar> res(op, Scalar(g));
    return static_cast<double>(Scalar(g) * Scalar(g) * res.solve(u).norm());
  };
  const double d = static_cast<double>(delta);
  double lo = 1e-14, hi = 1e14;
  std::vector<std::pair<double, double>> trace;
  const double flo = f(lo), fhi = f(hi);
  trace.push_back({lo, flo});
  trace.push_back({hi, fhi});
  if (!(flo <= d) || !(fhi >= d))
    throw WindowError("balance_gamma: root outside [1e-14, 1e14]", trace);
  double mid = lo;
  for (int it = 0; it < 300; ++it) {
    mid = std::sqrt(lo * hi);
    const double fm = f(mid);
    if (std::abs(fm - d) <= 1e-10 * d) return Scalar(mid);
    (fm < d ? lo : hi) = mid;
  }
  throw NumericalError("balance_gamma: bisection failed to converge");
}

// ---------------------------------------------------------------------------
// Bundle of error functionals over a grid

template <typename Scalar>
struct ErrorFunctionals {
  std::vector<double> gamma_grid;
  std::vector<Scalar> bias_norms;
  Scalar r1 = Scalar(0);
  Scalar r2 = Scalar(0);
  Scalar r_inf = Scalar(0);
  Scalar p_lower = Scalar(0);
  Scalar p_upper = Scalar(0);
  Scalar q_lower = Scalar(0);
  Scalar q_upper = Scalar(0);
};

/// Evaluates R_{delta,p} for p in {1,2,inf} on a common candidate set (grid
/// plus every refined minimizer), so the p-norm chain holds exactly, then the
/// P and Q brackets.
template <typename Scalar>
ErrorFunctionals<Scalar> compute_error_functionals(const DenseOperator<Scalar>& op,
                                                   const Vector<Scalar>& u, Scalar delta,
                                                   const std::vector<double>& grid,
                                                   std::vector<Scalar> epsilons = {},
                                                   int jobs = 1) {
  ErrorFunctionals<Scalar> out;
  out.gamma_grid = grid;
  out.bias_norms = bias_norm_curve(op, u, grid, jobs);

  const Scalar m = op.m_constant;
  auto value = [&](PNorm p, double g) {
    Resolvent<Scalar> res(op, Scalar(g));
    const Scalar bn = Scalar(g) * res.solve(u).norm();
    return detail::combine_rp<Scalar>(p, bn, m * delta / Scalar(g));
  };
  RDeltaResult<Scalar> r1 = detail::minimize_over_grid<Scalar>(
      [&](double g) { return value(PNorm::one, g); }, grid);
  RDeltaResult<Scalar> r2 = detail::minimize_over_grid<Scalar>(
      [&](double g) { return value(PNorm::two, g); }, grid);
  RDeltaResult<Scalar> ri = detail::minimize_over_grid<Scalar>(
      [&](double g) { return value(PNorm::inf, g); }, grid);

  // shared candidate set keeps R_inf <= R_2 <= R_1 <= 2 R_inf exact
  const std::vector<double> refined = {static_cast<double>(r1.gamma),
                                       static_cast<double>(r2.gamma),
                                       static_cast<double>(ri.gamma)};
  out.r1 = r1.value;
  out.r2 = r2.value;
  out.r_inf = ri.value;
  for (double g : refined) {
    out.r1 = std::min(out.r1, value(PNorm::one, g));
    out.r2 = std::min(out.r2, value(PNorm::two, g));
    out.r_inf = std::min(out.r_inf, value(PNorm::inf, g));
  }

  PDeltaBracket<Scalar> pb = p_delta_bracket(op, u, delta, grid, std::move(epsilons));
  out.p_lower = pb.p_lower;
  out.p_upper = pb.p_upper;
  QDeltaBracket<Scalar> qb = q_delta_bracket(op, u, delta, grid);
  out.q_lower = qb.q_lower;
  out.q_upper = qb.q_upper;
  return out;
}

}  // namespace lavreg

#endif  // LAVREG_REGULARIZATION_HPP
