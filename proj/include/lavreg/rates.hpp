#ifndef LAVREG_RATES_HPP
#define LAVREG_RATES_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lavreg/fractional.hpp"
#include "lavreg/regularization.hpp"
#include "lavreg/rules.hpp"
#include "lavreg/types.hpp"

namespace lavreg {

// ---------------------------------------------------------------------------
// Log-log least squares

struct RateFit {
  std::vector<double> xs;
  std::vector<double> ys;
  double slope = 0.0;
  double intercept = 0.0;      // in natural-log units
  double max_residual = 0.0;   // sup |log y - fit| over the points
};

inline RateFit fit_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InvalidParameterError("fit_rate: length mismatch");
  if (xs.size() < 4) throw InvalidParameterError("fit_rate: need at least 4 points");
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw InvalidParameterError("fit_rate: values must be positive");
  RateFit f;
  f.xs = xs;
  f.ys = ys;
  const double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  const double den = m * sxx - sx * sx;
  if (den == 0.0) throw InvalidParameterError("fit_rate: degenerate abscissae");
  f.slope = (m * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / m;
  for (std::size_t i = 0; i < xs.size(); ++i)
    f.max_residual = std::max(
        f.max_residual, std::abs(std::log(ys[i]) - (f.intercept + f.slope * std::log(xs[i]))));
  return f;
}

/// Scaling-regime detector: the power-law stretch of a log-log curve. Scans a
/// tolerance ladder and returns the first tolerance's best window (smallest
/// max-residual among windows spanning at least min_span decades); curves
/// bend at the discretization floor and the spectral edge, and a plain
/// full-range fit would average those drifts in.
struct ScalingWindow {
  std::size_t lo = 0;  // inclusive index range into the input arrays
  std::size_t hi = 0;
  RateFit fit;
};

inline ScalingWindow select_scaling_window(const std::vector<double>& xs,
                                           const std::vector<double>& ys,
                                           std::size_t min_points = 8,
                                           double min_span_decades = 0.8) {
  if (xs.size() != ys.size() || xs.size() < 4)
    throw InvalidParameterError("select_scaling_window: bad input");
  min_points = std::max<std::size_t>(min_points, 4);
  const std::size_t n = xs.size();

  auto window_fit = [&](std::size_t a, std::size_t b) {
    std::vector<double> wx(xs.begin() + a, xs.begin() + b + 1);
    std::vector<double> wy(ys.begin() + a, ys.begin() + b + 1);
    return fit_rate(wx, wy);
  };

  for (double tolerance : {0.005, 0.01, 0.02, 0.04, 0.08, 0.15}) {
    bool found = false;
    ScalingWindow best;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + min_points - 1; b < n; ++b) {
        if (std::log10(xs[b] / xs[a]) < min_span_decades &&
            std::log10(xs[a] / xs[b]) < min_span_decades)
          continue;
        RateFit f = window_fit(a, b);
        if (f.max_residual > tolerance) continue;
        if (!found || f.max_residual < best.fit.max_residual) {
          found = true;
          best = {a, b, std::move(f)};
        }
      }
    }
    if (found) return best;
  }
  return {0, n - 1, window_fit(0, n - 1)};
}

// ---------------------------------------------------------------------------
// Source-condition witnesses

template <typename Scalar>
struct SourceConditionWitness {
  Scalar p = Scalar(0);
  Vector<Scalar> w;
  Vector<Scalar> u;  // = A^p w through the quadrature
};

namespace detail {

/// Spectral amplitude profile making ||e_gamma|| follow gamma^p cleanly across
/// the working window: |u_i|^2 carries the exact mass of the density
/// lambda^(2p-1) over the Voronoi cell of lambda_i, with the off-spectrum
/// tails folded into the edge atoms (weight lambda^2 towards infinity, weight
/// 1 towards zero, matching the squared-bias kernel in the two regimes).
inline std::vector<double> matched_spectral_masses(const std::vector<double>& lam_sorted,
                                                   double p) {
  const std::size_t n = lam_sorted.size();
  std::vector<double> mass(n, 0.0);
  auto cell_hi = [&](std::size_t i) {
    return i == 0 ? lam_sorted[0] : 0.5 * (lam_sorted[i - 1] + lam_sorted[i]);
  };
  auto cell_lo = [&](std::size_t i) {
    return i + 1 < n ? 0.5 * (lam_sorted[i] + lam_sorted[i + 1]) : lam_sorted[n - 1];
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lam_sorted[i] > 0.0)) continue;
    const double hi = cell_hi(i), lo = cell_lo(i);
    double m = (std::pow(hi, 2 * p) - std::pow(lo, 2 * p)) / (2 * p);
    if (i == 0 && p < 1.0)
      m += lam_sorted[0] * lam_sorted[0] * std::pow(hi, 2 * p - 2) / (2 - 2 * p);
    if (i + 1 == n || !(lam_sorted[i + 1] > 0.0)) m += std::pow(lo, 2 * p) / (2 * p);
    mass[i] = m;
  }
  return mass;
}

}  // namespace detail

/// Constructs u in R(A^p) whose bias saturates the gamma^p rate. For p < 1
/// the amplitudes carry the density-matched cell masses with seeded random
/// signs, laid out in the eigenbasis for diagonal operators and in the
/// right-singular basis otherwise; for p >= 1 the rate saturates at O(gamma)
/// regardless, so the witness concentrates on the top spectral cell. In every
/// case u is produced by the fractional-power quadrature applied to w.
template <typename Scalar>
SourceConditionWitness<Scalar> make_source_witness(const DenseOperator<Scalar>& op, Scalar p,
                                                   std::uint64_t seed,
                                                   const QuadratureSpec& quad) {
  if (!(p > Scalar(0))) throw InvalidParameterError("make_source_witness: p must be positive");
  const Index n = op.dim();
  const double pd = static_cast<double>(p);
  SourceConditionWitness<Scalar> out;
  out.p = p;
  if (op.diagonal && pd < 1.0) {
    std::vector<std::pair<double, Index>> lam(n);
    for (Index i = 0; i < n; ++i) lam[i] = {static_cast<double>(op.entries(i, i)), i};
    std::sort(lam.begin(), lam.end(), std::greater<>());
    std::vector<double> sorted(n);
    for (Index i = 0; i < n; ++i) sorted[i] = lam[i].first;
    const auto mass = detail::matched_spectral_masses(sorted, pd);
    Rng rng(seed);
    Vector<Scalar> w = Vector<Scalar>::Zero(n);
    for (Index i = 0; i < n; ++i) {
      if (!(sorted[i] > 0.0)) continue;
      const double amp = rng.sign() * std::sqrt(mass[i]);
      w[lam[i].second] = Scalar(amp / std::pow(sorted[i], pd));
    }
    w /= w.norm();
    out.w = std::move(w);
  } else if (op.diagonal) {
    Index top = 0;
    op.entries.diagonal().maxCoeff(&top);
    out.w = Vector<Scalar>::Zero(n);
    out.w[top] = Scalar(1);
  } else {
    Eigen::BDCSVD<Matrix<Scalar>> svd(op.entries, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (pd < 1.0) {
      std::vector<double> sigmas(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) sigmas[static_cast<std::size_t>(i)] =
          static_cast<double>(sv(i));
      const auto mass = detail::matched_spectral_masses(sigmas, pd);
      Rng rng(seed);
      Vector<Scalar> w = Vector<Scalar>::Zero(n);
      for (Index i = 0; i < n; ++i) {
        if (!(sigmas[static_cast<std::size_t>(i)] > 0.0)) continue;
        const double amp = rng.sign() * std::sqrt(mass[static_cast<std::size_t>(i)]) /
                           std::pow(sigmas[static_cast<std::size_t>(i)], pd);
        w += Scalar(amp) * svd.matrixV().col(i);
      }
      w /= w.norm();
      out.w = std::move(w);
    } else {
      out.w = svd.matrixV().col(0);
    }
  }
  out.u = frac_power_apply(op, p, out.w, quad);
  return out;
}

// ---------------------------------------------------------------------------
// Exact-data rate measurement

struct RateReport {
  std::vector<double> xs;       // full curve
  std::vector<double> ys;
  std::size_t window_lo = 0;    // scaling window used for the fit
  std::size_t window_hi = 0;
  RateFit fit;
};

/// Fits ||e_gamma|| against gamma over the scaling window of the grid;
/// expected slope min(p, 1) for u in R(A^p).
template <typename Scalar>
RateReport exact_data_rate_of(const DenseOperator<Scalar>& op, const Vector<Scalar>& u,
                              const std::vector<double>& grid, int jobs = 1) {
  RateReport rep;
  rep.xs = grid;
  auto bn = bias_norm_curve(op, u, grid, jobs);
  rep.ys.assign(bn.begin(), bn.end());
  ScalingWindow win = select_scaling_window(rep.xs, rep.ys);
  rep.window_lo = win.lo;
  rep.window_hi = win.hi;
  rep.fit = std::move(win.fit);
  return rep;
}

template <typename Scalar>
RateReport exact_data_rate(const DenseOperator<Scalar>& op,
                           const SourceConditionWitness<Scalar>& witness,
                           const std::vector<double>& grid, int jobs = 1) {
  return exact_data_rate_of(op, witness.u, grid, jobs);
}

// ---------------------------------------------------------------------------
// Saturation probes

template <typename Scalar>
struct SaturationReport {
  Scalar floor = Scalar(0);       // min ||e_gamma||/gamma over the window
  Scalar gamma_at_floor = Scalar(0);
  RateFit trend;                  // fit of ||e_gamma||/gamma against gamma
  bool window_limited = false;    // floor attained at the edge, still falling
};

template <typename Scalar>
SaturationReport<Scalar> saturation_probe(const DenseOperator<Scalar>& op,
                                          const Vector<Scalar>& u,
                                          const std::vector<double>& grid) {
  if (!(u.norm() > Scalar(0))) throw InvalidParameterError("saturation_probe: u must be nonzero");
  SaturationReport<Scalar> rep;
  auto bn = bias_norm_curve(op, u, grid);
  std::vector<double> ys(grid.size());
  std::size_t arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ys[i] = static_cast<double>(bn[i]) / grid[i];
    if (ys[i] < best) {
      best = ys[i];
      arg = i;
    }
  }
  rep.floor = Scalar(best);
  rep.gamma_at_floor = Scalar(grid[arg]);
  rep.trend = fit_rate(grid, ys);
  const bool at_edge = arg == 0 || arg + 1 == grid.size();
  rep.window_limited = at_edge && std::abs(rep.trend.slope) > 0.05;
  return rep;
}

template <typename Scalar>
struct NoisySaturationReport {
  std::vector<double> deltas;       // in-window points
  std::vector<double> gamma_bars;   // balance parameters
  std::vector<double> values;       // delta/gamma_bar = ||u_gammabar - u||
  RateFit fit;                      // values against delta
  Scalar floor = Scalar(0);         // min values/sqrt(delta)
  bool nullspace_dominated = false;
  std::size_t dropped = 0;          // deltas whose balance point left the window
};

/// Balance-rule chain: for each delta, gamma_bar solves
/// delta = gamma^2 ||(A+gamma I)^{-1} u||, and delta/gamma_bar = ||u_gammabar - u||
/// is a lower bound for the best possible error. The floor of value/sqrt(delta)
/// stays positive for u != 0.
template <typename Scalar>
NoisySaturationReport<Scalar> noisy_saturation_probe(const DenseOperator<Scalar>& op,
                                                     const Vector<Scalar>& u,
                                                     const std::vector<double>& delta_grid,
                                                     bool window_filter = true) {
  if (!(u.norm() > Scalar(0)))
    throw InvalidParameterError("noisy_saturation_probe: u must be nonzero");
  NoisySaturationReport<Scalar> rep;
  auto [wlo, whi] = working_window(op);
  for (double d : delta_grid) {
    const double gb = static_cast<double>(balance_gamma(op, u, Scalar(d)));
    if (window_filter && (gb < wlo || gb > whi)) {
      ++rep.dropped;
      continue;
    }
    rep.deltas.push_back(d);
    rep.gamma_bars.push_back(gb);
    rep.values.push_back(d / gb);
  }
  if (rep.deltas.size() >= 4) {
    ScalingWindow win = select_scaling_window(rep.deltas, rep.values, 4, 0.6);
    rep.fit = std::move(win.fit);
  }
  double floor = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rep.deltas.size(); ++i)
    floor = std::min(floor, rep.values[i] / std::sqrt(rep.deltas[i]));
  rep.floor = rep.deltas.empty() ? Scalar(0) : Scalar(floor);
  rep.nullspace_dominated = !rep.deltas.empty() && rep.fit.slope < 0.1;
  return rep;
}

// ---------------------------------------------------------------------------
// Converse probe: recover the source condition from the measured rate

struct ConverseQRow {
  double q = 0.0;
  double roundtrip_rel_err = 0.0;  // ||A^q (A^-q u) - u|| / ||u||
  double growth_exponent = 0.0;
  bool divergent = false;
  bool verdict_applies = false;  // rows above 0.9 p_hat are report-only
  bool passed = false;
};

template <typename Scalar>
struct ConverseReport {
  RateReport exact_rate;  // measured p_hat = exact_rate.fit.slope
  std::vector<ConverseQRow> rows;
  std::vector<double> resolvent_gammas;   // boundedness trace for p_hat ~ 1
  std::vector<double> resolvent_norms;    // ||(A+gamma I)^{-1} u||
  double resolvent_ratio = 0.0;           // max/min over the window
  bool resolvent_bounded = false;
  bool range_membership_checked = false;  // trace evaluated against the p=1 criterion
};

/// Measures the exact-data slope p_hat, then probes membership u in R(A^q) on
/// a 5-point q ladder below 0.9 p_hat (verdict rows) plus two report-only rows
/// above p_hat, via the negative-power round trip and its tail diagnostic.
/// For p_hat near 1 the boundedness of ||(A+gamma I)^{-1} u|| is traced, which
/// is the range-membership criterion at the saturation exponent.
template <typename Scalar>
ConverseReport<Scalar> converse_probe(const DenseOperator<Scalar>& op, const Vector<Scalar>& u,
                                      Scalar q_max, const std::vector<double>& grid,
                                      QuadratureSpec quad) {
  if (!(q_max > Scalar(0)) || !(q_max < Scalar(1)))
    throw InvalidParameterError("converse_probe: q_max must lie in (0,1)");
  ConverseReport<Scalar> rep;
  rep.exact_rate = exact_data_rate_of(op, u, grid);
  const double p_hat = rep.exact_rate.fit.slope;

  quad.tail_floor = discretization_floor(op);
  const double verdict_cap = std::min(0.9 * p_hat, static_cast<double>(q_max));
  std::vector<double> qs;
  if (verdict_cap > 0.02) {
    for (int j = 0; j < 5; ++j) qs.push_back((0.3 + 0.15 * j) * verdict_cap / 0.9);
  }
  const std::size_t verdict_rows = qs.size();
  for (double factor : {1.1, 1.25}) {
    const double q = factor * p_hat;
    if (q > 0.02 && q < 0.97) qs.push_back(q);
  }
  if (qs.empty()) {
    // no measurable rate: report fixed membership probes, all expected to fail
    for (double frac : {0.25, 0.5, 0.75}) qs.push_back(frac * static_cast<double>(q_max));
  }
  const Scalar un = u.norm();
  for (std::size_t j = 0; j < qs.size(); ++j) {
    ConverseQRow row;
    row.q = qs[j];
    auto neg = neg_frac_power_apply(op, Scalar(row.q), u, quad);
    Vector<Scalar> back = frac_power_apply(op, Scalar(row.q), neg.value, quad);
    row.roundtrip_rel_err = static_cast<double>((back - u).norm() / un);
    row.growth_exponent = neg.diagnostics.growth_exponent;
    row.divergent = neg.diagnostics.divergent;
    row.verdict_applies = j < verdict_rows;
    row.passed = !row.divergent && row.roundtrip_rel_err <= 1e-3;
    rep.rows.push_back(row);
  }

  // boundedness trace as gamma -> 0; above ||A|| the norm falls like 1/gamma
  // for every u, so the ratio is taken over gamma <= ||A||
  for (double g : grid) {
    if (g > static_cast<double>(op.norm2)) continue;
    rep.resolvent_gammas.push_back(g);
    rep.resolvent_norms.push_back(
        static_cast<double>(resolvent_apply(op, Scalar(g), u).norm()));
  }
  const auto [mn, mx] = std::minmax_element(rep.resolvent_norms.begin(),
                                            rep.resolvent_norms.end());
  rep.resolvent_ratio = *mn > 0.0 ? *mx / *mn : 0.0;
  rep.range_membership_checked = p_hat >= 0.9;
  rep.resolvent_bounded = rep.resolvent_ratio <= 10.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Noisy-data rates

/// md/apriori/balance fit the realized error with seeded noise; "functional"
/// fits p_upper = R_{delta,1}; "qfunctional" fits the Q_delta upper envelope
/// min_gamma(||e_gamma|| + delta ||R_gamma||), the best-possible-error proxy
/// that stays O(delta) on operators with closed range.
enum class NoisyRule { md, apriori, balance, functional, qfunctional };

inline const char* to_string(NoisyRule r) {
  switch (r) {
    case NoisyRule::md: return "MD";
    case NoisyRule::apriori: return "apriori";
    case NoisyRule::balance: return "balance";
    case NoisyRule::functional: return "functional";
    default: return "qfunctional";
  }
}

struct NoisyRuleParams {
  double b0 = 1.5;   // MD band
  double b1 = 2.0;
  double c = 1.0;    // a-priori constant
};

template <typename Scalar>
struct NoisyRateReport {
  std::vector<double> deltas;         // points used by the fit
  std::vector<double> errors;         // realized errors (or p_upper values)
  std::vector<double> gammas_chosen;  // 0 marks the infinite branch
  RateFit fit;
  std::size_t dropped = 0;
};

/// Realized error ||u_{gamma(delta)}^delta - u|| against delta for the MD and
/// a-priori rules (seeded noise per delta); the balance rule contributes its
/// error identity ||u_gammabar - u|| = delta/gammabar; "functional" fits
/// p_upper = R_{delta,1}. Expected slope p/(p+1). Deltas whose parameter
/// lands outside the working window are dropped from the fit.
template <typename Scalar>
NoisyRateReport<Scalar> noisy_rate(const DenseOperator<Scalar>& op,
                                   const SourceConditionWitness<Scalar>& witness,
                                   const std::vector<double>& delta_grid, NoisyRule rule,
                                   const NoisyRuleParams& params = {},
                                   std::uint64_t noise_seed = 1,
                                   bool window_filter = true,
                                   const std::vector<double>& gamma_grid_override = {}) {
  NoisyRateReport<Scalar> rep;
  auto [wlo, whi] = working_window(op);
  const std::vector<double> grid =
      gamma_grid_override.empty() ? gamma_grid(op, 60) : gamma_grid_override;
  std::size_t k = 0;
  for (double d : delta_grid) {
    ++k;
    double gamma = 0.0;
    double err = 0.0;
    if (rule == NoisyRule::functional) {
      auto r1 = r_delta(op, witness.u, Scalar(d), PNorm::one, grid);
      gamma = static_cast<double>(r1.gamma);
      err = static_cast<double>(r1.value);
    } else if (rule == NoisyRule::qfunctional) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (double g : grid) {
        Resolvent<Scalar> res(op, Scalar(g));
        const Scalar v = Scalar(g) * res.solve(witness.u).norm() +
                         Scalar(d) * res.norm_and_direction().first;
        if (v < best) {
          best = v;
          gamma = g;
        }
      }
      err = static_cast<double>(best);
      rep.deltas.push_back(d);
      rep.errors.push_back(err);
      rep.gammas_chosen.push_back(gamma);
      continue;  // no window filter: the closed-range regime needs small gamma
    } else if (rule == NoisyRule::balance) {
      gamma = static_cast<double>(balance_gamma(op, witness.u, Scalar(d)));
      err = d / gamma;  // = ||u_gammabar - u||
    } else {
      RegularizationProblem<Scalar> prob = make_problem(op, witness.u, Scalar(d),
                                                        noise_seed * 1000003ULL + k);
      if (rule == NoisyRule::md) {
        auto oc = md_rule(op, prob.f_noisy, Scalar(d), Scalar(params.b0), Scalar(params.b1));
        if (oc.infinite) {
          ++rep.dropped;
          continue;
        }
        gamma = static_cast<double>(oc.gamma);
        err = static_cast<double>((oc.solution - witness.u).norm());
      } else {
        gamma = static_cast<double>(apriori_rule(Scalar(d), std::min(witness.p, Scalar(1)),
                                                 Scalar(params.c)));
        err = static_cast<double>(
            (lavrentiev_solve(op, Scalar(gamma), prob.f_noisy) - witness.u).norm());
      }
    }
    if (window_filter && (gamma < wlo || gamma > whi)) {
      ++rep.dropped;
      continue;
    }
    rep.deltas.push_back(d);
    rep.errors.push_back(err);
    rep.gammas_chosen.push_back(gamma);
  }
  if (rep.deltas.size() >= 4) {
    ScalingWindow win = select_scaling_window(rep.deltas, rep.errors, 5, 0.6);
    rep.fit = std::move(win.fit);
  }
  return rep;
}

}  // namespace lavreg

#endif  // LAVREG_RATES_HPP
