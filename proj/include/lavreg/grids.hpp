#ifndef LAVREG_GRIDS_HPP
#define LAVREG_GRIDS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>
#include <vector>

#include "lavreg/types.hpp"

namespace lavreg {

/// m geometrically spaced points in [lo, hi], endpoints included.
inline std::vector<double> geomspace(double lo, double hi, int m) {
  if (!(lo > 0.0) || !(hi > lo)) throw InvalidParameterError("geomspace: need 0 < lo < hi");
  if (m < 2) throw InvalidParameterError("geomspace: need at least 2 points");
  std::vector<double> out(static_cast<std::size_t>(m));
  const double la = std::log(lo), lb = std::log(hi);
  for (int i = 0; i < m; ++i)
    out[static_cast<std::size_t>(i)] = std::exp(la + (lb - la) * i / (m - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

/// Discretization floor: below this scale the discretized problem behaves
/// well-posed and every rate collapses to O(gamma). An n-cell discretization
/// resolves the spectrum down to about ||A||/n; non-normal discretizations
/// (the triangular integration matrix) also carry spurious singular values far
/// below that scale, so the floor takes the larger of the two.
template <typename Scalar>
double discretization_floor(const DenseOperator<Scalar>& op) {
  const double nrm = static_cast<double>(op.norm2);
  return std::max({static_cast<double>(op.sigma_min_pos),
                   nrm / static_cast<double>(op.dim()), 1e-8 * nrm});
}

/// Regularization-parameter window for ill-posed-regime measurements.
template <typename Scalar>
std::pair<double, double> working_window(const DenseOperator<Scalar>& op) {
  return {discretization_floor(op), 10.0 * static_cast<double>(op.norm2)};
}

/// Default gamma grid: geometric over the working window.
template <typename Scalar>
std::vector<double> gamma_grid(const DenseOperator<Scalar>& op, int points = 60) {
  auto [lo, hi] = working_window(op);
  return geomspace(lo, hi, points);
}

/// Certification grid from the nonnegativity certificate: 25 geometric points
/// spanning [1e-6, 1e3] in absolute units.
inline std::vector<double> certification_grid() { return geomspace(1e-6, 1e3, 25); }

/// One golden-section pass for a continuous f on [lo, hi], searched in log
/// coordinates. Returns the best (x, f(x)) seen including the endpoints.
inline std::pair<double, double> golden_refine(const std::function<double(double)>& f,
                                               double lo, double hi, int iters = 48) {
  const double invphi = 0.6180339887498948482;
  double a = std::log(lo), b = std::log(hi);
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(std::exp(c)), fd = f(std::exp(d));
  double best_x = fc < fd ? std::exp(c) : std::exp(d);
  double best_f = std::min(fc, fd);
  for (int k = 0; k < iters && (b - a) > 1e-14; ++k) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - invphi * (b - a);
      fc = f(std::exp(c));
      if (fc < best_f) { best_f = fc; best_x = std::exp(c); }
    } else {
      a = c; c = d; fc = fd;
      d = a + invphi * (b - a);
      fd = f(std::exp(d));
      if (fd < best_f) { best_f = fd; best_x = std::exp(d); }
    }
  }
  return {best_x, best_f};
}

/// Runs fn(i) for i in [0, n). Results must be written to caller-owned slots,
/// which keeps the outcome independent of the thread schedule.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int jobs = 1) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t nthreads = std::min<std::size_t>({static_cast<std::size_t>(jobs), hw, n});
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([t, n, nthreads, &fn] {
      for (std::size_t i = t; i < n; i += nthreads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace lavreg

#endif  // LAVREG_GRIDS_HPP
