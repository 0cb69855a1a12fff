#ifndef LAVREG_OPERATORS_HPP
#define LAVREG_OPERATORS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lavreg/grids.hpp"
#include "lavreg/types.hpp"

namespace lavreg {

// ---------------------------------------------------------------------------
// Spectral scale helpers

/// Smallest eigenvalue of the symmetric part (A + A^T)/2.
template <typename Scalar>
Scalar symmetric_part_lambda_min(const Matrix<Scalar>& a) {
  Matrix<Scalar> sym = Scalar(0.5) * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// 2-norm by power iteration on A^T A.
template <typename Scalar>
Scalar operator_norm_2(const Matrix<Scalar>& a, Scalar rel_tol = Scalar(1e-10),
                       int max_iters = 20000) {
  const Index n = a.rows();
  Rng rng(0x5eed0101u);
  Vector<Scalar> x = rng.unit_sphere<Scalar>(n);
  Scalar sigma = Scalar(0);
  for (int k = 0; k < max_iters; ++k) {
    Vector<Scalar> y = a * x;
    Vector<Scalar> z = a.transpose() * y;
    const Scalar zn = z.norm();
    if (zn == Scalar(0)) return Scalar(0);
    const Scalar next = y.norm();
    x = z / zn;
    if (k > 0 && std::abs(next - sigma) <= rel_tol * next) return next;
    sigma = next;
  }
  return sigma;
}

namespace detail {

template <typename Scalar>
void fill_spectral_scales(DenseOperator<Scalar>& op) {
  if (op.diagonal) {
    auto d = op.entries.diagonal();
    op.norm2 = d.maxCoeff();
    op.sigma_min = d.minCoeff();
    Scalar pos = std::numeric_limits<Scalar>::infinity();
    for (Index i = 0; i < d.size(); ++i)
      if (d[i] > Scalar(0)) pos = std::min(pos, d[i]);
    op.sigma_min_pos = std::isinf(static_cast<double>(pos)) ? Scalar(0) : pos;
    return;
  }
  op.norm2 = operator_norm_2(op.entries);
  Eigen::BDCSVD<Matrix<Scalar>> svd(op.entries);
  const auto& sv = svd.singularValues();
  op.sigma_min = sv(sv.size() - 1);
  const Scalar thresh = tol::nullspace * sv(0);
  Scalar pos = Scalar(0);
  for (Index i = sv.size() - 1; i >= 0; --i) {
    if (sv(i) > thresh) { pos = sv(i); break; }
  }
  op.sigma_min_pos = pos;
}

}  // namespace detail

/// Wraps an arbitrary square matrix, measuring its spectral scales and
/// checking accretivity of the symmetric part.
template <typename Scalar>
DenseOperator<Scalar> make_dense_operator(Matrix<Scalar> entries, std::string label,
                                          std::optional<Scalar> grid_step = std::nullopt) {
  if (entries.rows() != entries.cols() || entries.rows() < 1)
    throw InvalidDimensionError("make_dense_operator: need a square matrix");
  DenseOperator<Scalar> op;
  op.entries = std::move(entries);
  op.label = std::move(label);
  op.grid_step = grid_step;
  op.accretive = symmetric_part_lambda_min(op.entries) >= -Scalar(tol::accretivity);
  op.m_constant = Scalar(1);  // certified grid check is certify()'s job
  detail::fill_spectral_scales(op);
  return op;
}

// ---------------------------------------------------------------------------
// Builders

/// Midpoint discretization of the integration operator (Vu)(x) = int_0^x u,
/// on the uniform grid x_i = (i-1/2)h: h below the diagonal, h/2 on it.
/// Its symmetric part is (h/2) * ones, which is PSD in exact arithmetic.
template <typename Scalar = double>
DenseOperator<Scalar> build_integration_operator(Index n) {
  if (n < 2) throw InvalidDimensionError("build_integration_operator: n must be >= 2");
  const Scalar h = Scalar(1) / Scalar(n);
  Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < i; ++j) a(i, j) = h;
    a(i, i) = h / Scalar(2);
  }
  DenseOperator<Scalar> op;
  op.entries = std::move(a);
  op.label = "integration(n=" + std::to_string(n) + ")";
  op.grid_step = h;
  op.accretive = true;
  op.m_constant = Scalar(1);
  detail::fill_spectral_scales(op);
  return op;
}

/// Midpoint-collocation discretization of the Abel operator with kernel
/// (x-y)^(alpha-1)/Gamma(alpha). Entries are the exact cell integrals
/// ((x_i - y_{j-1})_+^alpha - (x_i - y_j)_+^alpha) / Gamma(alpha+1).
template <typename Scalar = double>
DenseOperator<Scalar> build_abel_operator(Index n, Scalar alpha) {
  if (!(alpha > Scalar(0)) || !(alpha < Scalar(1)))
    throw InvalidParameterError("build_abel_operator: alpha must lie in (0,1)");
  if (n < 2) throw InvalidDimensionError("build_abel_operator: n must be >= 2");
  const Scalar h = Scalar(1) / Scalar(n);
  const Scalar gamma1p = std::tgamma(static_cast<double>(alpha) + 1.0);
  auto clamped_pow = [&](Scalar base) {
    return base > Scalar(0) ? Scalar(std::pow(static_cast<double>(base),
                                              static_cast<double>(alpha)))
                            : Scalar(0);
  };
  Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const Scalar xi = (Scalar(i) + Scalar(0.5)) * h;
    for (Index j = 0; j <= i; ++j) {
      const Scalar y_lo = Scalar(j) * h;
      const Scalar y_hi = Scalar(j + 1) * h;
      a(i, j) = (clamped_pow(xi - y_lo) - clamped_pow(xi - y_hi)) / gamma1p;
    }
  }
  DenseOperator<Scalar> op;
  op.entries = std::move(a);
  op.label = "abel(n=" + std::to_string(n) + ",alpha=" + std::to_string(static_cast<double>(alpha)) + ")";
  op.grid_step = h;
  op.accretive = symmetric_part_lambda_min(op.entries) >= -Scalar(tol::accretivity);
  op.m_constant = Scalar(1);
  detail::fill_spectral_scales(op);
  return op;
}

/// diag(lambda_1, ..., lambda_n) with all lambda_i >= 0.
template <typename Scalar = double>
DenseOperator<Scalar> build_diagonal_operator(const std::vector<Scalar>& lambdas) {
  if (lambdas.empty())
    throw InvalidParameterError("build_diagonal_operator: empty spectrum");
  for (Scalar l : lambdas)
    if (!(l >= Scalar(0)))
      throw InvalidParameterError("build_diagonal_operator: negative eigenvalue");
  const Index n = static_cast<Index>(lambdas.size());
  Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) a(i, i) = lambdas[static_cast<std::size_t>(i)];
  DenseOperator<Scalar> op;
  op.entries = std::move(a);
  op.label = "diag(n=" + std::to_string(n) + ")";
  op.accretive = true;
  op.diagonal = true;
  op.m_constant = Scalar(1);
  detail::fill_spectral_scales(op);
  return op;
}

// ---------------------------------------------------------------------------
// Resolvent: factorization of (A + gamma I), reusable across right-hand sides.

template <typename Scalar>
class Resolvent {
 public:
  Resolvent(const DenseOperator<Scalar>& op, Scalar gamma)
      : gamma_(gamma), diagonal_(op.diagonal) {
    if (!(gamma > Scalar(0)))
      throw InvalidParameterError("Resolvent: gamma must be positive");
    if (diagonal_) {
      diag_ = op.entries.diagonal().array() + gamma;
      if ((diag_.array() <= Scalar(0)).any())
        throw NumericalError("Resolvent: nonpositive shifted diagonal");
    } else {
      shifted_ = op.entries;
      shifted_.diagonal().array() += gamma;
      lu_.compute(shifted_);
      const auto& u = lu_.matrixLU();
      Scalar min_pivot = std::numeric_limits<Scalar>::infinity();
      for (Index i = 0; i < u.rows(); ++i)
        min_pivot = std::min(min_pivot, std::abs(u(i, i)));
      if (!(min_pivot > Scalar(0)) || !std::isfinite(static_cast<double>(min_pivot)))
        throw NumericalError("Resolvent: factorization breakdown (operator not certified?)");
    }
  }

  Scalar gamma() const { return gamma_; }

  /// x with (A + gamma I) x = v, iteratively refined to a relative residual
  /// of 1e-12.
  Vector<Scalar> solve(const Vector<Scalar>& v) const {
    if (diagonal_) return v.cwiseQuotient(diag_);
    Vector<Scalar> x = lu_.solve(v);
    const Scalar vn = v.norm();
    if (vn == Scalar(0)) return x;
    for (int pass = 0; pass < 4; ++pass) {
      Vector<Scalar> r = v - shifted_ * x;
      if (r.norm() <= Scalar(tol::resolvent_residual) * vn) break;
      x += lu_.solve(r);
    }
    return x;
  }

  /// Solve with (A + gamma I)^T.
  Vector<Scalar> solve_transpose(const Vector<Scalar>& v) const {
    if (diagonal_) return v.cwiseQuotient(diag_);
    Vector<Scalar> x = lu_.transpose().solve(v);
    const Scalar vn = v.norm();
    if (vn == Scalar(0)) return x;
    for (int pass = 0; pass < 4; ++pass) {
      Vector<Scalar> r = v - shifted_.transpose() * x;
      if (r.norm() <= Scalar(tol::resolvent_residual) * vn) break;
      Vector<Scalar> dx = lu_.transpose().solve(r);
      x += dx;
    }
    return x;
  }

  Matrix<Scalar> solve_matrix(const Matrix<Scalar>& rhs) const {
    if (diagonal_) return diag_.cwiseInverse().asDiagonal() * rhs;
    return lu_.solve(rhs);
  }

  /// ||(A + gamma I)^{-1}||_2 and the right-singular direction attaining it,
  /// by power iteration on R^T R to a relative tolerance.
  std::pair<Scalar, Vector<Scalar>> norm_and_direction(Scalar rel_tol = Scalar(1e-8),
                                                       int max_iters = 50000) const {
    if (diagonal_) {
      Index which = 0;
      diag_.minCoeff(&which);
      Vector<Scalar> dir = Vector<Scalar>::Zero(diag_.size());
      dir[which] = Scalar(1);
      return {Scalar(1) / diag_[which], dir};
    }
    const Index n = shifted_.rows();
    Rng rng(0x9e0d1ceULL ^ static_cast<std::uint64_t>(n));
    Vector<Scalar> x = rng.unit_sphere<Scalar>(n);
    Scalar sigma = Scalar(0);
    int stable = 0;
    for (int k = 0; k < max_iters; ++k) {
      Vector<Scalar> y = solve(x);
      Vector<Scalar> z = solve_transpose(y);
      const Scalar next = y.norm();  // = ||R x|| with ||x|| = 1
      const Scalar zn = z.norm();
      if (zn == Scalar(0)) return {Scalar(0), x};
      x = z / zn;
      if (k > 0 && std::abs(next - sigma) <= rel_tol * next) {
        if (++stable >= 2) return {next, x};
      } else {
        stable = 0;
      }
      sigma = next;
    }
    return {sigma, x};
  }

 private:
  Scalar gamma_;
  bool diagonal_;
  Vector<Scalar> diag_;
  Matrix<Scalar> shifted_;
  Eigen::PartialPivLU<Matrix<Scalar>> lu_;
};

template <typename Scalar>
Vector<Scalar> resolvent_apply(const DenseOperator<Scalar>& op, Scalar gamma,
                               const Vector<Scalar>& v) {
  if (v.size() != op.dim())
    throw InvalidDimensionError("resolvent_apply: dimension mismatch");
  return Resolvent<Scalar>(op, gamma).solve(v);
}

template <typename Scalar>
Scalar resolvent_norm(const DenseOperator<Scalar>& op, Scalar gamma,
                      Scalar rel_tol = Scalar(1e-8)) {
  return Resolvent<Scalar>(op, gamma).norm_and_direction(rel_tol).first;
}

// ---------------------------------------------------------------------------
// Nonnegativity certificate

struct CertificationReport {
  bool passed = false;
  double max_ratio = 0.0;   // max over grid of gamma*||(A+gI)^-1|| / M
  double worst_gamma = 0.0;
  std::vector<double> gammas;
  std::vector<double> ratios;
  bool accretivity_checked = false;
  double sym_lambda_min = 0.0;
};

/// Checks gamma*||(A+gamma I)^{-1}|| <= M(1+cert_tol) over the certification
/// grid, and lambda_min((A+A^T)/2) >= -acc_tol for operators flagged accretive.
template <typename Scalar>
CertificationReport certify(const DenseOperator<Scalar>& op,
                            const std::vector<double>& grid = certification_grid(),
                            double cert_tol = tol::certificate, int jobs = 1) {
  CertificationReport rep;
  rep.gammas = grid;
  rep.ratios.assign(grid.size(), 0.0);
  parallel_for(
      grid.size(),
      [&](std::size_t i) {
        const double g = grid[i];
        const double nrm = static_cast<double>(resolvent_norm(op, Scalar(g)));
        rep.ratios[i] = g * nrm / static_cast<double>(op.m_constant);
      },
      jobs);
  rep.max_ratio = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (rep.ratios[i] > rep.max_ratio) {
      rep.max_ratio = rep.ratios[i];
      rep.worst_gamma = grid[i];
    }
  }
  rep.passed = rep.max_ratio <= 1.0 + cert_tol;
  if (op.accretive) {
    rep.accretivity_checked = true;
    rep.sym_lambda_min = static_cast<double>(symmetric_part_lambda_min(op.entries));
    rep.passed = rep.passed && rep.sym_lambda_min >= -tol::accretivity;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Range/nullspace decomposition

template <typename Scalar>
struct RangeNullDecomposition {
  Vector<Scalar> u_range;
  Vector<Scalar> u_null;
  Scalar norm_bound_check = Scalar(0);  // ||u_null|| / ||u||
};

/// Splits u along closure(R(A)) + N(A). The nullspace basis comes from the
/// right-singular vectors below the relative threshold, the range basis from
/// the corresponding left-singular vectors; the combined square system is then
/// solved directly.
template <typename Scalar>
RangeNullDecomposition<Scalar> range_null_decompose(const DenseOperator<Scalar>& op,
                                                    const Vector<Scalar>& u,
                                                    Scalar null_tol = Scalar(tol::nullspace)) {
  const Index n = op.dim();
  if (u.size() != n)
    throw InvalidDimensionError("range_null_decompose: dimension mismatch");
  RangeNullDecomposition<Scalar> out;

  Eigen::BDCSVD<Matrix<Scalar>> svd(op.entries, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const Scalar thresh = null_tol * sv(0);
  Index rank = 0;
  while (rank < n && sv(rank) > thresh) ++rank;

  if (rank == n) {
    out.u_range = u;
    out.u_null = Vector<Scalar>::Zero(n);
    out.norm_bound_check = Scalar(0);
    return out;
  }

  Matrix<Scalar> basis(n, n);
  basis.leftCols(rank) = svd.matrixU().leftCols(rank);
  basis.rightCols(n - rank) = svd.matrixV().rightCols(n - rank);

  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(basis);
  const auto& r = qr.matrixQR();
  Scalar rmax = Scalar(0), rmin = std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < n; ++i) {
    const Scalar d = std::abs(r(i, i));
    rmax = std::max(rmax, d);
    rmin = std::min(rmin, d);
  }
  if (!(rmin > Scalar(1e-12) * rmax))
    throw DecompositionError("range_null_decompose: range/null bases are nearly parallel");

  Vector<Scalar> coeff = qr.solve(u);
  out.u_null = basis.rightCols(n - rank) * coeff.tail(n - rank);
  out.u_range = u - out.u_null;
  const Scalar un = u.norm();
  out.norm_bound_check = un > Scalar(0) ? out.u_null.norm() / un : Scalar(0);
  return out;
}

/// CSV export of the raw entries, one row per line, "%.17g" fields.
template <typename Scalar>
std::string to_csv(const Matrix<Scalar>& m) {
  std::string out;
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(m(i, j)));
      out += buf;
      out += (j + 1 < m.cols()) ? ',' : '\n';
    }
  }
  return out;
}

}  // namespace lavreg

#endif  // LAVREG_OPERATORS_HPP
