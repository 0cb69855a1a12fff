#ifndef LAVREG_TYPES_HPP
#define LAVREG_TYPES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lavreg {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Error types

struct InvalidParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidDimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecompositionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a root or band search exhausts its bracket window. Carries the
/// trace of (parameter, value) pairs visited so callers can embed it in reports.
struct WindowError : std::runtime_error {
  WindowError(const std::string& msg, std::vector<std::pair<double, double>> t = {})
      : std::runtime_error(msg), trace(std::move(t)) {}
  std::vector<std::pair<double, double>> trace;
};

// ---------------------------------------------------------------------------
// Tolerances shared across modules

namespace tol {
inline constexpr double accretivity = 1e-10;   // lambda_min of symmetric part
inline constexpr double certificate = 1e-8;    // gamma*||(A+gI)^-1|| <= M*(1+cert)
inline constexpr double nullspace = 1e-10;     // relative singular value threshold
inline constexpr double resolvent_residual = 1e-12;
inline constexpr double frac_quadrature = 1e-8;
}  // namespace tol

// ---------------------------------------------------------------------------
// DenseOperator: a discretized nonnegative operator together with its
// certificate metadata. Immutable after construction.

template <typename Scalar>
struct DenseOperator {
  Matrix<Scalar> entries;
  Scalar m_constant = Scalar(1);
  std::string label;
  std::optional<Scalar> grid_step;  // h = 1/n for integral-operator discretizations
  bool accretive = false;
  bool diagonal = false;

  // Cached at construction; spectral scales used for windows and quadrature.
  Scalar norm2 = Scalar(0);       // ||A||_2
  Scalar sigma_min = Scalar(0);   // smallest singular value
  Scalar sigma_min_pos = Scalar(0);  // smallest nonzero singular value

  Index dim() const { return entries.rows(); }

  Vector<Scalar> apply(const Vector<Scalar>& v) const {
    if (v.size() != dim())
      throw InvalidDimensionError("operator/vector dimension mismatch");
    if (diagonal) return entries.diagonal().cwiseProduct(v);
    return entries * v;
  }
};

// ---------------------------------------------------------------------------
// Deterministic random numbers (splitmix64 + Box-Muller). The standard
// library distributions are implementation-defined, which would break
// byte-identical reports across toolchains.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in (0,1), 53-bit resolution, never exactly 0.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform01();
    const double v = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  int sign() { return (next_u64() & 1u) ? 1 : -1; }

  template <typename Scalar = double>
  Vector<Scalar> unit_sphere(Index n) {
    Vector<Scalar> v(n);
    for (Index i = 0; i < n; ++i) v[i] = static_cast<Scalar>(normal());
    const Scalar nrm = v.norm();
    if (nrm == Scalar(0)) return unit_sphere<Scalar>(n);
    return v / nrm;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic pairwise reduction. Terms are merged binary-counter style so
// the summation tree is fixed by the push order, independent of threading.

template <typename T>
class PairwiseAccumulator {
 public:
  void push(T term) {
    std::size_t level = 0;
    while (level < filled_.size() && filled_[level]) {
      term += slots_[level];
      filled_[level] = false;
      ++level;
    }
    if (level == filled_.size()) {
      slots_.push_back(std::move(term));
      filled_.push_back(true);
    } else {
      slots_[level] = std::move(term);
      filled_[level] = true;
    }
    ++count_;
  }

  bool empty() const { return count_ == 0; }

  /// Sum of everything pushed so far; accumulator must be non-empty.
  T total() const {
    T out;
    bool have = false;
    for (std::size_t level = 0; level < filled_.size(); ++level) {
      if (!filled_[level]) continue;
      if (!have) {
        out = slots_[level];
        have = true;
      } else {
        out += slots_[level];
      }
    }
    if (!have) throw InvalidParameterError("PairwiseAccumulator::total on empty sum");
    return out;
  }

 private:
  std::vector<T> slots_;
  std::vector<bool> filled_;
  std::size_t count_ = 0;
};

}  // namespace lavreg

#endif  // LAVREG_TYPES_HPP
