#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ratioprox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;  // column-major
using Index = Eigen::Index;

/// Exponent p of the ratio penalty h_p(x) = (||x||_1 / ||x||_2)^p.
class PenaltyOrder {
 public:
  constexpr PenaltyOrder() = default;
  explicit PenaltyOrder(int p) : p_(p) {
    if (p != 1 && p != 2)
      throw std::invalid_argument("PenaltyOrder must be 1 or 2, got " +
                                  std::to_string(p));
  }
  constexpr int value() const { return p_; }
  friend constexpr bool operator==(PenaltyOrder, PenaltyOrder) = default;

  static PenaltyOrder one() { return PenaltyOrder{1}; }
  static PenaltyOrder two() { return PenaltyOrder{2}; }

 private:
  int p_ = 2;
};

/// Bad arguments or malformed data (non-finite entries, size mismatch, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Solver configuration that violates a documented bound.
class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A linear solve or factorization failed numerically.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidInput(what);
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace ratioprox
