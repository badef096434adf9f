#pragma once

#include "ratioprox/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <vector>

namespace ratioprox {

constexpr double kSuccessRelError = 0.005;

struct SupportCounts {
  Index missing = 0;
  Index misidentified = 0;
};

struct RecoveryMetrics {
  double rel_error = 0.0;
  bool success = false;
  Index missing = 0;
  Index misidentified = 0;
  double mse = 0.0;
};

inline double relative_error(const Vector& x_star, const Vector& x_true) {
  require(x_star.size() == x_true.size(), "relative_error: size mismatch");
  const double nt = x_true.norm();
  require(nt > 0.0, "relative_error: ground truth is zero");
  return (x_star - x_true).norm() / nt;
}

inline bool is_success(double rel_error) { return rel_error <= kSuccessRelError; }

/// 1e-3 ||x*||_inf: entries below this fraction of the peak count as zero.
inline double default_detect_threshold(const Vector& x_star) {
  return x_star.size() == 0 ? 0.0 : 1e-3 * x_star.lpNorm<Eigen::Infinity>();
}

/// Declared support is {i : |x*_i| > detect_threshold}.
inline SupportCounts support_metrics(const Vector& x_star, const Vector& x_true,
                                     double detect_threshold) {
  require(x_star.size() == x_true.size(), "support_metrics: size mismatch");
  require(detect_threshold >= 0.0, "support_metrics: negative threshold");
  SupportCounts c;
  for (Index i = 0; i < x_true.size(); ++i) {
    const bool declared = std::abs(x_star[i]) > detect_threshold;
    const bool truth = x_true[i] != 0.0;
    if (truth && !declared) ++c.missing;
    if (!truth && declared) ++c.misidentified;
  }
  return c;
}

/// ||x* - x||_2, unsquared.
inline double mse(const Vector& x_star, const Vector& x_true) {
  require(x_star.size() == x_true.size(), "mse: size mismatch");
  return (x_star - x_true).norm();
}

inline std::vector<Index> support_of(const Vector& x) {
  std::vector<Index> s;
  for (Index i = 0; i < x.size(); ++i)
    if (x[i] != 0.0) s.push_back(i);
  return s;
}

/// sqrt(sigma^2 tr((A_I^T A_I)^{-1})), on the same scale as mse().
inline double oracle_mse(const Matrix& A, const std::vector<Index>& support,
                         double noise_sigma) {
  require(!support.empty(), "oracle_mse: empty support");
  Matrix ai(A.rows(), static_cast<Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) {
    require(support[k] >= 0 && support[k] < A.cols(), "oracle_mse: bad index");
    ai.col(static_cast<Index>(k)) = A.col(support[k]);
  }
  const Matrix g = ai.transpose() * ai;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  const Vector ev = eig.eigenvalues();
  if (eig.info() != Eigen::Success || !(ev.minCoeff() > 1e-12 * ev.maxCoeff()))
    throw NumericalError("oracle_mse: A_I is rank deficient");
  return std::sqrt(noise_sigma * noise_sigma * ev.cwiseInverse().sum());
}

inline RecoveryMetrics recovery_metrics(
    const Vector& x_star, const Vector& x_true,
    std::optional<double> detect_threshold = std::nullopt) {
  RecoveryMetrics m;
  m.rel_error = relative_error(x_star, x_true);
  m.success = is_success(m.rel_error);
  const auto c = support_metrics(
      x_star, x_true, detect_threshold.value_or(default_detect_threshold(x_star)));
  m.missing = c.missing;
  m.misidentified = c.misidentified;
  m.mse = mse(x_star, x_true);
  return m;
}

}  // namespace ratioprox
