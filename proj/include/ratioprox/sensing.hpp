#pragma once

// Test ensembles for sparse recovery: oversampled DCT and equicorrelated
// Gaussian sensing matrices, separated sparse signals and noisy observations.

#include "ratioprox/rng.hpp"
#include "ratioprox/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace ratioprox {

struct DctEnsembleSpec {
  Index m = 64;
  Index n = 1024;
  double E = 1.0;
  std::uint64_t rng_seed = 0;
};

struct GaussianEnsembleSpec {
  Index m = 64;
  Index n = 1024;
  double r = 0.0;
  std::uint64_t rng_seed = 0;
  bool normalize_columns = false;
};

struct SparseSignalSpec {
  Index n = 1024;
  Index s = 5;
  double D = 0.0;  // 0: N(0,1) amplitudes
  Index min_separation = 1;
  std::uint64_t rng_seed = 0;
};

/// ceil(2E), the index separation used with DCT matrices.
inline Index dct_min_separation(double E) {
  return std::max<Index>(1, static_cast<Index>(std::ceil(2.0 * E - 1e-12)));
}

/// Column j (1-based) is cos(2 pi j w / E) / sqrt(m) for one shared
/// w ~ U[0,1]^m.
inline Matrix make_dct_matrix(const DctEnsembleSpec& spec) {
  require(spec.m >= 1 && spec.n >= spec.m, "DCT ensemble needs 1 <= m <= n");
  require(spec.E > 0.0, "DCT ensemble needs E > 0");
  Rng rng(spec.rng_seed);
  Vector w(spec.m);
  for (Index i = 0; i < spec.m; ++i) w[i] = rng.uniform();
  Matrix A(spec.m, spec.n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.m));
  const double c = 2.0 * std::numbers::pi / spec.E;
  for (Index j = 0; j < spec.n; ++j)
    for (Index i = 0; i < spec.m; ++i)
      A(i, j) = scale * std::cos(c * static_cast<double>(j + 1) * w[i]);
  return A;
}

/// Rows i.i.d. N(0, (1-r) I + r 1 1^T), drawn as sqrt(1-r) g + sqrt(r) z 1.
/// With normalize_columns every column is centered and scaled to unit norm.
inline Matrix make_gaussian_matrix(const GaussianEnsembleSpec& spec) {
  require(spec.m >= 1 && spec.n >= 1, "Gaussian ensemble needs m, n >= 1");
  require(spec.r >= 0.0 && spec.r < 1.0, "Gaussian ensemble needs r in [0, 1)");
  Rng rng(spec.rng_seed);
  Matrix A(spec.m, spec.n);
  const double a = std::sqrt(1.0 - spec.r), c = std::sqrt(spec.r);
  for (Index i = 0; i < spec.m; ++i) {
    const double z = rng.normal();
    for (Index j = 0; j < spec.n; ++j) A(i, j) = a * rng.normal() + c * z;
  }
  if (spec.normalize_columns) {
    for (Index j = 0; j < spec.n; ++j) {
      auto col = A.col(j);
      col.array() -= col.mean();
      const double nrm = col.norm();
      require(nrm > 0.0, "Gaussian ensemble: constant column");
      col /= nrm;
    }
  }
  return A;
}

/// s-sparse signal with pairwise index gaps >= min_separation and the
/// support drawn uniformly among admissible supports.
inline Vector gen_sparse_signal(const SparseSignalSpec& spec) {
  const Index n = spec.n, s = spec.s, d = spec.min_separation;
  require(s >= 1 && d >= 1, "sparse signal needs s >= 1, min_separation >= 1");
  require(spec.D >= 0.0, "sparse signal needs D >= 0");
  // Positions p_i = c_i + i (d - 1) with c strictly increasing over
  // `slots` values turn the separated placement into plain subset sampling.
  const Index slots = n - (s - 1) * (d - 1);
  if (slots < s)
    throw InvalidInput("sparse signal: cannot place " + std::to_string(s) +
                       " entries " + std::to_string(d) + " apart in length " +
                       std::to_string(n));
  Rng rng(spec.rng_seed);
  std::vector<Index> pool(static_cast<std::size_t>(slots));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < s; ++i) {
    const Index j = i + static_cast<Index>(rng.below(
                            static_cast<std::uint64_t>(slots - i)));
    std::swap(pool[i], pool[j]);
  }
  std::vector<Index> pick(pool.begin(), pool.begin() + s);
  std::sort(pick.begin(), pick.end());

  Vector amp(s);
  if (spec.D > 0.0) {
    Vector g(s);
    for (Index i = 0; i < s; ++i) g[i] = rng.normal();
    for (Index i = 0; i < s; ++i) {
      const double sign = g[i] < 0.0 ? -1.0 : 1.0;
      amp[i] = sign * std::pow(10.0, spec.D * rng.uniform());
    }
  } else {
    for (Index i = 0; i < s; ++i) amp[i] = rng.normal();
  }
  Vector x = Vector::Zero(n);
  for (Index i = 0; i < s; ++i) x[pick[i] + i * (d - 1)] = amp[i];
  return x;
}

/// max |x_i| / min |x_i| over the support; 0 for x = 0.
inline double dynamic_range(const Vector& x) {
  double hi = 0.0, lo = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < x.size(); ++i) {
    const double a = std::abs(x[i]);
    if (a == 0.0) continue;
    hi = std::max(hi, a);
    lo = std::min(lo, a);
  }
  return hi == 0.0 ? 0.0 : hi / lo;
}

struct NoisyObservation {
  Vector b;
  double sigma = 0.0;  // 1.2 ||noise||_2
};

/// b = A x + noise_scale xi with xi standard normal.
inline NoisyObservation make_noisy_observation(const Matrix& A,
                                               const Vector& x_true,
                                               double noise_scale, Rng& rng) {
  require(noise_scale >= 0.0, "noise_scale must be >= 0");
  require(x_true.size() == A.cols(), "x_true has wrong length");
  NoisyObservation obs;
  obs.b = A * x_true;
  if (noise_scale == 0.0) return obs;
  Vector e(A.rows());
  for (Index i = 0; i < e.size(); ++i) e[i] = noise_scale * rng.normal();
  obs.b += e;
  obs.sigma = 1.2 * e.norm();
  return obs;
}

/// Minimum-norm least-squares solution, singular values below
/// 1e-10 sigma_max treated as zero.
inline Vector pinv_solve(const Matrix& A, const Vector& b) {
  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  return svd.solve(b);
}

/// Moves x_l1 toward the least-squares point until the residual is sigma:
/// x_l1 if ||A x_l1 - b|| <= sigma, otherwise
/// A^+ b + sigma (x_l1 - A^+ b) / ||A x_l1 - b||.
inline Vector noisy_initial_point(const Matrix& A, const Vector& b, double sigma,
                                  const Vector& x_l1) {
  require(sigma >= 0.0, "sigma must be >= 0");
  require(x_l1.size() == A.cols() && b.size() == A.rows(),
          "noisy_initial_point: size mismatch");
  const double res = (A * x_l1 - b).norm();
  if (res <= sigma) return x_l1;
  const Vector ls = pinv_solve(A, b);
  return ls + (sigma / res) * (x_l1 - ls);
}

}  // namespace ratioprox
