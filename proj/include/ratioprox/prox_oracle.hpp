#pragma once

// Brute-force reference for prox_{lambda h_p} in dimensions 1 to 3.
// It only evaluates G(u) = ||x - u||^2/(2 lambda) + h_p(u) on a grid and then
// polishes the best grid point with a shrinking coordinate pattern search.

#include "ratioprox/prox.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>
#include <vector>

namespace ratioprox::oracle {

struct OracleResult {
  double grid_value = 0.0;
  double refined_value = 0.0;
  Vector grid_point;
  Vector refined_point;
};

inline double objective(const Vector& x, const Vector& u, double lambda, int p) {
  double dist = 0.0, l1 = 0.0, q = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    dist += (x[i] - u[i]) * (x[i] - u[i]);
    l1 += std::abs(u[i]);
    q += u[i] * u[i];
  }
  double h = 0.0;
  if (q > 0.0) h = p == 2 ? l1 * l1 / q : l1 / std::sqrt(q);
  return dist / (2.0 * lambda) + h;
}

/// Pattern search with coordinate moves and moves to exact zero.
inline Vector refine(const Vector& x, Vector u, double lambda, int p,
                     double step = 0.01) {
  double best = objective(x, u, lambda, p);
  Vector trial = u;
  while (step > 1e-14) {
    bool improved = false;
    for (Index i = 0; i < u.size(); ++i) {
      for (double cand : {u[i] + step, u[i] - step, 0.0}) {
        trial = u;
        trial[i] = cand;
        const double v = objective(x, trial, lambda, p);
        if (v < best) {
          best = v;
          u = trial;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return u;
}

/// Grid of spacing `h` over [-2||x||_inf, 2||x||_inf]^n, grid points at
/// integer multiples of h. For n = 3 the search is restricted to the closed
/// region where u matches the signs of x and is ordered like |x|; flipping a
/// sign or sorting to match only lowers G, so the grid minimum is unchanged.
inline OracleResult minimize(const Vector& x, double lambda, int p,
                             double h = 0.01) {
  const Index n = x.size();
  const double r = 2.0 * x.cwiseAbs().maxCoeff();
  const long steps = static_cast<long>(std::floor(r / h + 1e-9));
  OracleResult res;
  res.grid_value = std::numeric_limits<double>::infinity();
  const double inv2l = 1.0 / (2.0 * lambda);
  auto hval = [p](double l1, double q) {
    if (q <= 0.0) return 0.0;
    return p == 2 ? l1 * l1 / q : l1 / std::sqrt(q);
  };

  if (n == 1) {
    for (long a = -steps; a <= steps; ++a) {
      const double u = a * h;
      const double v = (x[0] - u) * (x[0] - u) * inv2l + hval(std::abs(u), u * u);
      if (v < res.grid_value) {
        res.grid_value = v;
        res.grid_point = Vector::Constant(1, u);
      }
    }
  } else if (n == 2) {
    for (long a = -steps; a <= steps; ++a) {
      const double u0 = a * h;
      const double d0 = (x[0] - u0) * (x[0] - u0);
      for (long b = -steps; b <= steps; ++b) {
        const double u1 = b * h;
        const double v = (d0 + (x[1] - u1) * (x[1] - u1)) * inv2l +
                         hval(std::abs(u0) + std::abs(u1), u0 * u0 + u1 * u1);
        if (v < res.grid_value) {
          res.grid_value = v;
          res.grid_point = Vector(2);
          res.grid_point << u0, u1;
        }
      }
    }
  } else if (n == 3) {
    std::array<Index, 3> ord{0, 1, 2};
    std::sort(ord.begin(), ord.end(), [&](Index i, Index j) {
      return std::abs(x[i]) > std::abs(x[j]);
    });
    const double m0 = std::abs(x[ord[0]]), m1 = std::abs(x[ord[1]]),
                 m2 = std::abs(x[ord[2]]);
    long best_a = 0, best_b = 0, best_c = 0;
    for (long a = 0; a <= steps; ++a) {
      const double u0 = a * h, d0 = (m0 - u0) * (m0 - u0);
      for (long b = 0; b <= a; ++b) {
        const double u1 = b * h, d1 = d0 + (m1 - u1) * (m1 - u1);
        const double l1b = u0 + u1, qb = u0 * u0 + u1 * u1;
        for (long c = 0; c <= b; ++c) {
          const double u2 = c * h;
          const double v = (d1 + (m2 - u2) * (m2 - u2)) * inv2l +
                           hval(l1b + u2, qb + u2 * u2);
          if (v < res.grid_value) {
            res.grid_value = v;
            best_a = a, best_b = b, best_c = c;
          }
        }
      }
    }
    res.grid_point = Vector::Zero(3);
    const long idx[3] = {best_a, best_b, best_c};
    for (int i = 0; i < 3; ++i)
      res.grid_point[ord[i]] = std::copysign(idx[i] * h, x[ord[i]]);
  } else {
    throw InvalidInput("oracle::minimize supports n <= 3");
  }
  res.refined_point = refine(x, res.grid_point, lambda, p, h);
  res.refined_value = objective(x, res.refined_point, lambda, p);
  return res;
}

}  // namespace ratioprox::oracle
