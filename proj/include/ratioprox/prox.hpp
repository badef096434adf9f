#pragma once

// Proximity operators of the ratio penalties h_1 = l1/l2 and h_2 = (l1/l2)^2.
//
// For a point x and index lambda the prox minimizes
//     G(u) = ||x - u||^2 / (2 lambda) + h_p(u).
// Reduce to m = |x| sorted in descending order. A nonzero minimizer has the
// form u = beta * (m - t)_+ on the k largest entries, with t in
// [m_{k+1}, m_k) and beta the optimal scale along that ray. Writing the
// support entries as mean mu plus a centered part with variance V, the ray
// direction is
//     d(theta) = cos(theta) 1/sqrt(k) + sin(theta) (m_S - mu)/||m_S - mu||,
// and with Q = ||m_S||^2, phi0 = atan2(sqrt(V), mu) the objective on piece k is
//     F_k(theta) = (tail_k + Q sin^2(theta - phi0)) / (2 lambda)
//                  + (sqrt(k) cos(theta))^p.
// For p = 2 this is a shifted cosine in 2 theta with one closed-form minimizer;
// for p = 1 the stationary points are bracketed on a grid and bisected.

#include "ratioprox/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace ratioprox {

/// h_p(x) = (||x||_1 / ||x||_2)^p, and 0 at x = 0.
inline double eval_hp(const Vector& x, PenaltyOrder p) {
  const double l2 = x.norm();
  if (l2 == 0.0) return 0.0;
  const double r = x.lpNorm<1>() / l2;
  return p.value() == 2 ? r * r : r;
}

/// G(u) = ||x - u||^2 / (2 lambda) + h_p(u), evaluated directly.
inline double prox_objective(const Vector& x, const Vector& u, double lambda,
                             PenaltyOrder p) {
  return (x - u).squaredNorm() / (2.0 * lambda) + eval_hp(u, p);
}

struct ProxResult {
  Vector minimizer;
  double objective_value = 0.0;
  Index support_size = 0;
  /// Candidates dropped because their value was not finite.
  int skipped_candidates = 0;
};

namespace detail {

constexpr double kTieRelTol = 1e-12;
constexpr int kP1Samples = 32;

struct Candidate {
  double value = std::numeric_limits<double>::infinity();
  Index k = 0;  // 0 means u = 0
  double theta = 0.0;
};

struct PieceStats {
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations from the mean
  double q = 0.0;   // sum of squares
};

inline double piece_value(double tail, const PieceStats& s, double k,
                          double theta, double phi0, int p, double lambda) {
  const double dev = std::sin(theta - phi0);
  const double l1 = std::sqrt(k) * std::cos(theta);
  return (tail + s.q * dev * dev) / (2.0 * lambda) + (p == 2 ? l1 * l1 : l1);
}

/// Searches all candidates. `mags` sorted descending, `suffix[k]` is the sum
/// of mags[i]^2 over i >= k (size n + 1).
inline Candidate search(std::span<const double> mags,
                        std::span<const double> suffix, double lambda, int p,
                        int& skipped) {
  const Index n = static_cast<Index>(mags.size());
  Candidate best;
  best.value = suffix[0] / (2.0 * lambda);
  best.k = 0;

  auto offer = [&](double value, Index k, double theta) {
    if (!std::isfinite(value)) {
      ++skipped;
      return;
    }
    if (value < best.value - kTieRelTol * (1.0 + std::abs(best.value)))
      best = Candidate{value, k, theta};
  };

  PieceStats s;
  for (Index k = 1; k <= n; ++k) {
    const double xk = mags[k - 1];
    const double delta = xk - s.mean;
    s.mean += delta / static_cast<double>(k);
    s.m2 += delta * (xk - s.mean);
    s.q += xk * xk;

    if (k < n && mags[k] == xk) continue;  // empty piece

    const double kd = static_cast<double>(k);
    const double sv = std::sqrt(std::max(s.m2, 0.0) / kd);
    const double phi0 = std::atan2(sv, s.mean);
    const double theta_hi = std::atan2(sv, std::max(s.mean - xk, 0.0));
    const double theta_lo =
        k < n ? std::atan2(sv, std::max(s.mean - mags[k], 0.0)) : 0.0;
    const double tail = suffix[k];

    auto value_at = [&](double th) {
      return piece_value(tail, s, kd, th, phi0, p, lambda);
    };

    offer(value_at(theta_lo), k, theta_lo);
    if (theta_hi > theta_lo) {
      if (p == 2) {
        const double a = s.q / (2.0 * lambda);
        const double arg_c =
            std::atan2(a * std::sin(2.0 * phi0), kd - a * std::cos(2.0 * phi0));
        const double th = 0.5 * (std::numbers::pi - arg_c);
        if (th > theta_lo && th < theta_hi) offer(value_at(th), k, th);
      } else {
        const double a = s.q / (2.0 * lambda);
        const double rk = std::sqrt(kd);
        auto slope = [&](double th) {
          return a * std::sin(2.0 * (th - phi0)) - rk * std::sin(th);
        };
        const double h = (theta_hi - theta_lo) / kP1Samples;
        double prev_th = theta_lo;
        double prev_g = slope(prev_th);
        for (int j = 1; j <= kP1Samples; ++j) {
          const double th = j == kP1Samples ? theta_hi : theta_lo + j * h;
          const double g = slope(th);
          offer(value_at(th), k, th);
          if (prev_g < 0.0 && g > 0.0) {
            double lo = prev_th, hi = th;
            for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + hi); ++it) {
              const double mid = 0.5 * (lo + hi);
              if (slope(mid) < 0.0)
                lo = mid;
              else
                hi = mid;
            }
            const double root = 0.5 * (lo + hi);
            offer(value_at(root), k, root);
          }
          prev_th = th;
          prev_g = g;
        }
      }
      offer(value_at(theta_hi), k, theta_hi);
    }
  }
  return best;
}

/// Writes the nonnegative minimizer for the sorted magnitudes into `out`
/// (same order as `mags`).
inline void reconstruct(std::span<const double> mags, const Candidate& c,
                        std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (c.k == 0) return;
  PieceStats s;
  for (Index k = 1; k <= c.k; ++k) {
    const double xk = mags[k - 1];
    const double delta = xk - s.mean;
    s.mean += delta / static_cast<double>(k);
    s.m2 += delta * (xk - s.mean);
    s.q += xk * xk;
  }
  const double kd = static_cast<double>(c.k);
  const double sv = std::sqrt(std::max(s.m2, 0.0) / kd);
  const double phi0 = std::atan2(sv, s.mean);
  const double beta = std::sqrt(s.q) * std::cos(c.theta - phi0);
  const double along = std::cos(c.theta) / std::sqrt(kd);
  const double spread = std::sqrt(std::max(s.m2, 0.0));
  const double across = spread > 0.0 ? std::sin(c.theta) / spread : 0.0;
  for (Index i = 0; i < c.k; ++i) {
    const double d = along + across * (mags[i] - s.mean);
    out[i] = std::max(beta * d, 0.0);
  }
}

}  // namespace detail

/// Reusable buffers for repeated prox evaluations of the same length.
struct ProxWorkspace {
  std::vector<Index> order;
  std::vector<double> mags;
  std::vector<double> suffix;
  std::vector<double> sorted_out;

  void resize(Index n) {
    order.resize(n);
    mags.resize(n);
    suffix.resize(n + 1);
    sorted_out.resize(n);
  }
};

/// prox_{lambda h_p}(x) written into `out`; returns the number of skipped
/// candidates. Allocation-free once `ws` has been sized.
inline int prox_hp_into(const Vector& x, double lambda, PenaltyOrder p,
                        Vector& out, ProxWorkspace& ws) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw InvalidInput("prox_hp: lambda must be positive and finite");
  if (!x.allFinite()) throw InvalidInput("prox_hp: non-finite input entry");
  const Index n = x.size();
  ws.resize(n);
  out.setZero(n);
  if (n == 0) return 0;
  if (n == 1) {
    // h_p = 1 on any nonzero scalar, so keep x exactly when x^2 / (2 lambda) > 1.
    if (std::abs(x[0]) > std::sqrt(2.0 * lambda)) out[0] = x[0];
    return 0;
  }

  std::iota(ws.order.begin(), ws.order.end(), Index{0});
  std::sort(ws.order.begin(), ws.order.end(), [&](Index a, Index b) {
    const double fa = std::abs(x[a]), fb = std::abs(x[b]);
    return fa > fb || (fa == fb && a < b);
  });
  for (Index i = 0; i < n; ++i) ws.mags[i] = std::abs(x[ws.order[i]]);
  ws.suffix[n] = 0.0;
  for (Index i = n; i-- > 0;)
    ws.suffix[i] = ws.suffix[i + 1] + ws.mags[i] * ws.mags[i];

  int skipped = 0;
  const auto best = detail::search(ws.mags, ws.suffix, lambda, p.value(), skipped);
  detail::reconstruct(ws.mags, best, ws.sorted_out);
  for (Index i = 0; i < n; ++i) {
    const Index j = ws.order[i];
    out[j] = std::signbit(x[j]) ? -ws.sorted_out[i] : ws.sorted_out[i];
  }
  return skipped;
}

/// prox_{lambda h_p}(x). When the prox is multivalued the candidate with the
/// smallest support among those within 1e-12 (relative) of the minimum wins.
inline ProxResult prox_hp(const Vector& x, double lambda, PenaltyOrder p) {
  ProxWorkspace ws;
  ProxResult r;
  r.skipped_candidates = prox_hp_into(x, lambda, p, r.minimizer, ws);
  r.objective_value = prox_objective(x, r.minimizer, lambda, p);
  r.support_size = (r.minimizer.array() != 0.0).count();
  return r;
}

/// prox of lambda h_p for a single pair (a, b).
inline std::pair<double, double> prox_pair(double a, double b, double lambda,
                                           int p) {
  const double fa = std::abs(a), fb = std::abs(b);
  const bool swap = fb > fa;
  const std::array<double, 2> mags{swap ? fb : fa, swap ? fa : fb};
  const std::array<double, 3> suffix{mags[0] * mags[0] + mags[1] * mags[1],
                                     mags[1] * mags[1], 0.0};
  int skipped = 0;
  const auto best = detail::search(mags, suffix, lambda, p, skipped);
  std::array<double, 2> u{};
  detail::reconstruct(mags, best, u);
  double ua = swap ? u[1] : u[0];
  double ub = swap ? u[0] : u[1];
  if (std::signbit(a)) ua = -ua;
  if (std::signbit(b)) ub = -ub;
  return {ua, ub};
}

/// prox of lambda * phi, phi(u) = sum_i h_p(u_i, u_{N+i}), for u of length 2N.
inline Vector prox_group_phi(const Vector& u, double lambda, PenaltyOrder p) {
  if (u.size() % 2 != 0)
    throw InvalidInput("prox_group_phi: length must be even");
  if (!(lambda > 0.0)) throw InvalidInput("prox_group_phi: lambda must be > 0");
  if (!u.allFinite()) throw InvalidInput("prox_group_phi: non-finite entry");
  const Index half = u.size() / 2;
  Vector out(u.size());
  for (Index i = 0; i < half; ++i) {
    const auto [a, b] = prox_pair(u[i], u[half + i], lambda, p.value());
    out[i] = a;
    out[half + i] = b;
  }
  return out;
}

/// Componentwise sign(x) max(|x| - tau, 0).
inline Vector soft_threshold(const Vector& x, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("soft_threshold: tau must be > 0");
  return x.unaryExpr([tau](double v) {
    const double m = std::abs(v) - tau;
    return m > 0.0 ? std::copysign(m, v) : 0.0;
  });
}

/// Pairwise shrinkage v -> max(1 - tau/||v||, 0) v over (u_i, u_{N+i}):
/// the prox of tau times the isotropic TV norm.
inline Vector group_shrink_itv(const Vector& u, double tau) {
  if (u.size() % 2 != 0)
    throw InvalidInput("group_shrink_itv: length must be even");
  if (!(tau > 0.0)) throw InvalidInput("group_shrink_itv: tau must be > 0");
  const Index half = u.size() / 2;
  Vector out(u.size());
  for (Index i = 0; i < half; ++i) {
    const double a = u[i], b = u[half + i];
    const double nrm = std::hypot(a, b);
    const double f = nrm > tau ? 1.0 - tau / nrm : 0.0;
    out[i] = f * a;
    out[half + i] = f * b;
  }
  return out;
}

}  // namespace ratioprox
