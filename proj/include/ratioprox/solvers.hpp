#pragma once

// Solvers for min_x lambda h_p(x) + 1/2 ||A x - b||^2:
// forward-backward splitting, monotone accelerated proximal gradient, ADMM,
// plus an accelerated l1 least-squares solver used to build starting points.

#include "ratioprox/linalg.hpp"
#include "ratioprox/prox.hpp"
#include "ratioprox/types.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>

namespace ratioprox {

struct CsProblem {
  Matrix A;
  Vector b;
  double lambda = 1e-4;
  PenaltyOrder p{2};
  std::optional<Vector> ground_truth;

  Index rows() const { return A.rows(); }
  Index cols() const { return A.cols(); }

  void validate() const {
    require(A.rows() >= 1 && A.cols() >= 1, "CsProblem: empty matrix");
    require(b.size() == A.rows(), "CsProblem: b has wrong length");
    require(lambda > 0.0, "CsProblem: lambda must be positive");
    require(!ground_truth || ground_truth->size() == A.cols(),
            "CsProblem: ground truth has wrong length");
    require(A.allFinite() && b.allFinite(), "CsProblem: non-finite data");
  }
};

/// Zero (or negative) step and iteration fields mean "use the default":
/// step_gamma = 0.99 / ||A||_2^2, alpha_x = alpha_y = step_gamma,
/// max_iters = 5 n.
struct SolverConfig {
  double step_gamma = 0.0;
  double alpha_x = 0.0;
  double alpha_y = 0.0;
  double rho = 1.0;
  int max_iters = 0;
  double rel_tol = 1e-6;
  bool assert_descent = false;
  /// Precomputed ||A||_2; estimated by power iteration when not positive.
  double spectral_norm = 0.0;
};

struct SolverTrace {
  double initial_objective = 0.0;
  std::vector<double> objective;  // F(x^k), k = 1..iterations
  std::vector<double> rel_change;
  std::vector<double> rel_error_to_truth;  // empty without ground truth
  std::vector<double> lagrangian;          // ADMM only, L at k = 0..iterations
  int iterations = 0;
  double wall_time = 0.0;
  bool converged = false;
};

class DivergedError : public NumericalError {
 public:
  DivergedError(const std::string& what, SolverTrace trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const SolverTrace& trace() const { return trace_; }

 private:
  SolverTrace trace_;
};

/// Raised when the ADMM sufficient-decrease inequality fails.
class DescentViolation : public NumericalError {
 public:
  DescentViolation(int iteration, double before, double after, double needed)
      : NumericalError(message(iteration, before, after, needed)),
        iteration_(iteration), before_(before), after_(after) {}
  int iteration() const { return iteration_; }
  double before() const { return before_; }
  double after() const { return after_; }

 private:
  static std::string message(int it, double before, double after,
                             double needed) {
    std::ostringstream os;
    os.precision(17);
    os << "augmented Lagrangian descent violated at iteration " << it
       << ": L(k)=" << before << " L(k+1)=" << after
       << " required decrease " << needed;
    return os.str();
  }
  int iteration_;
  double before_, after_;
};

constexpr double kRelChangeFloor = 1e-30;
constexpr double kAdmmDescentSlack = 1e-8;

inline double objective(const CsProblem& prob, const Vector& x) {
  require(x.size() == prob.cols(), "objective: x has wrong length");
  return prob.lambda * eval_hp(x, prob.p) +
         0.5 * (prob.A * x - prob.b).squaredNorm();
}

inline double rel_change(const Vector& next, const Vector& prev) {
  return (next - prev).norm() / std::max(prev.norm(), kRelChangeFloor);
}

/// t_{k+1} = (sqrt(4 t_k^2 + 1) + 1) / 2.
inline double apg_next_t(double t) {
  return (std::sqrt(4.0 * t * t + 1.0) + 1.0) / 2.0;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ResolvedConfig {
  double gamma, alpha_x, alpha_y, norm;
  int max_iters;
};

inline ResolvedConfig resolve(const CsProblem& prob, const SolverConfig& cfg) {
  ResolvedConfig r;
  r.norm = cfg.spectral_norm > 0.0 ? cfg.spectral_norm : spectral_norm(prob.A);
  const double bound = 1.0 / (r.norm * r.norm);
  r.gamma = cfg.step_gamma > 0.0 ? cfg.step_gamma : 0.99 * bound;
  r.alpha_x = cfg.alpha_x > 0.0 ? cfg.alpha_x : r.gamma;
  r.alpha_y = cfg.alpha_y > 0.0 ? cfg.alpha_y : r.gamma;
  r.max_iters = cfg.max_iters > 0 ? cfg.max_iters
                                  : static_cast<int>(5 * prob.cols());
  auto ok = [&](double s) { return s > 0.0 && s < bound * (1.0 + 1e-12); };
  if (!ok(r.gamma) || !ok(r.alpha_x) || !ok(r.alpha_y))
    throw InvalidConfig("step size must lie in (0, 1/||A||_2^2)");
  if (!(cfg.rel_tol > 0.0)) throw InvalidConfig("rel_tol must be positive");
  return r;
}

inline void record(const CsProblem& prob, SolverTrace& tr, const Vector& next,
                   const Vector& prev, double f) {
  tr.objective.push_back(f);
  tr.rel_change.push_back(rel_change(next, prev));
  if (prob.ground_truth) {
    const double nt = prob.ground_truth->norm();
    tr.rel_error_to_truth.push_back((next - *prob.ground_truth).norm() /
                                    std::max(nt, kRelChangeFloor));
  }
  ++tr.iterations;
}

inline void check_finite(const Vector& x, double f, SolverTrace& tr,
                         const char* who) {
  if (!x.allFinite() || !std::isfinite(f))
    throw DivergedError(std::string(who) + ": non-finite iterate at iteration " +
                            std::to_string(tr.iterations),
                        tr);
}

inline Vector start_point(const CsProblem& prob,
                          const std::optional<Vector>& x0);

}  // namespace detail

struct SolveResult {
  Vector x;
  SolverTrace trace;
};

/// Monotone FISTA for mu ||x||_1 + 1/2 ||A x - b||^2, started at x0 (zero by
/// default). Stops like the nonconvex solvers.
inline SolveResult solve_l1(const Matrix& A, const Vector& b, double mu,
                            const SolverConfig& cfg,
                            const std::optional<Vector>& x0 = std::nullopt) {
  require(mu > 0.0, "solve_l1: mu must be positive");
  require(b.size() == A.rows(), "solve_l1: b has wrong length");
  const auto t0 = detail::Clock::now();
  CsProblem shape{A, b, 1.0, PenaltyOrder{2}, std::nullopt};
  const auto rc = detail::resolve(shape, cfg);
  const double g = rc.gamma;
  const Index n = A.cols();
  auto f = [&](const Vector& x, const Vector& ax) {
    return mu * x.lpNorm<1>() + 0.5 * (ax - b).squaredNorm();
  };

  SolveResult res;
  Vector x = x0 ? *x0 : Vector::Zero(n);
  require(x.size() == n, "solve_l1: x0 has wrong length");
  Vector ax = A * x;
  double fx = f(x, ax);
  res.trace.initial_objective = fx;
  Vector y = x, ay = ax, z(n), az(A.rows()), x_prev(n);
  double t = 1.0;
  while (res.trace.iterations < rc.max_iters) {
    z = soft_threshold(y - g * (A.transpose() * (ay - b)), g * mu);
    az.noalias() = A * z;
    const double fz = f(z, az);
    x_prev = x;
    const Vector ax_prev = ax;
    const bool accept = fz <= fx;
    if (accept) {
      x = z;
      ax = az;
      fx = fz;
    }
    const double t_next = apg_next_t(t);
    y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
    ay = ax + (t / t_next) * (az - ax) + ((t - 1.0) / t_next) * (ax - ax_prev);
    t = t_next;
    detail::record(shape, res.trace, x, x_prev, fx);
    detail::check_finite(x, fx, res.trace, "solve_l1");
    // A rejected step leaves x unchanged; that is not convergence.
    if (accept && res.trace.rel_change.back() < cfg.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.trace.wall_time = detail::seconds_since(t0);
  return res;
}

struct BasisPursuitResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
};

/// min ||x||_1 subject to A x = b, by ADMM on the split x = z with an exact
/// projection onto {A x = b} and residual balancing of the penalty. A needs
/// full row rank. Returns the sparse iterate z.
inline BasisPursuitResult solve_basis_pursuit(const Matrix& A, const Vector& b,
                                              double tol = 1e-10,
                                              int max_iters = 20000) {
  require(b.size() == A.rows(), "solve_basis_pursuit: b has wrong length");
  const Index n = A.cols();
  Eigen::LLT<Matrix> aat(A * A.transpose());
  if (aat.info() != Eigen::Success)
    throw NumericalError("solve_basis_pursuit: A A^T is singular");
  auto project = [&](const Vector& v) -> Vector {
    return v - A.transpose() * aat.solve(A * v - b);
  };
  BasisPursuitResult res;
  Vector x = project(Vector::Zero(n));
  Vector z = x, u = Vector::Zero(n), z_old(n);
  const double peak = x.lpNorm<Eigen::Infinity>();
  if (peak == 0.0) {
    res.x = std::move(x);
    res.converged = true;
    return res;
  }
  const double scale = x.norm();
  // Scaled dual u = y / rho; the penalty starts matched to the data size.
  double rho = 1.0 / peak;
  for (int it = 1; it <= max_iters; ++it) {
    x = project(z - u);
    z_old = z;
    const Vector w = x + u;
    z = w.array().sign() * (w.array().abs() - 1.0 / rho).max(0.0);
    u += x - z;
    res.iterations = it;
    const double r = (x - z).norm();
    const double d = rho * (z - z_old).norm();
    if (r <= tol * std::max({x.norm(), z.norm(), scale}) &&
        d <= tol * std::max(rho * u.norm(), 1e-300)) {
      res.converged = true;
      break;
    }
    if (it % 10 != 0) continue;
    if (r > 10.0 * d) {
      rho *= 2.0;
      u /= 2.0;
    } else if (d > 10.0 * r) {
      rho /= 2.0;
      u *= 2.0;
    }
  }
  res.x = std::move(z);
  return res;
}

struct BpdnResult {
  Vector x;
  double mu = 0.0;
  double residual = 0.0;
  int solves = 0;
};

/// Approximates min ||x||_1 subject to ||A x - b|| <= sigma by searching the
/// l1 least-squares path: bisection on log mu until the residual of the
/// solve_l1 solution lies in [0.99 sigma, sigma]. The returned point is the
/// last one with residual <= sigma.
inline BpdnResult solve_bpdn(const Matrix& A, const Vector& b, double sigma,
                             const SolverConfig& cfg, int max_solves = 40) {
  require(sigma >= 0.0, "solve_bpdn: sigma must be >= 0");
  BpdnResult out;
  if (b.norm() <= sigma) {
    out.x = Vector::Zero(A.cols());
    out.residual = b.norm();
    return out;
  }
  const double mu_max = (A.transpose() * b).lpNorm<Eigen::Infinity>();
  double hi = std::log(mu_max), lo = std::log(mu_max * 1e-8);
  std::optional<Vector> warm;
  bool have = false;
  for (int k = 0; k < max_solves; ++k) {
    const double mid = 0.5 * (lo + hi);
    SolveResult r = solve_l1(A, b, std::exp(mid), cfg, warm);
    ++out.solves;
    const double res = (A * r.x - b).norm();
    warm = r.x;
    if (res > sigma) {
      hi = mid;
      continue;
    }
    lo = mid;
    out.x = std::move(r.x);
    out.mu = std::exp(mid);
    out.residual = res;
    have = true;
    if (res >= 0.99 * sigma) break;
  }
  if (!have) throw NumericalError("solve_bpdn: no feasible point found");
  return out;
}

/// Default starting point: the l1 solution with mu = 1e-2 ||A^T b||_inf.
inline Vector default_initial_point(const CsProblem& prob,
                                    const SolverConfig& cfg = {}) {
  const double atb = (prob.A.transpose() * prob.b).lpNorm<Eigen::Infinity>();
  if (atb == 0.0) return Vector::Zero(prob.cols());
  SolverConfig c;
  c.rel_tol = cfg.rel_tol;
  c.spectral_norm = cfg.spectral_norm;
  c.max_iters = cfg.max_iters;
  return solve_l1(prob.A, prob.b, 1e-2 * atb, c).x;
}

namespace detail {
inline Vector start_point(const CsProblem& prob,
                          const std::optional<Vector>& x0) {
  if (x0) {
    require(x0->size() == prob.cols(), "initial point has wrong length");
    return *x0;
  }
  return default_initial_point(prob);
}
}  // namespace detail

/// H2-FBS: x^{k+1} = prox_{gamma lambda h_p}(x^k - gamma A^T (A x^k - b)).
inline SolveResult solve_fbs(const CsProblem& prob, const SolverConfig& cfg,
                             const std::optional<Vector>& x0 = std::nullopt) {
  prob.validate();
  const auto t0 = detail::Clock::now();
  const auto rc = detail::resolve(prob, cfg);
  const double tau = rc.gamma * prob.lambda;
  SolveResult res;
  Vector x = detail::start_point(prob, x0);
  Vector ax = prob.A * x;
  res.trace.initial_objective =
      prob.lambda * eval_hp(x, prob.p) + 0.5 * (ax - prob.b).squaredNorm();
  ProxWorkspace ws;
  Vector arg(prob.cols()), next(prob.cols());
  while (res.trace.iterations < rc.max_iters) {
    arg = x - rc.gamma * (prob.A.transpose() * (ax - prob.b));
    prox_hp_into(arg, tau, prob.p, next, ws);
    ax.noalias() = prob.A * next;
    const double f =
        prob.lambda * eval_hp(next, prob.p) + 0.5 * (ax - prob.b).squaredNorm();
    detail::record(prob, res.trace, next, x, f);
    x.swap(next);
    detail::check_finite(x, f, res.trace, "solve_fbs");
    if (res.trace.rel_change.back() < cfg.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.trace.wall_time = detail::seconds_since(t0);
  return res;
}

/// H2-APG: monotone accelerated proximal gradient. When the extrapolated
/// step z is worse than the plain step v, v is taken.
inline SolveResult solve_apg(const CsProblem& prob, const SolverConfig& cfg,
                             const std::optional<Vector>& x0 = std::nullopt) {
  prob.validate();
  const auto t0 = detail::Clock::now();
  const auto rc = detail::resolve(prob, cfg);
  const Matrix& A = prob.A;
  const Vector& b = prob.b;
  const Index n = prob.cols();
  auto F = [&](const Vector& v, const Vector& av) {
    return prob.lambda * eval_hp(v, prob.p) + 0.5 * (av - b).squaredNorm();
  };

  SolveResult res;
  Vector x = detail::start_point(prob, x0);
  Vector x_old = x, z = x;
  Vector ax = A * x, ax_old = ax, az = ax;
  res.trace.initial_objective = F(x, ax);
  double t = 1.0, t_old = 0.0;
  ProxWorkspace ws;
  Vector y(n), ay(A.rows()), arg(n), z_next(n), v_next(n), av(A.rows()),
      az_next(A.rows());
  while (res.trace.iterations < rc.max_iters) {
    const double c1 = t_old / t, c2 = (t_old - 1.0) / t;
    y = x + c1 * (z - x) + c2 * (x - x_old);
    ay = ax + c1 * (az - ax) + c2 * (ax - ax_old);

    arg = y - rc.alpha_y * (A.transpose() * (ay - b));
    prox_hp_into(arg, rc.alpha_y * prob.lambda, prob.p, z_next, ws);
    arg = x - rc.alpha_x * (A.transpose() * (ax - b));
    prox_hp_into(arg, rc.alpha_x * prob.lambda, prob.p, v_next, ws);
    const double t_next = apg_next_t(t);

    az_next.noalias() = A * z_next;
    av.noalias() = A * v_next;
    const double fz = F(z_next, az_next), fv = F(v_next, av);

    x_old.swap(x);
    ax_old.swap(ax);
    z.swap(z_next);
    az.swap(az_next);
    double f;
    if (fz <= fv) {
      x = z;
      ax = az;
      f = fz;
    } else {
      x = v_next;
      ax = av;
      f = fv;
    }
    t_old = t;
    t = t_next;
    detail::record(prob, res.trace, x, x_old, f);
    detail::check_finite(x, f, res.trace, "solve_apg");
    if (res.trace.rel_change.back() < cfg.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.trace.wall_time = detail::seconds_since(t0);
  return res;
}

/// Solves (I_n + A^T A / rho) y = w, either through the m x m Woodbury form
///   y = w - (1/rho) A^T (I_m + A A^T / rho)^{-1} A w
/// or through a direct n x n factorization.
class AdmmYSolver {
 public:
  enum class Kind { woodbury, direct };

  AdmmYSolver(const Matrix& A, double rho, Kind kind = Kind::woodbury)
      : a_(&A), rho_(rho), kind_(kind) {
    require(rho > 0.0, "ADMM rho must be positive");
    if (kind == Kind::woodbury) {
      Matrix m = (A * A.transpose()) / rho;
      m.diagonal().array() += 1.0;
      llt_.compute(m);
    } else {
      Matrix m = (A.transpose() * A) / rho;
      m.diagonal().array() += 1.0;
      llt_.compute(m);
    }
    if (llt_.info() != Eigen::Success)
      throw NumericalError("ADMM y-update: factorization failed");
  }

  Vector solve(const Vector& w) const {
    if (kind_ == Kind::direct) return llt_.solve(w);
    const Vector aw = *a_ * w;
    return w - (a_->transpose() * llt_.solve(aw)) / rho_;
  }

 private:
  const Matrix* a_;
  double rho_;
  Kind kind_;
  Eigen::LLT<Matrix> llt_;
};

/// L(x, y, z) = lambda h_p(x) + 1/2 ||A y - b||^2 + <z, x - y> + rho/2 ||x - y||^2.
inline double admm_lagrangian(const CsProblem& prob, double rho,
                              const Vector& x, const Vector& y,
                              const Vector& z) {
  const Vector d = x - y;
  return prob.lambda * eval_hp(x, prob.p) +
         0.5 * (prob.A * y - prob.b).squaredNorm() + z.dot(d) +
         0.5 * rho * d.squaredNorm();
}

/// H2-ADMM on the split x = y. Starts from y^0 = x^0 and
/// z^0 = A^T (A y^0 - b), the multiplier the y-step would produce.
inline SolveResult solve_admm(const CsProblem& prob, const SolverConfig& cfg,
                              const std::optional<Vector>& x0 = std::nullopt,
                              AdmmYSolver::Kind kind = AdmmYSolver::Kind::woodbury) {
  prob.validate();
  const auto t0 = detail::Clock::now();
  const double rho = cfg.rho;
  if (!(rho > 0.0)) throw InvalidConfig("ADMM rho must be positive");
  const int max_iters =
      cfg.max_iters > 0 ? cfg.max_iters : static_cast<int>(5 * prob.cols());
  const Matrix& A = prob.A;
  const AdmmYSolver ysolve(A, rho, kind);
  const Vector atb_rho = A.transpose() * prob.b / rho;

  double L = 0.0;
  bool check = false;
  if (cfg.assert_descent) {
    const double nrm = cfg.spectral_norm > 0.0 ? cfg.spectral_norm
                                               : spectral_norm(A);
    L = nrm * nrm;
    check = rho > std::sqrt(2.0) * L;
  }

  SolveResult res;
  Vector x = detail::start_point(prob, x0);
  Vector y = x;
  Vector z = A.transpose() * (A * y - prob.b);
  res.trace.initial_objective = objective(prob, x);
  double lag = admm_lagrangian(prob, rho, x, y, z);
  res.trace.lagrangian.push_back(lag);
  ProxWorkspace ws;
  Vector x_next(prob.cols()), y_next(prob.cols());
  const double tau = prob.lambda / rho;
  while (res.trace.iterations < max_iters) {
    prox_hp_into(y - z / rho, tau, prob.p, x_next, ws);
    y_next = ysolve.solve(atb_rho + z / rho + x_next);
    z += rho * (x_next - y_next);

    const double lag_next = admm_lagrangian(prob, rho, x_next, y_next, z);
    if (check) {
      const double need = (rho / 2.0 - L * L / rho) * (y - y_next).squaredNorm();
      if (lag_next > lag - need + kAdmmDescentSlack)
        throw DescentViolation(res.trace.iterations, lag, lag_next, need);
    }
    lag = lag_next;
    res.trace.lagrangian.push_back(lag);
    const double f = objective(prob, x_next);
    detail::record(prob, res.trace, x_next, x, f);
    x.swap(x_next);
    y.swap(y_next);
    detail::check_finite(x, f, res.trace, "solve_admm");
    if (res.trace.rel_change.back() < cfg.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.trace.wall_time = detail::seconds_since(t0);
  return res;
}

}  // namespace ratioprox
