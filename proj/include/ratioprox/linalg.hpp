#pragma once

#include "ratioprox/rng.hpp"
#include "ratioprox/types.hpp"

#include <cmath>
#include <concepts>
#include <functional>
#include <optional>

namespace ratioprox {

/// Abstract apply / adjoint pair: y = Op x and x = Op^T y.
template <class Op>
concept LinearOperator = requires(const Op& op, const Vector& in, Vector& out) {
  { op.rows() } -> std::convertible_to<Index>;
  { op.cols() } -> std::convertible_to<Index>;
  op.apply(in, out);
  op.adjoint(in, out);
};

class DenseOperator {
 public:
  explicit DenseOperator(const Matrix& a) : a_(&a) {}
  Index rows() const { return a_->rows(); }
  Index cols() const { return a_->cols(); }
  void apply(const Vector& x, Vector& y) const { y.noalias() = *a_ * x; }
  void adjoint(const Vector& y, Vector& x) const {
    x.noalias() = a_->transpose() * y;
  }

 private:
  const Matrix* a_;
};

struct PowerIterationResult {
  double norm = 0.0;  // estimate of ||Op||_2
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value by power iteration on Op^T Op, started from a fixed
/// pseudo-random vector. Stops when the relative change of the eigenvalue
/// estimate falls below `tol`.
template <LinearOperator Op>
PowerIterationResult power_norm(const Op& op, int max_iters = 100,
                                double tol = 1e-10) {
  Rng rng(0x9d2c5680u);
  Vector v(op.cols());
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  v.normalize();
  Vector av(op.rows()), w(op.cols());
  PowerIterationResult r;
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    op.apply(v, av);
    op.adjoint(av, w);
    const double eig = w.norm();
    r.iterations = it;
    if (eig == 0.0) {
      r.norm = 0.0;
      r.converged = true;
      return r;
    }
    v = w / eig;
    if (it > 1 && std::abs(eig - prev) <= tol * eig) {
      prev = eig;
      r.converged = true;
      break;
    }
    prev = eig;
  }
  r.norm = std::sqrt(prev);
  return r;
}

inline double spectral_norm(const Matrix& a, int max_iters = 100,
                            double tol = 1e-10) {
  return power_norm(DenseOperator(a), max_iters, tol).norm;
}

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

using ApplyFn = std::function<void(const Vector&, Vector&)>;

/// Conjugate gradient for a symmetric positive definite operator, warm-started
/// from `x`. Converged when ||rhs - M x|| <= tol ||rhs||. The optional
/// preconditioner applies an SPD approximation of M^{-1}.
inline CgResult conjugate_gradient(const ApplyFn& apply, const Vector& rhs,
                                   Vector& x, double tol, int max_iters,
                                   const ApplyFn* precond = nullptr) {
  CgResult res;
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) {
    x.setZero(rhs.size());
    res.converged = true;
    return res;
  }
  Vector ax(rhs.size());
  apply(x, ax);
  Vector r = rhs - ax;
  Vector z(rhs.size());
  if (precond)
    (*precond)(r, z);
  else
    z = r;
  Vector d = z;
  double rz = r.dot(z);
  Vector md(rhs.size());
  res.relative_residual = r.norm() / bnorm;
  while (res.relative_residual > tol && res.iterations < max_iters) {
    apply(d, md);
    const double curv = d.dot(md);
    if (!(curv > 0.0)) break;
    const double alpha = rz / curv;
    x.noalias() += alpha * d;
    r.noalias() -= alpha * md;
    ++res.iterations;
    // Recompute the true residual now and then to limit drift.
    if (res.iterations % 50 == 0) {
      apply(x, ax);
      r = rhs - ax;
    }
    res.relative_residual = r.norm() / bnorm;
    if (res.relative_residual <= tol) break;
    if (precond)
      (*precond)(r, z);
    else
      z = r;
    const double rz_new = r.dot(z);
    d = z + (rz_new / rz) * d;
    rz = rz_new;
  }
  // Report the true residual.
  apply(x, ax);
  res.relative_residual = (rhs - ax).norm() / bnorm;
  res.converged = res.relative_residual <= tol;
  return res;
}

}  // namespace ratioprox
