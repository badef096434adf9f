#pragma once

// Square grayscale images as row-major vectors, the forward-difference
// operator B = [I (x) D; D (x) I], separable blur kernels, the h_p-of-gradient
// restoration model solved by ADMM, the isotropic TV baseline solved by PAPC,
// and PSNR / SSIM.

#include "ratioprox/linalg.hpp"
#include "ratioprox/prox.hpp"
#include "ratioprox/rng.hpp"
#include "ratioprox/solvers.hpp"
#include "ratioprox/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace ratioprox {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Pixel (i, j) lives at i * n + j.
struct ImageGrid {
  Index n = 0;
  Vector pixels;

  ImageGrid() = default;
  ImageGrid(Index side, Vector px) : n(side), pixels(std::move(px)) { validate(); }
  static ImageGrid constant(Index side, double v) {
    return ImageGrid(side, Vector::Constant(side * side, v));
  }

  Index size() const { return n * n; }
  double at(Index i, Index j) const { return pixels[i * n + j]; }
  double& at(Index i, Index j) { return pixels[i * n + j]; }

  void validate() const {
    require(n >= 1, "image side must be >= 1");
    require(pixels.size() == n * n, "image has " + std::to_string(pixels.size()) +
                                        " pixels, expected " + std::to_string(n * n));
    require(pixels.allFinite(), "image has non-finite pixels");
  }

  ImageGrid clamped() const {
    return ImageGrid(n, pixels.cwiseMax(0.0).cwiseMin(255.0));
  }
};

// ---------------------------------------------------------------------------
// Difference operator

/// B y stacks horizontal differences y(i,j) - y(i,j-1) and vertical
/// differences y(i,j) - y(i-1,j); the first column / row gets 0.
class DiffOperator {
 public:
  explicit DiffOperator(Index n) : n_(n) { require(n >= 1, "DiffOperator needs n >= 1"); }

  Index n() const { return n_; }
  Index rows() const { return 2 * n_ * n_; }
  Index cols() const { return n_ * n_; }

  void apply(const Vector& y, Vector& out) const {
    require(y.size() == cols(), "apply_diff: size mismatch");
    const Index n = n_, nn = n * n;
    out.resize(2 * nn);
    for (Index i = 0; i < n; ++i) {
      const Index r = i * n;
      out[r] = 0.0;
      for (Index j = 1; j < n; ++j) out[r + j] = y[r + j] - y[r + j - 1];
    }
    for (Index j = 0; j < n; ++j) out[nn + j] = 0.0;
    for (Index i = 1; i < n; ++i)
      for (Index j = 0; j < n; ++j) out[nn + i * n + j] = y[i * n + j] - y[(i - 1) * n + j];
  }

  void adjoint(const Vector& u, Vector& out) const {
    require(u.size() == rows(), "diff adjoint: size mismatch");
    const Index n = n_, nn = n * n;
    out.setZero(nn);
    for (Index i = 0; i < n; ++i) {
      const Index r = i * n;
      for (Index j = 1; j < n; ++j) {
        out[r + j] += u[r + j];
        out[r + j - 1] -= u[r + j];
      }
    }
    for (Index i = 1; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double v = u[nn + i * n + j];
        out[i * n + j] += v;
        out[(i - 1) * n + j] -= v;
      }
  }

  /// Exact largest eigenvalue of B B^T: 8 sin^2(pi (n-1) / (2n)) < 8.
  double lambda_max() const {
    const double s = std::sin(std::numbers::pi * double(n_ - 1) / (2.0 * double(n_)));
    return 8.0 * s * s;
  }

 private:
  Index n_;
};

inline Vector apply_diff(const DiffOperator& op, const ImageGrid& y) {
  require(y.n == op.n(), "apply_diff: image side does not match operator");
  Vector out;
  op.apply(y.pixels, out);
  return out;
}

inline Vector apply_diff_adjoint(const DiffOperator& op, const Vector& u) {
  Vector out;
  op.adjoint(u, out);
  return out;
}

inline double atv_norm(const ImageGrid& y) {
  return apply_diff(DiffOperator(y.n), y).lpNorm<1>();
}

/// Sum over pixels of the Euclidean norm of the gradient pair.
inline double itv_of_gradient(const Vector& g) {
  const Index half = g.size() / 2;
  double s = 0.0;
  for (Index i = 0; i < half; ++i) s += std::hypot(g[i], g[half + i]);
  return s;
}

inline double itv_norm(const ImageGrid& y) {
  return itv_of_gradient(apply_diff(DiffOperator(y.n), y));
}

/// phi(u) = sum_i h_p(u_i, u_{half+i}).
inline double phi_of_gradient(const Vector& g, PenaltyOrder p) {
  const Index half = g.size() / 2;
  double s = 0.0;
  Vector pair(2);
  for (Index i = 0; i < half; ++i) {
    pair << g[i], g[half + i];
    s += eval_hp(pair, p);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Blur

struct BlurKernel {
  enum class Kind { average, gaussian };
  Kind kind = Kind::average;
  Index hsize = 5;
  double sigma = 0.5;  // gaussian only

  static BlurKernel average(Index hsize) { return {Kind::average, hsize, 0.5}; }
  static BlurKernel gaussian(Index hsize, double sigma) {
    return {Kind::gaussian, hsize, sigma};
  }

  void validate() const {
    require(hsize >= 1 && hsize % 2 == 1,
            "blur hsize must be odd and positive, got " + std::to_string(hsize));
    if (kind == Kind::gaussian) require(sigma > 0.0, "gaussian blur needs sigma > 0");
  }

  /// 1-D factor; the 2-D kernel is its outer product with itself, which is
  /// the same normalized kernel as fspecial('average' | 'gaussian').
  Vector taps() const {
    validate();
    Vector t(hsize);
    const Index r = hsize / 2;
    for (Index k = 0; k < hsize; ++k) {
      const double x = double(k - r);
      t[k] = kind == Kind::average ? 1.0 : std::exp(-x * x / (2.0 * sigma * sigma));
    }
    return t / t.sum();
  }

  std::string describe() const {
    std::ostringstream os;
    os << (kind == Kind::average ? "average:" : "gaussian:") << hsize;
    if (kind == Kind::gaussian) os << ':' << sigma;
    return os.str();
  }
};

/// "average:5", "gaussian:13:1", "identity".
inline BlurKernel parse_blur(const std::string& spec) {
  if (spec == "identity" || spec == "none") return BlurKernel::average(1);
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
  auto to_index = [&](const std::string& s) {
    std::size_t pos = 0;
    long v = 0;
    try {
      v = std::stol(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty()) throw InvalidInput("bad blur size '" + s + "'");
    return Index(v);
  };
  BlurKernel k;
  if (parts.size() == 2 && parts[0] == "average") {
    k = BlurKernel::average(to_index(parts[1]));
  } else if (parts.size() == 3 && parts[0] == "gaussian") {
    double sigma = 0.0;
    try {
      sigma = std::stod(parts[2]);
    } catch (const std::exception&) {
      throw InvalidInput("bad gaussian sigma '" + parts[2] + "'");
    }
    k = BlurKernel::gaussian(to_index(parts[1]), sigma);
  } else {
    throw InvalidInput("blur must be average:H, gaussian:H:S or identity, got '" +
                       spec + "'");
  }
  k.validate();
  return k;
}

namespace detail {

// Half-sample symmetric extension: ... y1 y0 | y0 y1 ... y_{n-1} | y_{n-1} ...
inline Index reflect(Index k, Index n) {
  while (k < 0 || k >= n) k = k < 0 ? -k - 1 : 2 * n - 1 - k;
  return k;
}

// out[k] = sum_t taps[t] in[reflect(k + t - r)] along a strided line.
inline void correlate_line(const double* in, double* out, Index n, Index stride,
                           const Vector& taps) {
  const Index r = taps.size() / 2;
  for (Index k = 0; k < n; ++k) {
    double s = 0.0;
    for (Index t = 0; t < taps.size(); ++t) s += taps[t] * in[reflect(k + t - r, n) * stride];
    out[k * stride] = s;
  }
}

inline void correlate_line_adjoint(const double* in, double* out, Index n,
                                   Index stride, const Vector& taps) {
  const Index r = taps.size() / 2;
  for (Index k = 0; k < n; ++k) out[k * stride] = 0.0;
  for (Index k = 0; k < n; ++k) {
    const double v = in[k * stride];
    for (Index t = 0; t < taps.size(); ++t) out[reflect(k + t - r, n) * stride] += taps[t] * v;
  }
}

}  // namespace detail

/// 2-D correlation with the separable kernel under half-sample symmetric
/// boundaries, with an explicit adjoint.
class BlurOperator {
 public:
  BlurOperator(const BlurKernel& k, Index n) : kernel_(k), taps_(k.taps()), n_(n) {
    require(n >= 1, "BlurOperator needs n >= 1");
    require(k.hsize / 2 < n, "blur kernel wider than the image");
  }

  Index n() const { return n_; }
  Index rows() const { return n_ * n_; }
  Index cols() const { return n_ * n_; }
  const BlurKernel& kernel() const { return kernel_; }
  const Vector& taps() const { return taps_; }

  void apply(const Vector& y, Vector& out) const { run(y, out, false); }
  void adjoint(const Vector& y, Vector& out) const { run(y, out, true); }

 private:
  void run(const Vector& y, Vector& out, bool adj) const {
    require(y.size() == cols(), "apply_blur: size mismatch");
    const Index n = n_;
    tmp_.resize(n * n);
    out.resize(n * n);
    auto pass = adj ? detail::correlate_line_adjoint : detail::correlate_line;
    for (Index i = 0; i < n; ++i) pass(y.data() + i * n, tmp_.data() + i * n, n, 1, taps_);
    for (Index j = 0; j < n; ++j) pass(tmp_.data() + j, out.data() + j, n, n, taps_);
  }

  BlurKernel kernel_;
  Vector taps_;
  Index n_;
  mutable Vector tmp_;
};

inline ImageGrid apply_blur(const BlurKernel& k, const ImageGrid& y) {
  BlurOperator op(k, y.n);
  Vector out;
  op.apply(y.pixels, out);
  return ImageGrid(y.n, std::move(out));
}

inline ImageGrid apply_blur_adjoint(const BlurKernel& k, const ImageGrid& y) {
  BlurOperator op(k, y.n);
  Vector out;
  op.adjoint(y.pixels, out);
  return ImageGrid(y.n, std::move(out));
}

inline double blur_operator_norm(const BlurKernel& k, Index n) {
  return power_norm(BlurOperator(k, n), 500, 1e-13).norm;
}

// ---------------------------------------------------------------------------
// DCT-II diagonalization of A^T A + rho B^T B

/// Orthonormal DCT-II matrix C(k, j) = s_k cos(pi k (2j + 1) / (2n)).
inline Matrix dct2_matrix(Index n) {
  Matrix c(n, n);
  for (Index k = 0; k < n; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / double(n)) : std::sqrt(2.0 / double(n));
    for (Index j = 0; j < n; ++j)
      c(k, j) = s * std::cos(std::numbers::pi * double(k) * double(2 * j + 1) / (2.0 * double(n)));
  }
  return c;
}

/// Diagonal of A^T A + rho B^T B in the 2-D DCT-II basis. Exact for symmetric
/// kernels under the half-sample boundary, and used as a CG preconditioner.
class DctPreconditioner {
 public:
  DctPreconditioner(const BlurOperator& blur, double rho) : c_(dct2_matrix(blur.n())) {
    const Index n = blur.n();
    Matrix k1(n, n);
    Vector e = Vector::Zero(n), col(n);
    for (Index j = 0; j < n; ++j) {
      e.setZero();
      e[j] = 1.0;
      detail::correlate_line(e.data(), col.data(), n, 1, blur.taps());
      k1.col(j) = col;
    }
    const Vector a = (c_ * k1 * c_.transpose()).diagonal();
    Vector d(n);
    for (Index k = 0; k < n; ++k) {
      const double s = std::sin(std::numbers::pi * double(k) / (2.0 * double(n)));
      d[k] = 4.0 * s * s;
    }
    inv_.resize(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double v = a[i] * a[i] * a[j] * a[j] + rho * (d[i] + d[j]);
        inv_(i, j) = v > 0.0 ? 1.0 / v : 0.0;
      }
  }

  void apply(const Vector& r, Vector& z) const {
    const Index n = c_.rows();
    Eigen::Map<const RowMatrix> R(r.data(), n, n);
    RowMatrix sp = c_ * R * c_.transpose();
    sp.array() *= inv_.array();
    z.resize(n * n);
    Eigen::Map<RowMatrix>(z.data(), n, n) = c_.transpose() * sp * c_;
  }

 private:
  Matrix c_;
  RowMatrix inv_;
};

// ---------------------------------------------------------------------------
// Quality metrics

/// 10 log10(255^2 N / ||u - ref||^2); +infinity when the images agree.
inline double psnr(const ImageGrid& u, const ImageGrid& ref) {
  require(u.n == ref.n, "psnr: size mismatch");
  const double err = (u.pixels - ref.pixels).squaredNorm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 * double(u.size()) / err);
}

/// Single-window SSIM over the whole image.
inline double ssim(const ImageGrid& u, const ImageGrid& ref) {
  require(u.n == ref.n, "ssim: size mismatch");
  if (u.pixels == ref.pixels) return 1.0;
  const double N = double(u.size());
  const double mu = u.pixels.mean(), mr = ref.pixels.mean();
  const Eigen::ArrayXd du = u.pixels.array() - mu, dr = ref.pixels.array() - mr;
  const double vu = du.square().sum() / N, vr = dr.square().sum() / N;
  const double cov = (du * dr).sum() / N;
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0), c2 = (0.03 * 255.0) * (0.03 * 255.0);
  return ((2.0 * mu * mr + c1) * (2.0 * cov + c2)) /
         ((mu * mu + mr * mr + c1) * (vu + vr + c2));
}

struct QualityReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double wall_time = 0.0;
  int iterations = 0;
};

// ---------------------------------------------------------------------------
// Restoration

struct RestorationConfig {
  double lambda = 2e-2;
  double rho0 = 1e-8;
  double growth_sigma = 1.1;
  PenaltyOrder p{2};
  int max_iters = 2000;
  double rel_tol = 5e-7;
  double cg_tol = 1e-10;
  int cg_max_iters = 500;
  double psnr_drop_db = 3.0;

  void validate() const {
    if (!(lambda > 0.0)) throw InvalidConfig("lambda must be > 0");
    if (!(rho0 > 0.0)) throw InvalidConfig("rho0 must be > 0");
    if (!(growth_sigma > 1.0)) throw InvalidConfig("growth_sigma must be > 1");
    if (max_iters < 1) throw InvalidConfig("max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw InvalidConfig("rel_tol must be > 0");
    if (!(cg_tol > 0.0)) throw InvalidConfig("cg_tol must be > 0");
    if (cg_max_iters < 1) throw InvalidConfig("cg_max_iters must be >= 1");
  }
};

struct PapcConfig {
  double lambda = 1e-2;
  double dual_step = 0.125;  // <= 1 / lambda_max(B B^T)
  double gamma = 0.0;        // 0: 1.9 beta
  int max_iters = 2000;
  double rel_tol = 5e-7;
  double psnr_drop_db = 3.0;
};

struct RestoreResult {
  ImageGrid image;  // unclamped iterate
  SolverTrace trace;
  std::vector<double> psnr;                 // clamped iterate vs truth
  std::vector<double> constraint_residual;  // ADMM: ||x^k - B y^k||, k >= 1
  std::vector<int> cg_iterations;
  int best_iteration = 0;
  bool psnr_dropout = false;
};

inline QualityReport quality(const RestoreResult& r, const ImageGrid& truth) {
  const ImageGrid out = r.image.clamped();
  return {psnr(out, truth), ssim(out, truth), r.trace.wall_time, r.trace.iterations};
}

namespace detail {

// Tracks PSNR against ground truth and keeps the best iterate. Returns true
// when the PSNR fell more than drop_db below its running maximum.
struct PsnrWatch {
  const ImageGrid* truth = nullptr;
  double drop_db = 3.0;
  double best = -std::numeric_limits<double>::infinity();
  Vector best_y;
  int best_iter = 0;

  bool update(const Vector& y, int k, RestoreResult& res) {
    if (!truth) return false;
    const double v = psnr(ImageGrid(truth->n, y).clamped(), *truth);
    res.psnr.push_back(v);
    if (v > best) {
      best = v;
      best_y = y;
      best_iter = k;
    }
    return v < best - drop_db;
  }
};

}  // namespace detail

/// ADMM for lambda phi(x) + 1/2 ||A y - b||^2 subject to x = B y, with
/// rho_{k+1} = sigma rho_k. Starts from y = b, x = B b, z = 0. The y-update
/// runs preconditioned CG on A^T A + rho B^T B warm-started at the previous y.
inline RestoreResult restore_h2_admm(const ImageGrid& b, const BlurKernel& kernel,
                                     const RestorationConfig& cfg,
                                     const ImageGrid* truth = nullptr) {
  cfg.validate();
  b.validate();
  if (truth) require(truth->n == b.n, "truth image size mismatch");
  const auto t0 = detail::Clock::now();
  const Index n = b.n, nn = n * n;
  const BlurOperator A(kernel, n);
  const DiffOperator B(n);

  RestoreResult res;
  Vector y = b.pixels, by, x, z = Vector::Zero(2 * nn);
  B.apply(y, by);
  x = by;
  Vector atb;
  A.adjoint(b.pixels, atb);

  Vector tmp(nn), tmp2(nn), g(2 * nn), ay(nn);
  auto fidelity = [&](const Vector& v) {
    A.apply(v, ay);
    return 0.5 * (ay - b.pixels).squaredNorm();
  };
  auto model = [&](const Vector& v, const Vector& bv) {
    return fidelity(v) + cfg.lambda * phi_of_gradient(bv, cfg.p);
  };
  res.trace.initial_objective = model(y, by);
  detail::PsnrWatch watch;
  watch.truth = truth;
  watch.drop_db = cfg.psnr_drop_db;

  double rho = cfg.rho0;
  Vector rhs(nn), ynew;
  while (res.trace.iterations < cfg.max_iters) {
    x = prox_group_phi(by - z / rho, cfg.lambda / rho, cfg.p);

    g = rho * x + z;
    B.adjoint(g, rhs);
    rhs += atb;
    const ApplyFn normal = [&](const Vector& v, Vector& out) {
      A.apply(v, tmp);
      A.adjoint(tmp, out);
      B.apply(v, g);
      B.adjoint(g, tmp2);
      out += rho * tmp2;
    };
    const DctPreconditioner pre(A, rho);
    const ApplyFn precond = [&pre](const Vector& r, Vector& out) { pre.apply(r, out); };
    ynew = y;
    const CgResult cg =
        conjugate_gradient(normal, rhs, ynew, cfg.cg_tol, cfg.cg_max_iters, &precond);
    if (!cg.converged) {
      std::ostringstream os;
      os << "h2-ADMM: CG did not converge at iteration " << res.trace.iterations + 1
         << ", relative residual " << cg.relative_residual;
      throw NumericalError(os.str());
    }
    res.cg_iterations.push_back(cg.iterations);

    B.apply(ynew, by);
    z += rho * (x - by);
    rho *= cfg.growth_sigma;

    const double change = rel_change(ynew, y);
    y.swap(ynew);
    ++res.trace.iterations;
    res.trace.rel_change.push_back(change);
    res.trace.objective.push_back(model(y, by));
    res.constraint_residual.push_back((x - by).norm());
    if (truth) res.trace.rel_error_to_truth.push_back((y - truth->pixels).norm() / truth->pixels.norm());
    if (!y.allFinite()) throw NumericalError("h2-ADMM: non-finite iterate");

    if (watch.update(y, res.trace.iterations, res)) {
      res.psnr_dropout = true;
      break;
    }
    if (change <= cfg.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  if (res.psnr_dropout) {
    y = watch.best_y;
  }
  res.best_iteration = truth ? watch.best_iter : res.trace.iterations;
  res.image = ImageGrid(n, std::move(y));
  res.trace.wall_time = detail::seconds_since(t0);
  return res;
}

/// Isotropic TV model 1/2 ||A y - b||^2 + lambda ITV(y).
inline double itv_model_objective(const ImageGrid& y, const ImageGrid& b,
                                  const BlurKernel& kernel, double lambda) {
  return 0.5 * (apply_blur(kernel, y).pixels - b.pixels).squaredNorm() + lambda * itv_norm(y);
}

/// PAPC on ITV(y) + (1 / (2 lambda)) ||A y - b||^2. Starts from y = b (or
/// `init`) and a zero dual variable.
inline RestoreResult restore_tv_papc(const ImageGrid& b, const BlurKernel& kernel,
                                     const PapcConfig& cfg,
                                     const ImageGrid* truth = nullptr,
                                     const ImageGrid* init = nullptr) {
  b.validate();
  if (!(cfg.lambda > 0.0)) throw InvalidConfig("TV-PAPC: lambda must be > 0");
  if (cfg.max_iters < 1) throw InvalidConfig("TV-PAPC: max_iters must be >= 1");
  if (!(cfg.rel_tol > 0.0)) throw InvalidConfig("TV-PAPC: rel_tol must be > 0");
  if (truth) require(truth->n == b.n, "truth image size mismatch");
  const auto t0 = detail::Clock::now();
  const Index n = b.n, nn = n * n;
  const BlurOperator A(kernel, n);
  const DiffOperator B(n);

  const double lmax = B.lambda_max();
  if (!(cfg.dual_step > 0.0) || cfg.dual_step * lmax > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "TV-PAPC: dual_step must lie in (0, " << 1.0 / lmax << "], got " << cfg.dual_step;
    throw InvalidConfig(os.str());
  }
  const double anorm = blur_operator_norm(kernel, n);
  const double beta = cfg.lambda / (anorm * anorm);
  const double gamma = cfg.gamma == 0.0 ? 1.9 * beta : cfg.gamma;
  if (!(gamma > 0.0 && gamma < 2.0 * beta)) {
    std::ostringstream os;
    os << "TV-PAPC: gamma must lie in (0, " << 2.0 * beta << "), got " << gamma;
    throw InvalidConfig(os.str());
  }
  const double tau = cfg.dual_step;

  RestoreResult res;
  auto model = [&](const Vector& v) {
    return itv_model_objective(ImageGrid(n, v), b, kernel, cfg.lambda);
  };
  if (init) require(init->n == b.n, "initial image size mismatch");
  Vector y = init ? init->pixels : b.pixels, x = Vector::Zero(2 * nn);
  res.trace.initial_objective = model(y);
  detail::PsnrWatch watch;
  watch.truth = truth;
  watch.drop_db = cfg.psnr_drop_db;

  Vector ay(nn), grad(nn), yh(nn), byh(2 * nn), btx(nn), bbtx(2 * nn), v(2 * nn), ynew(nn);
  while (res.trace.iterations < cfg.max_iters) {
    A.apply(y, ay);
    ay -= b.pixels;
    A.adjoint(ay, grad);
    yh = y - (gamma / cfg.lambda) * grad;

    B.apply(yh, byh);
    B.adjoint(x, btx);
    B.apply(btx, bbtx);
    v = byh + x - tau * bbtx;
    x = v - group_shrink_itv(v, gamma / tau);

    B.adjoint(x, btx);
    ynew = yh - tau * btx;

    const double change = rel_change(ynew, y);
    y.swap(ynew);
    ++res.trace.iterations;
    res.trace.rel_change.push_back(change);
    res.trace.objective.push_back(model(y));
    if (truth) res.trace.rel_error_to_truth.push_back((y - truth->pixels).norm() / truth->pixels.norm());
    if (!y.allFinite()) throw NumericalError("TV-PAPC: non-finite iterate");

    if (watch.update(y, res.trace.iterations, res)) {
      res.psnr_dropout = true;
      break;
    }
    if (change <= cfg.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  if (res.psnr_dropout) y = watch.best_y;
  res.best_iteration = truth ? watch.best_iter : res.trace.iterations;
  res.image = ImageGrid(n, std::move(y));
  res.trace.wall_time = detail::seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Test images and I/O

inline ImageGrid add_gaussian_noise(const ImageGrid& img, double stddev, Rng& rng) {
  require(stddev >= 0.0, "noise stddev must be >= 0");
  ImageGrid out = img;
  if (stddev == 0.0) return out;
  for (Index k = 0; k < out.size(); ++k) out.pixels[k] += stddev * rng.normal();
  return out;
}

/// Deterministic textured image: oriented stripes of several periods, a
/// checkerboard, a smooth ramp, rings and a flat disk. Values in [0, 255].
inline ImageGrid make_texture_image(Index n = 128) {
  require(n >= 8, "texture image needs n >= 8");
  ImageGrid img = ImageGrid::constant(n, 0.0);
  const double h = double(n) / 2.0, pi = std::numbers::pi;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double u = double(i), w = double(j);
      double v;
      if (i < n / 2 && j < n / 2) {
        v = 128.0 + 90.0 * std::sin(2.0 * pi * (u + 0.6 * w) / 6.0);
      } else if (i < n / 2) {
        const bool dark = ((i / 8) + (j / 8)) % 2 == 0;
        v = (dark ? 60.0 : 190.0) + 40.0 * std::sin(2.0 * pi * (w - u) / 9.0);
      } else if (j < n / 2) {
        v = 40.0 + 150.0 * (u - h) / h + 30.0 * std::cos(2.0 * pi * w / 11.0);
      } else {
        const double r = std::hypot(u - 1.5 * h, w - 1.5 * h);
        v = 128.0 + 100.0 * std::cos(2.0 * pi * r / 7.5);
      }
      const double dr = std::hypot(u - 0.55 * double(n), w - 0.5 * double(n));
      if (dr < double(n) / 10.0) v = 225.0;
      img.at(i, j) = std::round(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

inline ImageGrid read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  auto token = [&]() {
    std::string t;
    for (;;) {
      const int c = in.get();
      if (c == EOF) break;
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        if (!t.empty()) break;
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(char(c));
    }
    return t;
  };
  if (token() != "P5") throw InvalidInput("'" + path + "' is not a binary PGM (P5)");
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(token());
    h = std::stol(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw InvalidInput("'" + path + "': malformed PGM header");
  }
  if (maxval != 255) throw InvalidInput("'" + path + "': only maxval 255 is supported");
  if (w != h || w < 1) throw InvalidInput("'" + path + "': image must be square");
  std::vector<unsigned char> buf(std::size_t(w * h));
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (in.gcount() != std::streamsize(buf.size()))
    throw InvalidInput("'" + path + "': truncated pixel data");
  Vector px(w * h);
  for (Index k = 0; k < px.size(); ++k) px[k] = double(buf[std::size_t(k)]);
  return ImageGrid(Index(w), std::move(px));
}

/// Clamps to [0, 255] and rounds to 8 bits.
inline void write_pgm(const std::string& path, const ImageGrid& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << "P5\n" << img.n << ' ' << img.n << "\n255\n";
  std::vector<unsigned char> buf(std::size_t(img.size()));
  for (Index k = 0; k < img.size(); ++k)
    buf[std::size_t(k)] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[k], 0.0, 255.0)));
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!out) throw InvalidInput("write to '" + path + "' failed");
}

}  // namespace ratioprox
