#include <catch_amalgamated.hpp>

#include "ratioprox/metrics.hpp"
#include "ratioprox/rng.hpp"
#include "ratioprox/sensing.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numeric>

using namespace ratioprox;
using Catch::Approx;

namespace {

Vector sample_truth() {
  Vector x = Vector::Zero(10);
  x[1] = 2.0;
  x[4] = -0.5;
  x[8] = 3.0;
  return x;
}

}  // namespace

TEST_CASE("relative_error", "[metrics]") {
  const Vector x = sample_truth();
  CHECK(relative_error(x, x) == 0.0);
  CHECK(relative_error(Vector::Zero(10), x) == 1.0);
  const double r = relative_error(1.005 * x, x);
  CHECK(r == Approx(0.005).epsilon(1e-12));
  CHECK_THROWS_AS(relative_error(x, Vector::Zero(10)), InvalidInput);
  CHECK(is_success(0.005));
  CHECK_FALSE(is_success(0.0050001));
}

TEST_CASE("support_metrics", "[metrics]") {
  const Vector x = sample_truth();
  auto c = support_metrics(x, x, 0.49);
  CHECK(c.missing == 0);
  CHECK(c.misidentified == 0);
  c = support_metrics(Vector::Zero(10), x, 0.0);
  CHECK(c.missing == 3);
  CHECK(c.misidentified == 0);

  Vector y = x;
  y[4] = 0.0;
  y[0] = 1.0;
  y[9] = 1e-6;
  c = support_metrics(y, x, default_detect_threshold(y));
  CHECK(c.missing == 1);
  CHECK(c.misidentified == 1);
  CHECK(default_detect_threshold(y) == Approx(3e-3));
}

TEST_CASE("metric invariants", "[metrics][property]") {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    Vector xt = Vector::Zero(30), xs(30);
    for (Index i = 0; i < 30; ++i) {
      if (rng.uniform() < 0.2) xt[i] = rng.normal();
      xs[i] = rng.uniform() < 0.3 ? rng.normal() : 0.0;
    }
    if (xt.norm() == 0.0) xt[0] = 1.0;
    const double thr = 0.1 * rng.uniform();
    const auto c = support_metrics(xs, xt, thr);
    Index s = 0, hit = 0;
    for (Index i = 0; i < 30; ++i) {
      if (xt[i] != 0.0) ++s;
      if (xt[i] != 0.0 && std::abs(xs[i]) > thr) ++hit;
    }
    CHECK(c.missing + hit == s);
    CHECK(c.misidentified <= 30 - s);

    // Signed permutation applied to both vectors.
    std::vector<Index> perm(30);
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 29; i > 0; --i)
      std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    Vector ps(30), pt(30);
    for (Index i = 0; i < 30; ++i) {
      const double sg = rng.uniform() < 0.5 ? -1.0 : 1.0;
      ps[i] = sg * xs[perm[i]];
      pt[i] = sg * xt[perm[i]];
    }
    const auto pc = support_metrics(ps, pt, thr);
    CHECK(pc.missing == c.missing);
    CHECK(pc.misidentified == c.misidentified);
    CHECK(relative_error(ps, pt) == Approx(relative_error(xs, xt)).epsilon(1e-14));
    CHECK(mse(ps, pt) == Approx(mse(xs, xt)).epsilon(1e-14));
  }
}

TEST_CASE("mse is the unsquared distance", "[metrics]") {
  const Vector x = sample_truth();
  CHECK(mse(x, x) == 0.0);
  Vector y = x;
  y[0] += 1.0;
  CHECK(mse(y, x) == 1.0);
}

TEST_CASE("oracle_mse", "[metrics][oracle]") {
  // Orthonormal columns: trace is s.
  Eigen::HouseholderQR<Matrix> qr(make_gaussian_matrix({12, 12, 0.0, 1, false}));
  const Matrix q = qr.householderQ();
  const std::vector<Index> supp{0, 3, 5, 7};
  CHECK(oracle_mse(q, supp, 0.1) == Approx(0.1 * 2.0).epsilon(1e-12));

  // Explicit inverse on a random 20x5 block.
  const Matrix A = make_gaussian_matrix({20, 9, 0.0, 2, false});
  const std::vector<Index> cols{0, 2, 4, 6, 8};
  Matrix ai(20, 5);
  for (Index k = 0; k < 5; ++k) ai.col(k) = A.col(cols[k]);
  const double tr = (ai.transpose() * ai).inverse().trace();
  CHECK(oracle_mse(A, cols, 0.1) == Approx(std::sqrt(0.01 * tr)).epsilon(1e-12));

  Matrix dup = A;
  dup.col(2) = dup.col(0);
  CHECK_THROWS_AS(oracle_mse(dup, {0, 2}, 0.1), NumericalError);
  CHECK(support_of(sample_truth()) == std::vector<Index>{1, 4, 8});
}

TEST_CASE("recovery_metrics bundles the pieces", "[metrics]") {
  const Vector x = sample_truth();
  const auto m = recovery_metrics(1.001 * x, x);
  CHECK(m.success);
  CHECK(m.missing == 0);
  CHECK(m.misidentified == 0);
  CHECK(m.mse == Approx(0.001 * x.norm()));
}
