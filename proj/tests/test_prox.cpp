#include <catch_amalgamated.hpp>

#include "ratioprox/prox.hpp"
#include "ratioprox/prox_oracle.hpp"
#include "ratioprox/rng.hpp"

#include <cmath>
#include <numeric>
#include <vector>

using namespace ratioprox;
using Catch::Approx;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Index>(v.size()));
  Index i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

Vector random_vector(Rng& rng, Index n, double scale = 1.0) {
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = scale * (2.0 * rng.uniform() - 1.0);
  return x;
}

}  // namespace

TEST_CASE("eval_hp closed-form values", "[prox][hp]") {
  CHECK(eval_hp(vec({3, 4}), PenaltyOrder{2}) == Approx(1.96).epsilon(1e-15));
  CHECK(eval_hp(Vector::Zero(5), PenaltyOrder{1}) == 0.0);
  CHECK(eval_hp(Vector::Zero(1), PenaltyOrder{2}) == 0.0);
  CHECK(eval_hp(vec({1, 1, 1, 1}), PenaltyOrder{1}) == 2.0);
}

TEST_CASE("PenaltyOrder rejects exponents other than 1 and 2", "[prox]") {
  CHECK_THROWS_AS(PenaltyOrder{3}, std::invalid_argument);
  CHECK_THROWS_AS(PenaltyOrder{0}, std::invalid_argument);
}

TEST_CASE("h_p is scale invariant and bounded", "[prox][hp][property]") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(40));
    const Vector x = random_vector(rng, n, 5.0);
    if (x.norm() == 0.0) continue;
    for (int p : {1, 2}) {
      const PenaltyOrder order{p};
      const double h = eval_hp(x, order);
      // Power-of-two scalings are exact in binary floating point.
      CHECK(eval_hp(0.5 * x, order) == h);
      CHECK(eval_hp(2.0 * x, order) == h);
      CHECK(eval_hp(10.0 * x, order) == Approx(h).epsilon(1e-15));
      const double upper = p == 2 ? static_cast<double>(n) : std::sqrt(double(n));
      CHECK(h >= 1.0 - 1e-15);
      CHECK(h <= upper * (1.0 + 1e-15));
    }
  }
}

TEST_CASE("prox of a scalar keeps it once the penalty is cheaper", "[prox]") {
  // Two branches for n = 1: u = 0 costs x^2/(2 lambda), u = x costs 1.
  const auto r = prox_hp(vec({3.0}), 1.0, PenaltyOrder{2});
  CHECK(r.minimizer[0] == Approx(3.0));
  CHECK(r.objective_value == Approx(1.0));
  CHECK(r.support_size == 1);

  const double lambda = 0.5;
  const double x = std::sqrt(2.0 * lambda) - 1e-6;
  const auto z = prox_hp(vec({x}), lambda, PenaltyOrder{2});
  CHECK(z.minimizer[0] == 0.0);
  CHECK(z.support_size == 0);
  CHECK(z.objective_value == Approx(x * x / (2 * lambda)));
}

TEST_CASE("prox of zero is zero", "[prox]") {
  for (int p : {1, 2}) {
    const auto r = prox_hp(Vector::Zero(6), 0.3, PenaltyOrder{p});
    CHECK(r.minimizer.isZero(0.0));
    CHECK(r.objective_value == 0.0);
    CHECK(r.support_size == 0);
  }
}

TEST_CASE("prox rejects bad arguments", "[prox]") {
  Vector x = vec({1.0, std::nan("")});
  CHECK_THROWS_AS(prox_hp(x, 1.0, PenaltyOrder{2}), InvalidInput);
  CHECK_THROWS_AS(prox_hp(vec({1.0}), 0.0, PenaltyOrder{2}), InvalidInput);
  CHECK_THROWS_AS(prox_hp(vec({1.0}), -1.0, PenaltyOrder{1}), InvalidInput);
}

TEST_CASE("scalar threshold law for p = 2", "[prox][property]") {
  Rng rng(5);
  for (double lambda : {0.01, 0.5, 2.0}) {
    const double thr = std::sqrt(2.0 * lambda);
    for (int i = 0; i < 300; ++i) {
      const double x = (2.0 * rng.uniform() - 1.0) * 3.0 * thr;
      const auto r = prox_hp(vec({x}), lambda, PenaltyOrder{2});
      if (std::abs(x) <= thr)
        CHECK(r.minimizer[0] == 0.0);
      else
        CHECK(r.minimizer[0] == x);
    }
  }
  // At equality both branches cost lambda; the smaller support wins.
  const auto tie = prox_hp(vec({2.0}), 2.0, PenaltyOrder{2});
  CHECK(tie.minimizer[0] == 0.0);
  for (double lambda : {1e-4, 0.37, 5.0})
    for (PenaltyOrder p : {PenaltyOrder{1}, PenaltyOrder{2}}) {
      const double thr = std::sqrt(2.0 * lambda), above = std::nextafter(thr, 10.0);
      CHECK(prox_hp(vec({thr}), lambda, p).minimizer[0] == 0.0);
      CHECK(prox_hp(vec({-above}), lambda, p).minimizer[0] == -above);
    }
}

TEST_CASE("ProxResult fields are consistent", "[prox][property]") {
  Rng rng(17);
  ProxWorkspace ws;
  for (int trial = 0; trial < 300; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(30));
    const Vector x = random_vector(rng, n, 1.0 + 9.0 * rng.uniform());
    const double lambda = std::pow(10.0, -3.0 + 4.0 * rng.uniform());
    for (int p : {1, 2}) {
      const PenaltyOrder order{p};
      const auto r = prox_hp(x, lambda, order);
      const double g = prox_objective(x, r.minimizer, lambda, order);
      CHECK(r.objective_value == Approx(g).epsilon(1e-12));
      CHECK(r.support_size == (r.minimizer.array() != 0.0).count());
      // Never worse than the trivial candidates.
      const double tol = 1e-12 * (1.0 + std::abs(g));
      CHECK(g <= prox_objective(x, Vector::Zero(n), lambda, order) + tol);
      CHECK(g <= prox_objective(x, x, lambda, order) + tol);
      // Sign consistency with the input.
      for (Index i = 0; i < n; ++i) CHECK(r.minimizer[i] * x[i] >= 0.0);
      Vector fast;
      prox_hp_into(x, lambda, order, fast, ws);
      CHECK(fast == r.minimizer);
    }
  }
}

TEST_CASE("prox is signed-permutation equivariant", "[prox][property]") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(20));
    const Vector x = random_vector(rng, n, 4.0);
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    Vector sign(n);
    for (Index i = 0; i < n; ++i) sign[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Vector px(n);
    for (Index i = 0; i < n; ++i) px[i] = sign[i] * x[perm[i]];
    const double lambda = std::pow(10.0, -2.0 + 2.0 * rng.uniform());
    for (int p : {1, 2}) {
      const Vector u = prox_hp(x, lambda, PenaltyOrder{p}).minimizer;
      const Vector pu = prox_hp(px, lambda, PenaltyOrder{p}).minimizer;
      for (Index i = 0; i < n; ++i)
        CHECK(std::abs(pu[i] - sign[i] * u[perm[i]]) <= 1e-10);
    }
  }
}

TEST_CASE("prox matches the brute-force oracle in low dimension",
          "[prox][oracle][property]") {
  Rng rng(31);
  for (Index n : {1, 2, 3}) {
    for (double lambda : {0.01, 0.1, 1.0}) {
      for (int p : {1, 2}) {
        const int samples = n == 3 ? 6 : 25;
        for (int s = 0; s < samples; ++s) {
          const Vector x = random_vector(rng, n);
          const auto r = prox_hp(x, lambda, PenaltyOrder{p});
          const auto ref = oracle::minimize(x, lambda, p);
          INFO("n=" << n << " lambda=" << lambda << " p=" << p << " x=" << x.transpose());
          CHECK(r.objective_value <= ref.grid_value + 1e-4);
          CHECK(r.objective_value <= ref.refined_value + 1e-8);
        }
      }
    }
  }
}

TEST_CASE("prox is a local minimum in higher dimension", "[prox][property]") {
  // No coordinate perturbation of the returned point may lower G.
  Rng rng(37);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 4 + static_cast<Index>(rng.below(8));
    const Vector x = random_vector(rng, n, 2.0);
    const double lambda = std::pow(10.0, -2.0 + 2.0 * rng.uniform());
    for (int p : {1, 2}) {
      const auto r = prox_hp(x, lambda, PenaltyOrder{p});
      const Vector polished = oracle::refine(x, r.minimizer, lambda, p, 0.05);
      CHECK(r.objective_value <=
            oracle::objective(x, polished, lambda, p) + 1e-10);
    }
  }
}

TEST_CASE("prox_group_phi acts pairwise", "[prox][phi]") {
  CHECK(prox_group_phi(Vector::Zero(8), 0.7, PenaltyOrder{2}).isZero(0.0));

  const Vector u = prox_group_phi(vec({3.0, 4.0}), 1e-12, PenaltyOrder{2});
  CHECK(u[0] == Approx(3.0).epsilon(1e-9));
  CHECK(u[1] == Approx(4.0).epsilon(1e-9));

  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const Index half = 1 + static_cast<Index>(rng.below(6));
    const Vector v = random_vector(rng, 2 * half, 3.0);
    const double lambda = 0.05 + rng.uniform();
    for (int p : {1, 2}) {
      const Vector out = prox_group_phi(v, lambda, PenaltyOrder{p});
      for (Index i = 0; i < half; ++i) {
        const auto single =
            prox_hp(vec({v[i], v[half + i]}), lambda, PenaltyOrder{p}).minimizer;
        CHECK(out[i] == Approx(single[0]).margin(1e-14));
        CHECK(out[half + i] == Approx(single[1]).margin(1e-14));
      }
    }
  }
  CHECK_THROWS_AS(prox_group_phi(Vector::Zero(3), 1.0, PenaltyOrder{2}),
                  InvalidInput);
}

TEST_CASE("soft_threshold", "[prox][l1]") {
  const Vector r = soft_threshold(vec({2.0, -0.5}), 1.0);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 0.0);
  CHECK(soft_threshold(Vector::Zero(4), 0.3).isZero(0.0));
  CHECK_THROWS_AS(soft_threshold(vec({1.0}), 0.0), InvalidInput);

  // Grid oracle for tau |u| + (u - x)^2 / 2 on scalars.
  Rng rng(43);
  for (int i = 0; i < 100; ++i) {
    const double x = 4.0 * rng.uniform() - 2.0;
    const double tau = 0.05 + rng.uniform();
    double best = 1e300, arg = 0.0;
    for (int j = -40000; j <= 40000; ++j) {
      const double u = j * 1e-4;
      const double v = tau * std::abs(u) + 0.5 * (u - x) * (u - x);
      if (v < best) best = v, arg = u;
    }
    CHECK(soft_threshold(vec({x}), tau)[0] == Approx(arg).margin(2e-4));
  }
}

TEST_CASE("group_shrink_itv", "[prox][itv]") {
  const Vector a = group_shrink_itv(vec({3.0, 4.0}), 5.0);
  CHECK(a.isZero(0.0));
  const Vector b = group_shrink_itv(vec({6.0, 8.0}), 5.0);
  CHECK(b[0] == Approx(3.0));
  CHECK(b[1] == Approx(4.0));
  CHECK(group_shrink_itv(Vector::Zero(2), 1.0).isZero(0.0));

  // Grid oracle for tau ||u||_2 + ||u - v||^2 / 2 on 2-vectors.
  Rng rng(47);
  for (int i = 0; i < 20; ++i) {
    const Vector v = random_vector(rng, 2, 2.0);
    const double tau = 0.1 + rng.uniform();
    double best = 1e300;
    Vector arg = Vector::Zero(2);
    for (int j = -400; j <= 400; ++j)
      for (int k = -400; k <= 400; ++k) {
        const Vector u = vec({j * 0.005, k * 0.005});
        const double val = tau * u.norm() + 0.5 * (u - v).squaredNorm();
        if (val < best) best = val, arg = u;
      }
    const Vector got = group_shrink_itv(v, tau);
    CHECK((got - arg).norm() <= 1e-2);
    CHECK(tau * got.norm() + 0.5 * (got - v).squaredNorm() <= best + 1e-12);
  }
}
