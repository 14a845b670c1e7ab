#include <doctest.h>

#include "kanlab/common.hpp"
#include "kanlab/spline.hpp"
#include "oracle_tables.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace kanlab;

TEST_CASE("knot vector layout") {
  const KnotVector kv(-1.0, 1.0, 5, 3);
  REQUIRE(kv.knots().size() == 12);
  CHECK(kv.knots().front() == doctest::Approx(-2.2).epsilon(1e-15));
  CHECK(kv.knots().back() == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(kv.knots()[3] == -1.0);
  CHECK(kv.knots()[8] == 1.0);
  for (std::size_t j = 1; j < kv.knots().size(); ++j) {
    CHECK(kv.knots()[j] - kv.knots()[j - 1] == doctest::Approx(0.4).epsilon(1e-12));
  }
  CHECK(kv.basis_count() == 8);

  const KnotVector single(-1.0, 1.0, 1, 0);
  REQUIRE(single.knots().size() == 2);
  CHECK(single.knots()[0] == -1.0);
  CHECK(single.knots()[1] == 1.0);

  const KnotVector unit(0.0, 1.0, 4, 2);
  REQUIRE(unit.knots().size() == 9);
  CHECK(unit.knots().front() == doctest::Approx(-0.5));
  CHECK(unit.knots().back() == doctest::Approx(1.5));
}

TEST_CASE("knot vector rejects bad arguments") {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::unknown_id;
  };
  CHECK(code_of([] { build_knot_vector(1.0, 1.0, 5, 3); }) == Errc::invalid_domain);
  CHECK(code_of([] { build_knot_vector(1.0, -1.0, 5, 3); }) == Errc::invalid_domain);
  CHECK(code_of([] { build_knot_vector(-1.0, 1.0, 0, 3); }) == Errc::invalid_size);
  CHECK(code_of([] { build_knot_vector(-1.0, 1.0, 5, -1); }) == Errc::invalid_size);
  CHECK(code_of([] { basis_derivatives(0.0, KnotVector(-1, 1, 5, 1), 2); }) == Errc::unsupported_order);
  CHECK(code_of([] { basis_derivatives(0.0, KnotVector(-1, 1, 5, 3), 3); }) == Errc::unsupported_order);
}

TEST_CASE("basis at 0.3 matches the exact rational recursion") {
  const KnotVector kv(-1.0, 1.0, 5, 3);
  const auto b = basis_values(0.3, kv);
  REQUIRE(b.size() == oracle::kBasisAt03.size());
  for (std::size_t m = 0; m < b.size(); ++m) CHECK(b[m] == doctest::Approx(oracle::kBasisAt03[m]).epsilon(1e-14));
}

TEST_CASE("indicator basis on a single interval") {
  const KnotVector kv(-1.0, 1.0, 1, 0);
  CHECK(basis_values(-1.0, kv) == std::vector<double>{1.0});
  CHECK(basis_values(1.0, kv) == std::vector<double>{1.0});
}

TEST_CASE("partition of unity, non-negativity, local support") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int G : {5, 10, 20, 40}) {
    for (int k : {0, 1, 2, 3}) {
      const KnotVector kv(-1.0, 1.0, G, k);
      const auto t = kv.knots();
      for (int s = 0; s < 200; ++s) {
        const double x = u(rng);
        const auto b = basis_values(x, kv);
        CHECK(std::abs(std::accumulate(b.begin(), b.end(), 0.0) - 1.0) < 1e-12);
        for (std::size_t m = 0; m < b.size(); ++m) {
          CHECK(b[m] >= 0.0);
          if (x < t[m] || x > t[m + k + 1]) CHECK(b[m] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("derivatives sum to zero and match finite differences") {
  const KnotVector kv(-1.0, 1.0, 5, 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  for (int s = 0; s < 100; ++s) {
    const double x = s == 0 ? 0.3 : u(rng);
    const auto d1 = basis_derivatives(x, kv, 1);
    const auto d2 = basis_derivatives(x, kv, 2);
    CHECK(std::abs(std::accumulate(d1.begin(), d1.end(), 0.0)) < 1e-10);
    CHECK(std::abs(std::accumulate(d2.begin(), d2.end(), 0.0)) < 1e-8);
    const double h1 = 1e-6;
    const double h2 = 1e-4;
    const auto p1 = basis_values(x + h1, kv);
    const auto m1 = basis_values(x - h1, kv);
    const auto p2 = basis_values(x + h2, kv);
    const auto m2 = basis_values(x - h2, kv);
    const auto c0 = basis_values(x, kv);
    for (std::size_t m = 0; m < d1.size(); ++m) {
      CHECK(std::abs((p1[m] - m1[m]) / (2 * h1) - d1[m]) < 1e-6);
      CHECK(std::abs((p2[m] - 2 * c0[m] + m2[m]) / (h2 * h2) - d2[m]) < 1e-4);
    }
  }
}

TEST_CASE("banded evaluation agrees with the full recursion") {
  std::mt19937_64 rng(3);
  for (int k : {0, 1, 2, 3, 5}) {
    for (int G : {1, 5, 10}) {
      const KnotVector kv(-1.0, 1.0, G, k);
      const double reach = 1.0 + k * kv.spacing();
      std::uniform_real_distribution<double> u(-reach - 0.3, reach + 0.3);
      LocalBasis lb;
      for (int s = 0; s < 200; ++s) {
        const double x = s == 0 ? -1.0 : s == 1 ? 1.0 : u(rng);
        const auto full = basis_values(x, kv);
        std::vector<double> banded(full.size(), 0.0);
        std::vector<double> banded1(full.size(), 0.0);
        std::vector<double> banded2(full.size(), 0.0);
        eval_local_basis(x, kv, 3, lb);
        for (int r = 0; r < lb.width; ++r) {
          const int m = lb.first + r;
          if (m < 0 || m >= kv.basis_count()) continue;
          banded[m] = lb.ders[0][r];
          banded1[m] = lb.ders[1][r];
          banded2[m] = lb.ders[2][r];
        }
        for (std::size_t m = 0; m < full.size(); ++m) CHECK(banded[m] == doctest::Approx(full[m]).epsilon(1e-13));
        if (k >= 2) {
          const auto d1 = basis_derivatives(x, kv, 1);
          const auto d2 = basis_derivatives(x, kv, 2);
          for (std::size_t m = 0; m < full.size(); ++m) {
            CHECK(std::abs(banded1[m] - d1[m]) < 1e-11);
            CHECK(std::abs(banded2[m] - d2[m]) < 1e-9);
          }
        }
      }
    }
  }
}

TEST_CASE("third derivative of a cubic band is piecewise constant") {
  const KnotVector kv(-1.0, 1.0, 5, 3);
  LocalBasis a;
  LocalBasis b;
  eval_local_basis(0.21, kv, 3, a);
  eval_local_basis(0.37, kv, 3, b);
  REQUIRE(a.first == b.first);
  for (int r = 0; r < 4; ++r) CHECK(a.ders[3][r] == doctest::Approx(b.ders[3][r]).epsilon(1e-10));
  // d^3 B / dx^3 = +-1/h^3 patterns summing to zero
  double sum = 0.0;
  for (int r = 0; r < 4; ++r) sum += a.ders[3][r];
  CHECK(std::abs(sum) < 1e-9);
}

TEST_CASE("evaluation outside the augmented support is zero") {
  const KnotVector kv(-1.0, 1.0, 5, 3);
  for (double x : {-3.0, 2.5, 100.0}) {
    for (double v : basis_values(x, kv)) CHECK(v == 0.0);
    LocalBasis lb;
    eval_local_basis(x, kv, 2, lb);
    CHECK(lb.width == 0);
  }
}
