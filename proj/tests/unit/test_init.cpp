#include <doctest.h>

#include "kanlab/init.hpp"
#include "oracle_tables.hpp"

#include <cmath>
#include <random>

using namespace kanlab;

namespace {

double sample_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::unknown_id;
}

}  // namespace

TEST_CASE("moments of the single indicator basis") {
  const auto m = estimate_moments(KnotVector(-1, 1, 1, 0), {}, 5000, 1);
  CHECK(m.mu_b0 == 1.0);
  CHECK(m.mu_b1 == 0.0);
  CHECK(code_of([] { estimate_moments(KnotVector(-1, 1, 5, 3), {}, 999, 1); }) == Errc::bad_sample_count);
}

TEST_CASE("moments converge to the quadrature values") {
  const KnotVector kv(-1, 1, 5, 3);
  const auto m = estimate_moments(kv, {}, 1000000, 42);
  // standard errors at n = 1e6 are below 5e-4 for every moment here
  CHECK(std::abs(m.mu_r0 - oracle::kMuR0) < 1.5e-3);
  CHECK(std::abs(m.mu_r1 - oracle::kMuR1) < 1.5e-3);
  CHECK(std::abs(m.mu_b0 - oracle::kMuB0) < 1e-3);
  CHECK(std::abs(m.mu_b1 - oracle::kMuB1) < 1e-2);
  CHECK(m.mu_b0 <= 1.0);
}

TEST_CASE("baseline scheme") {
  KanNetwork net = make_network(std::vector<int>{64, 64}, 5, 3);
  apply_baseline(net, 3);
  for (double c : net.layers[0].c) CHECK(c == 1.0);
  const double sb = sample_std(net.layers[0].b);
  CHECK(sb > 0.09);
  CHECK(sb < 0.11);

  // r variance 2/(4+4) = 0.25, pooled over many seeds for a 16-weight layer
  std::vector<double> pool;
  for (std::uint64_t s = 0; s < 400; ++s) {
    KanNetwork small = make_network(std::vector<int>{4, 4}, 5, 3);
    apply_baseline(small, s);
    pool.insert(pool.end(), small.layers[0].r.begin(), small.layers[0].r.end());
  }
  const double var = std::pow(sample_std(pool), 2);
  const double se = 0.25 * std::sqrt(2.0 / static_cast<double>(pool.size()));
  CHECK(std::abs(var - 0.25) < 3 * se);
}

TEST_CASE("LeCun sigmas") {
  const double var = UniformInput{}.variance();
  CHECK(var == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto s = lecun_sigmas(2, 9, var, oracle::kMuR0, oracle::kMuB0);
  CHECK(s.r == doctest::Approx(std::sqrt((1.0 / 3.0) / (2 * 9 * oracle::kMuR0))).epsilon(1e-15));
  CHECK(s.b == doctest::Approx(std::sqrt((1.0 / 3.0) / (2 * 9 * oracle::kMuB0))).epsilon(1e-15));

  Moments m{oracle::kMuR0, oracle::kMuR1, oracle::kMuB0, oracle::kMuB1, 1000, {}};
  KanNetwork net = make_network(std::vector<int>{2, 8}, 5, 3);
  const auto normalized = apply_lecun(net, std::vector<Moments>{m}, LecunVariant::normalized, var, 1);
  CHECK(net.layers[0].normalized_basis);
  CHECK(normalized[0].b == doctest::Approx(std::sqrt(var / 18.0)).epsilon(1e-15));
  for (double c : net.layers[0].c) CHECK(c == 1.0);

  apply_lecun(net, std::vector<Moments>{m}, LecunVariant::numerical, 0.0, 1);
  CHECK(!net.layers[0].normalized_basis);
  for (double v : net.layers[0].r) CHECK(v == 0.0);
  for (double v : net.layers[0].b) CHECK(v == 0.0);

  Moments zero = m;
  zero.mu_r0 = 0.0;
  CHECK(code_of([&] { apply_lecun(net, std::vector<Moments>{zero}, LecunVariant::numerical, var, 1); }) ==
        Errc::zero_moment);
  CHECK(code_of([&] { apply_lecun(net, std::vector<Moments>{}, LecunVariant::numerical, var, 1); }) ==
        Errc::shape_mismatch);
}

TEST_CASE("Glorot sigmas") {
  Moments unit{1.0, 1.0, 1.0, 1.0, 1000, {}};
  const auto mlp = glorot_sigmas(3, 7, 1, unit);
  CHECK(mlp.b == std::sqrt(2.0 / 10.0));

  Moments sym{0.3, 0.3, 0.2, 0.2, 1000, {}};
  const auto s = glorot_sigmas(6, 6, 9, sym);
  CHECK(s.r == doctest::Approx(std::sqrt(1.0 / (9 * 6 * 0.3))).epsilon(1e-14));
  CHECK(s.b == doctest::Approx(std::sqrt(1.0 / (9 * 6 * 0.2))).epsilon(1e-14));

  const auto m = estimate_moments(KnotVector(-1, 1, 5, 3), {}, 100000, 5);
  const auto g = glorot_sigmas(2, 8, 9, m);
  CHECK(std::abs(g.r - std::sqrt((1.0 / 9.0) * 2.0 / (2 * m.mu_r0 + 8 * m.mu_r1))) < 1e-12);
  CHECK(std::abs(g.b - std::sqrt((1.0 / 9.0) * 2.0 / (2 * m.mu_b0 + 8 * m.mu_b1))) < 1e-12);

  Moments zero = m;
  zero.mu_b1 = 0.0;
  CHECK(code_of([&] { glorot_sigmas(2, 8, 9, zero); }) == Errc::zero_moment);
}

TEST_CASE("power-law sigmas") {
  CHECK(power_law_sigmas(2, 9, 0.0, 1.0).r == 1.0);
  CHECK(power_law_sigmas(2, 9, 0.0, 1.0).b == doctest::Approx(1.0 / 18.0).epsilon(1e-15));
  CHECK(power_law_sigmas(2, 9, 0.25, 0.0).r == doctest::Approx(0.4855).epsilon(1e-4));
  KanNetwork net = make_network(std::vector<int>{2, 8, 8, 1}, 5, 3);
  const auto sig = apply_power_law(net, 0.0, 1.0, 9);
  CHECK(sig.size() == 3);
  for (const auto& s : sig) CHECK(s.r == 1.0);
  CHECK(sig[1].b == doctest::Approx(1.0 / 72.0).epsilon(1e-15));
  CHECK(code_of([&] { apply_power_law(net, -0.5, 1.0, 1); }) == Errc::invalid_config);
}

TEST_CASE("schemes are deterministic, set c to one, and hit their sigma") {
  for (const InitScheme& scheme :
       {InitScheme{Baseline{}}, InitScheme{LeCunNumerical{}}, InitScheme{LeCunNormalized{}},
        InitScheme{GlorotInspired{}}, InitScheme{PowerLaw{0.5, 0.75}}}) {
    CAPTURE(scheme_name(scheme));
    InitOptions opts;
    opts.moment_samples = 20000;
    KanNetwork a = make_network(std::vector<int>{40, 40}, 10, 3);
    KanNetwork b = a;
    const auto sig = initialize(a, scheme, 77, opts);
    initialize(b, scheme, 77, opts);
    CHECK(pack_parameters(a) == pack_parameters(b));
    for (double c : a.layers[0].c) CHECK(c == 1.0);
    // 40*40*13 = 20,800 basis weights
    CHECK(std::abs(sample_std(a.layers[0].b) / sig[0].b - 1.0) < 0.05);
    CHECK(parse_scheme(scheme_name(scheme), 0.5, 0.75).index() == scheme.index());
  }
  CHECK(code_of([] { parse_scheme("xavier"); }) == Errc::invalid_config);
  CHECK(default_exponent_set().size() == 9);
  CHECK(default_exponent_set().back() == 2.0);
}
