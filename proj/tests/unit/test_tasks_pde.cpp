#include <doctest.h>

#include "kanlab/tasks_pde.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>

using namespace kanlab;

namespace {

constexpr double kPi = std::numbers::pi;

void randomize(KanNetwork& net, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& layer : net.layers) {
    for (auto* w : {&layer.r, &layer.c, &layer.b}) {
      for (double& v : *w) v = n(rng);
    }
  }
}

KanNetwork small_net(std::uint64_t seed, std::vector<int> widths = {2, 4, 1}) {
  KanNetwork net = make_network(widths, 5, 3);
  randomize(net, seed);
  return net;
}

double eval_at(const KanNetwork& net, double a, double b) {
  Batch x(1, 2);
  x << a, b;
  return network_forward(net, x)(0, 0);
}

// The operator applied to central differences of the plain forward pass, in
// physical coordinates: (t, x) with tau = 2t - 1, or (x, y).
double fd_residual(const PdeProblem& p, const KanNetwork& net, double a, double b) {
  const double h = 1e-3;
  if (p.kind == PdeKind::helmholtz) {
    const double u = eval_at(net, a, b);
    const double uxx = (eval_at(net, a + h, b) - 2.0 * u + eval_at(net, a - h, b)) / (h * h);
    const double uyy = (eval_at(net, a, b + h) - 2.0 * u + eval_at(net, a, b - h)) / (h * h);
    const double f = (1.0 - kPi * kPi * (p.coef.a1 * p.coef.a1 + p.coef.a2 * p.coef.a2)) * std::sin(kPi * p.coef.a1 * a) *
                     std::sin(kPi * p.coef.a2 * b);
    return uxx + uyy + u - f;
  }
  const double t = (a + 1.0) / 2.0;
  auto v = [&](double tt, double xx) { return eval_at(net, 2.0 * tt - 1.0, xx); };
  const double u = v(t, b);
  const double ut = (v(t + h, b) - v(t - h, b)) / (2.0 * h);
  const double ux = (v(t, b + h) - v(t, b - h)) / (2.0 * h);
  const double uxx = (v(t, b + h) - 2.0 * u + v(t, b - h)) / (h * h);
  if (p.kind == PdeKind::allen_cahn) return ut - p.coef.D * uxx - p.coef.c * (u - u * u * u);
  return ut + u * ux - p.coef.nu * uxx;
}

double naive_loss(const PdeProblem& p, const KanNetwork& net, const RbaState& rba) {
  double sp = 0.0;
  for (Eigen::Index s = 0; s < p.collocation.rows(); ++s) {
    Batch x = p.collocation.row(s);
    const double r = pde_residual(p, net, x)(0);
    sp += (rba.alpha_pde(s) * r) * (rba.alpha_pde(s) * r);
  }
  double sb = 0.0;
  const Vector r_bc = bc_residuals(p, net);
  for (Eigen::Index s = 0; s < r_bc.size(); ++s) sb += (rba.alpha_bc(s) * r_bc(s)) * (rba.alpha_bc(s) * r_bc(s));
  return sp / static_cast<double>(p.collocation.rows()) + sb / static_cast<double>(r_bc.size());
}

RbaState random_rba(const PdeProblem& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  RbaState s = make_rba(p);
  for (Eigen::Index i = 0; i < s.alpha_pde.size(); ++i) s.alpha_pde(i) = u(rng);
  for (Eigen::Index i = 0; i < s.alpha_bc.size(); ++i) s.alpha_bc(i) = u(rng);
  return s;
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path;
}

template <typename F>
std::optional<Errc> error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("pde names round trip") {
  for (auto k : {PdeKind::allen_cahn, PdeKind::burgers, PdeKind::helmholtz}) CHECK(parse_pde(pde_name(k)) == k);
  CHECK(error_of([] { parse_pde("poisson"); }) == Errc::unknown_id);
}

TEST_CASE("collocation sets are a seeded permutation of the grid") {
  const auto a = make_pde_problem(PdeKind::helmholtz, 7);
  const auto b = make_pde_problem(PdeKind::helmholtz, 7);
  const auto c = make_pde_problem(PdeKind::helmholtz, 8);
  REQUIRE(a.collocation.rows() == 4096);
  CHECK(a.collocation == b.collocation);
  CHECK(a.collocation != c.collocation);
  CHECK(a.bc_points.rows() == 256);
  CHECK(make_pde_problem(PdeKind::burgers, 7).bc_points.rows() == 192);

  std::vector<std::pair<double, double>> nodes;
  for (Eigen::Index s = 0; s < a.collocation.rows(); ++s) nodes.emplace_back(a.collocation(s, 0), a.collocation(s, 1));
  std::sort(nodes.begin(), nodes.end());
  CHECK(std::unique(nodes.begin(), nodes.end()) == nodes.end());
  CHECK(nodes.front() == std::pair{-1.0, -1.0});
  CHECK(nodes.back() == std::pair{1.0, 1.0});
}

TEST_CASE("zero network residuals") {
  KanNetwork net = make_network(std::vector<int>{2, 4, 1}, 5, 3);
  SUBCASE("allen-cahn") {
    const auto p = make_pde_problem(PdeKind::allen_cahn, 0);
    CHECK(pde_residual(p, net, p.collocation).cwiseAbs().maxCoeff() == 0.0);
    const Vector r = bc_residuals(p, net);
    for (int i = 0; i < 64; ++i) {
      const double x = p.bc_points(i, 1);
      CHECK(r(i) == doctest::Approx(-x * x * std::cos(kPi * x)).epsilon(1e-15));
    }
    for (int i = 64; i < 192; ++i) CHECK(r(i) == 1.0);
  }
  SUBCASE("burgers initial rows") {
    auto p = make_pde_problem(PdeKind::burgers, 0);
    p.bc_points.row(0) << -1.0, 0.5;
    p.bc_targets(0) = -std::sin(0.5 * kPi);
    CHECK(bc_residuals(p, net)(0) == doctest::Approx(1.0));
    const Vector r = bc_residuals(make_pde_problem(PdeKind::burgers, 0), net);
    const auto q = make_pde_problem(PdeKind::burgers, 0);
    for (int i = 0; i < 64; ++i) CHECK(r(i) == doctest::Approx(std::sin(kPi * q.bc_points(i, 1))));
  }
  SUBCASE("helmholtz") {
    const auto p = make_pde_problem(PdeKind::helmholtz, 0);
    const Vector r = pde_residual(p, net, p.collocation);
    for (Eigen::Index s = 0; s < r.size(); ++s) {
      CHECK(r(s) == -helmholtz_source(p.collocation(s, 0), p.collocation(s, 1)));
    }
    CHECK(bc_residuals(p, net).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("residuals agree with finite differences of the forward pass") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (auto kind : {PdeKind::allen_cahn, PdeKind::burgers, PdeKind::helmholtz}) {
    CAPTURE(pde_name(kind));
    const auto p = make_pde_problem(kind, 0, 8, 4);
    const KanNetwork net = small_net(3);
    Batch pts(10, 2);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
    const Vector r = pde_residual(p, net, pts);
    for (Eigen::Index s = 0; s < pts.rows(); ++s) {
      const double fd = fd_residual(p, net, pts(s, 0), pts(s, 1));
      CHECK(std::abs(r(s) - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("second derivatives need k >= 2") {
  const auto p = make_pde_problem(PdeKind::helmholtz, 0, 4, 2);
  KanNetwork net = make_network(std::vector<int>{2, 2, 1}, 5, 1);
  CHECK(error_of([&] { pde_residual(p, net, p.collocation); }) == Errc::unsupported_order);
}

TEST_CASE("helmholtz reference") {
  Batch x(2, 2);
  x << 0.0, 0.37, 0.5, 0.125;
  const Vector v = helmholtz_reference(x);
  CHECK(v(0) == 0.0);
  CHECK(v(1) == doctest::Approx(1.0).epsilon(1e-15));

  // u_xx + u_yy + u reproduces the source
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const PdeCoefficients c;
  for (int k = 0; k < 100; ++k) {
    Batch pt(1, 2);
    pt << u(rng), u(rng);
    const double ref = helmholtz_reference(pt)(0);
    const double lap = -kPi * kPi * (c.a1 * c.a1 + c.a2 * c.a2) * ref;
    CHECK(std::abs(lap + ref - helmholtz_source(pt(0, 0), pt(0, 1))) <= 1e-9);
  }
}

TEST_CASE("rba update") {
  auto p = make_pde_problem(PdeKind::helmholtz, 0, 4, 2);
  SUBCASE("single step at the group maximum") {
    RbaState s = make_rba(p);
    Vector rp = Vector::Zero(16);
    rp(3) = -2.0;
    rp(5) = 1.0;
    rba_update(s, rp, Vector::Ones(8));
    CHECK(s.alpha_pde(3) == doctest::Approx(1.009).epsilon(1e-15));
    CHECK(s.alpha_pde(5) == doctest::Approx(0.999 + 0.005).epsilon(1e-15));
    CHECK(s.alpha_pde(0) == doctest::Approx(0.999).epsilon(1e-15));
    CHECK(s.alpha_bc(0) == doctest::Approx(1.009).epsilon(1e-15));
  }
  SUBCASE("fixed point and decay") {
    RbaState s = make_rba(p);
    for (int k = 0; k < 10000; ++k) rba_update(s, Vector::Ones(16), Vector::Zero(8));
    CHECK(std::abs(s.alpha_pde(0) - 10.0) < 1e-3);
    CHECK(s.alpha_bc(0) == doctest::Approx(std::pow(0.999, 10000)).epsilon(1e-9));
    CHECK(s.alpha_bc(0) > 0.0);
  }
  SUBCASE("weights stay in (0, 10]") {
    RbaState s = make_rba(p);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 3000; ++k) {
      Vector rp(16), rb(8);
      for (auto& v : rp) v = n(rng) * n(rng);
      for (auto& v : rb) v = n(rng);
      const Vector before = s.alpha_pde;
      rba_update(s, rp, rb);
      CHECK(s.alpha_pde.minCoeff() > 0.0);
      CHECK(s.alpha_pde.maxCoeff() <= 10.0);
      CHECK(s.alpha_bc.maxCoeff() <= 10.0);
    }
  }
  SUBCASE("group sizes") {
    RbaState s = make_rba(p);
    CHECK(error_of([&] { rba_update(s, Vector::Ones(3), Vector::Ones(8)); }) == Errc::dimension_mismatch);
  }
}

TEST_CASE("piml loss against direct summation") {
  SUBCASE("zero network, unit weights") {
    const auto p = make_pde_problem(PdeKind::helmholtz, 1);
    KanNetwork net = make_network(std::vector<int>{2, 3, 1}, 5, 3);
    double sum = 0.0;
    for (Eigen::Index s = 0; s < p.collocation.rows(); ++s) {
      const double f = helmholtz_source(p.collocation(s, 0), p.collocation(s, 1));
      sum += f * f;
    }
    const double expected = sum / static_cast<double>(p.collocation.rows());
    CHECK(std::abs(piml_loss(p, net, make_rba(p)).loss - expected) <= 1e-12 * expected);
  }
  for (auto kind : {PdeKind::allen_cahn, PdeKind::burgers, PdeKind::helmholtz}) {
    CAPTURE(pde_name(kind));
    const auto p = make_pde_problem(kind, 2, 6, 5);
    const KanNetwork net = small_net(9);
    const RbaState rba = random_rba(p, 4);
    const double naive = naive_loss(p, net, rba);
    CHECK(std::abs(piml_loss(p, net, rba).loss - naive) <= 1e-12 * naive);
    CHECK(std::abs(piml_loss_and_gradient(p, net, rba).first.loss - naive) <= 1e-12 * naive);

    RbaState zero = rba;
    zero.alpha_pde.setZero();
    zero.alpha_bc.setZero();
    CHECK(piml_loss(p, net, zero).loss == 0.0);
    RbaState twice = rba;
    twice.alpha_pde *= 2.0;
    twice.alpha_bc *= 2.0;
    CHECK(piml_loss(p, net, twice).loss == doctest::Approx(4.0 * naive).epsilon(1e-12));
  }
}

TEST_CASE("piml gradient matches finite differences") {
  for (auto kind : {PdeKind::allen_cahn, PdeKind::burgers, PdeKind::helmholtz}) {
    CAPTURE(pde_name(kind));
    const auto p = make_pde_problem(kind, 3, 6, 5);
    KanNetwork net = small_net(21, {2, 3, 1});
    const RbaState rba = random_rba(p, 8);
    const auto grad = piml_loss_and_gradient(p, net, rba).second.flatten();
    auto theta = pack_parameters(net);
    const double eps = 1e-6;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double keep = theta[k];
      theta[k] = keep + eps;
      unpack_parameters(net, theta);
      const double up = piml_loss(p, net, rba).loss;
      theta[k] = keep - eps;
      unpack_parameters(net, theta);
      const double down = piml_loss(p, net, rba).loss;
      theta[k] = keep;
      unpack_parameters(net, theta);
      const double fd = (up - down) / (2.0 * eps);
      CAPTURE(k);
      CHECK(std::abs(grad[k] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("non-finite residuals are reported") {
  const auto p = make_pde_problem(PdeKind::helmholtz, 0, 4, 2);
  KanNetwork net = small_net(1, {2, 2, 1});
  net.layers[1].c[0] = std::numeric_limits<double>::infinity();
  CHECK(error_of([&] { piml_loss(p, net, make_rba(p)); }) == Errc::non_finite_residual);
}

TEST_CASE("reference solution files") {
  ReferenceGrid g;
  g.x = {-1.0, 0.0, 1.0};
  g.t = {0.0, 0.5, 1.0};
  g.u.resize(3, 3);
  g.u << 1.0, -0.25, 3.5, 0.1, 0.2, 0.30000000000000004, -7.0, 1e-300, 2.0;
  const auto path = std::filesystem::temp_directory_path() / "kanlab_ref_roundtrip.csv";
  save_reference_solution(path.string(), g);
  const ReferenceGrid back = load_reference_solution(path.string());
  CHECK(back.x == g.x);
  CHECK(back.t == g.t);
  CHECK(back.u == g.u);

  const Batch pts = reference_points(PdeKind::burgers, back);
  CHECK(pts.rows() == 9);
  CHECK(pts(3, 0) == 0.0);  // t = 0.5 maps to tau = 0
  CHECK(pts(3, 1) == -1.0);
  CHECK(reference_values(back)(5) == g.u(1, 2));

  CHECK(error_of([] { load_reference_solution("/nonexistent/kanlab.csv"); }) == Errc::file_not_found);
  const auto bad_cell = temp_file("kanlab_ref_bad.csv", ",0,1\n0,1,x\n");
  CHECK(error_of([&] { load_reference_solution(bad_cell.string()); }) == Errc::malformed_file);
  const auto ragged = temp_file("kanlab_ref_ragged.csv", ",0,1\n0,1\n");
  CHECK(error_of([&] { load_reference_solution(ragged.string()); }) == Errc::malformed_file);
  const auto header = temp_file("kanlab_ref_header.csv", "t,0,1\n0,1,2\n");
  CHECK(error_of([&] { load_reference_solution(header.string()); }) == Errc::malformed_file);
  const auto unordered = temp_file("kanlab_ref_order.csv", ",0,1\n0.5,1,2\n0.25,3,4\n");
  CHECK(error_of([&] { load_reference_solution(unordered.string()); }) == Errc::non_monotone_coordinates);
}

TEST_CASE("pde training") {
  SUBCASE("zero epochs keep unit weights") {
    RunSpec spec{"helmholtz", {2, 3, 1}, 5, 3, Baseline{}, 0, 0};
    PdeTrainOptions opt;
    opt.helmholtz_grid = 16;
    const auto res = run_pde(spec, {}, opt);
    CHECK(res.record.loss_history.empty());
    CHECK(res.rba.alpha_pde.minCoeff() == 1.0);
    CHECK(res.rba.alpha_pde.maxCoeff() == 1.0);
    CHECK(res.rba.alpha_bc.minCoeff() == 1.0);
    CHECK(res.record.final_loss == res.record.initial_loss);
    CHECK(std::isfinite(res.record.rel_l2));
  }
  SUBCASE("no reference file leaves rel_l2 unavailable") {
    RunSpec spec{"allen-cahn", {2, 3, 1}, 5, 3, Baseline{}, 0, 2};
    const auto res = run_pde(spec);
    CHECK(res.record.loss_history.size() == 2);
    CHECK(std::isnan(res.record.rel_l2));
    CHECK_FALSE(res.record.diverged);
  }
  SUBCASE("a short run keeps the weights in (0, 10]") {
    RunSpec spec{"burgers", {2, 3, 1}, 5, 3, PowerLaw{0.25, 1.75}, 1, 20};
    int calls = 0;
    PdeTrainOptions opt;
    opt.on_epoch = [&](int, const KanNetwork&, const RbaState&) { ++calls; };
    const auto res = run_pde(spec, {}, opt);
    CHECK(calls == 21);
    CHECK(res.min_alpha > 0.0);
    CHECK(res.max_alpha <= 10.0);
    CHECK(res.record.fingerprint == fingerprint(spec));
  }
  SUBCASE("shape checks") {
    KanNetwork net = make_network(std::vector<int>{3, 1}, 5, 3);
    CHECK(error_of([&] { train_pde(net, make_pde_problem(PdeKind::helmholtz, 0, 4, 2), 1, 0); }) ==
          Errc::dimension_mismatch);
  }
}
