#include <doctest.h>

#include "kanlab/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

using namespace kanlab;

namespace {

void randomize(KanNetwork& net, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& layer : net.layers) {
    for (auto* w : {&layer.r, &layer.c, &layer.b}) {
      for (double& v : *w) v = n(rng);
    }
  }
}

Batch uniform_batch(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Batch x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

// Cyclic Jacobi rotations; eigenvalues sorted descending.
std::vector<double> jacobi_eigenvalues(Matrix a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

// Per-sample parameter gradients through finite differences of the residuals.
Matrix fd_jacobian(KanNetwork net, const std::function<Vector(const KanNetwork&)>& residuals) {
  auto theta = pack_parameters(net);
  const Vector base = residuals(net);
  Matrix j(base.size(), static_cast<Eigen::Index>(theta.size()));
  const double eps = 1e-6;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + eps;
    unpack_parameters(net, theta);
    const Vector up = residuals(net);
    theta[k] = keep - eps;
    unpack_parameters(net, theta);
    const Vector down = residuals(net);
    theta[k] = keep;
    unpack_parameters(net, theta);
    j.col(static_cast<Eigen::Index>(k)) = (up - down) / (2.0 * eps);
  }
  return j;
}

double rel_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
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

TEST_CASE("jacobian of a single layer is linear in the weights") {
  KanNetwork net = make_network(std::vector<int>{2, 1}, 5, 3);
  randomize(net, 1);
  const Batch x = uniform_batch(6, 2, 2);
  const Matrix j = output_jacobian(net, x);
  REQUIRE(j.cols() == static_cast<Eigen::Index>(net.parameter_count()));
  const auto& layer = net.layers[0];
  const int nb = layer.basis_count();
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    for (int i = 0; i < 2; ++i) {
      CHECK(j(s, i) == doctest::Approx(silu(x(s, i))).epsilon(1e-14));
      const auto basis = basis_values(x(s, i), layer.kv);
      double spline = 0.0;
      for (int m = 0; m < nb; ++m) {
        spline += layer.b[layer.basis_index(0, i, m)] * basis[m];
        CHECK(j(s, 4 + i * nb + m) == doctest::Approx(layer.c[i] * basis[m]).epsilon(1e-12));
      }
      CHECK(j(s, 2 + i) == doctest::Approx(spline).epsilon(1e-12));
    }
  }
}

TEST_CASE("parameter-free residual has a zero jacobian") {
  KanNetwork net = make_network(std::vector<int>{2, 3, 1}, 5, 3);
  randomize(net, 3);
  const Batch x = uniform_batch(5, 2, 4);
  const Matrix j = residual_jacobian(net, [](const Jet& out) {
    ResidualJet rj;
    rj.r = Vector::Constant(out.value.rows(), 2.0);
    rj.partial = out.zeros_like();
    return rj;
  }, x);
  CHECK(j.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobians match per-residual finite differences") {
  KanNetwork net = make_network(std::vector<int>{2, 3, 1}, 5, 3);
  randomize(net, 5);
  REQUIRE(net.parameter_count() < 200);
  const Batch x = uniform_batch(16, 2, 6);
  CHECK(rel_diff(output_jacobian(net, x), fd_jacobian(net, [&](const KanNetwork& n) {
          return Vector(network_forward(n, x).col(0));
        })) < 1e-5);
  for (auto kind : {PdeKind::allen_cahn, PdeKind::burgers, PdeKind::helmholtz}) {
    CAPTURE(pde_name(kind));
    const auto p = make_pde_problem(kind, 0, 4, 3);
    CHECK(rel_diff(pde_jacobian(p, net, p.collocation),
                   fd_jacobian(net, [&](const KanNetwork& n) { return pde_residual(p, n, p.collocation); })) < 1e-5);
    CHECK(rel_diff(bc_jacobian(p, net), fd_jacobian(net, [&](const KanNetwork& n) { return bc_residuals(p, n); })) <
          1e-5);
  }
}

TEST_CASE("jacobian with a normalized basis includes the batch statistics") {
  KanNetwork net = make_network(std::vector<int>{2, 3, 1}, 5, 3, -1.0, 1.0, true);
  randomize(net, 7);
  const Batch x = uniform_batch(12, 2, 8);
  CHECK(rel_diff(output_jacobian(net, x), fd_jacobian(net, [&](const KanNetwork& n) {
          return Vector(network_forward(n, x).col(0));
        })) < 1e-5);
}

TEST_CASE("weighted blocks") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix jp(16, 30), jb(8, 30);
  for (Eigen::Index i = 0; i < jp.size(); ++i) jp.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < jb.size(); ++i) jb.data()[i] = n(rng);

  SUBCASE("unit weights give the plain kernel") {
    const auto k = weighted_ntk_blocks(jp, jb, Vector::Ones(16), Vector::Ones(8));
    CHECK(k.pde_pde == jp * jp.transpose());
    CHECK(k.bc_bc == jb * jb.transpose());
    CHECK(k.pde_bc == jp * jb.transpose());
    CHECK(k.bc_pde == k.pde_bc.transpose());
  }
  SUBCASE("constant weights scale quadratically") {
    const auto k = weighted_ntk_blocks(jp, jb, Vector::Constant(16, 2.0), Vector::Ones(8));
    CHECK(rel_diff(k.pde_pde, 4.0 * jp * jp.transpose()) < 1e-14);
    CHECK(rel_diff(k.pde_bc, 2.0 * jp * jb.transpose()) < 1e-14);
  }
  SUBCASE("entrywise identity with random weights") {
    Vector ap(16), ab(8);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (auto& v : ap) v = u(rng);
    for (auto& v : ab) v = u(rng);
    const auto k = weighted_ntk_blocks(jp, jb, ap, ab);
    const Matrix plain = jp * jb.transpose();
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 8; ++j) CHECK(k.pde_bc(i, j) == doctest::Approx(ap(i) * ab(j) * plain(i, j)).epsilon(1e-12));
    }
    const Matrix full = k.assembled();
    CHECK(full.rows() == 24);
    CHECK(full.block(16, 0, 8, 16) == k.bc_pde);
  }
  SUBCASE("shape checks") {
    CHECK(error_of([&] { weighted_ntk_blocks(jp, Matrix(8, 29), Vector::Ones(16), Vector::Ones(8)); }) ==
          Errc::dimension_mismatch);
    CHECK(error_of([&] { weighted_ntk_blocks(jp, jb, Vector::Ones(15), Vector::Ones(8)); }) == Errc::dimension_mismatch);
  }
}

TEST_CASE("fit kernel") {
  KanNetwork net = make_network(std::vector<int>{2, 4, 1}, 5, 3);
  randomize(net, 10);
  const Batch x = uniform_batch(20, 2, 11);
  const Matrix k = fit_ntk(net, x);
  const Matrix j = output_jacobian(net, x);
  for (int a = 0; a < 20; ++a) {
    for (int b = 0; b < 20; ++b) {
      double dot = 0.0;
      for (Eigen::Index p = 0; p < j.cols(); ++p) dot += j(a, p) * j(b, p);
      CHECK(k(a, b) == doctest::Approx(dot).epsilon(1e-10));
    }
  }
  const auto spec = eigen_spectrum(k);
  CHECK(spec.eigenvalues.back() >= -1e-8 * spec.eigenvalues.front());

  // reversing the parameter order leaves J J^T unchanged
  const Matrix jr = j.rowwise().reverse();
  CHECK(rel_diff(jr * jr.transpose(), k) < 1e-12);

  CHECK(subsample_indices(4000, 128, 3) == subsample_indices(4000, 128, 3));
  CHECK(subsample_indices(4000, 128, 3) != subsample_indices(4000, 128, 4));
  auto idx = subsample_indices(4000, 128, 3);
  std::sort(idx.begin(), idx.end());
  CHECK(std::unique(idx.begin(), idx.end()) == idx.end());
  CHECK(idx.back() < 4000);
  CHECK(subsample_indices(5, 128, 0).size() == 5);
}

TEST_CASE("eigen spectrum") {
  CHECK(eigen_spectrum(Matrix::Identity(5, 5)).eigenvalues == std::vector<double>(5, 1.0));
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 3.0, 1.0, 2.0;
  CHECK(eigen_spectrum(d).eigenvalues == std::vector<double>{3.0, 2.0, 1.0});

  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(20, 20);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  const Matrix sym = 0.5 * (a + a.transpose());
  const auto ed = symmetric_eigen(a);
  const auto oracle = jacobi_eigenvalues(sym);
  double sum = 0.0;
  for (int i = 0; i < 20; ++i) {
    CHECK(std::abs(ed.values(i) - oracle[static_cast<std::size_t>(i)]) < 1e-8);
    sum += ed.values(i);
    if (i > 0) CHECK(ed.values(i) <= ed.values(i - 1));
  }
  CHECK(std::abs(sum - sym.trace()) < 1e-10);
  const Matrix recon = ed.vectors * ed.values.asDiagonal() * ed.vectors.transpose();
  CHECK((recon - sym).norm() / sym.norm() < 1e-8);

  CHECK(error_of([] { symmetric_eigen(Matrix(2, 3)); }) == Errc::shape_mismatch);
  CHECK(parse_block("full") == NtkBlock::full);
  CHECK(error_of([] { parse_block("cross"); }) == Errc::unknown_id);
}

TEST_CASE("logging cadence") {
  CHECK(ntk_log_iterations(5000) == std::vector<int>{0, 1250, 2500, 3750, 5000});
  CHECK(ntk_log_iterations(8) == std::vector<int>{0, 2, 4, 6, 8});

  RunSpec fit{"f1", {2, 3, 1}, 5, 3, Baseline{}, 0, 8};
  const auto rf = run_ntk(fit);
  REQUIRE(rf.spectra.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rf.spectra[i].iteration == static_cast<int>(2 * i));
    CHECK(rf.spectra[i].eigenvalues.size() == 128);
  }
  CHECK(rf.record.loss_history.size() == 8);

  RunSpec pde{"helmholtz", {2, 3, 1}, 5, 3, PowerLaw{0.25, 1.75}, 0, 4};
  const auto rp = run_ntk(pde);
  REQUIRE(rp.spectra.size() == 15);
  CHECK(rp.spectra[0].block == NtkBlock::pde);
  CHECK(rp.spectra[0].eigenvalues.size() == 128);
  CHECK(rp.spectra[1].eigenvalues.size() == 256);
  CHECK(rp.spectra[2].eigenvalues.size() == 384);
  for (const auto& s : rp.spectra) {
    if (s.block != NtkBlock::full) CHECK(s.eigenvalues.back() >= -1e-8 * s.eigenvalues.front());
  }
}
