#include "kanlab/tasks_pde.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace kanlab {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = n == 1 ? lo : (i == n - 1 ? hi : lo + i * (hi - lo) / (n - 1));
  return out;
}

bool time_dependent(PdeKind kind) { return kind != PdeKind::helmholtz; }

double initial_condition(PdeKind kind, double x) {
  return kind == PdeKind::allen_cahn ? x * x * std::cos(kPi * x) : -std::sin(kPi * x);
}

double boundary_value(PdeKind kind) { return kind == PdeKind::allen_cahn ? -1.0 : 0.0; }

void check_residuals(const Vector& r, const char* what) {
  if (!r.allFinite()) fail(Errc::non_finite_residual, std::string(what) + " residual is not finite");
}

}  // namespace

std::string pde_name(PdeKind kind) {
  switch (kind) {
    case PdeKind::allen_cahn: return "allen-cahn";
    case PdeKind::burgers: return "burgers";
    case PdeKind::helmholtz: return "helmholtz";
  }
  return "";
}

PdeKind parse_pde(const std::string& name) {
  if (name == "allen-cahn") return PdeKind::allen_cahn;
  if (name == "burgers") return PdeKind::burgers;
  if (name == "helmholtz") return PdeKind::helmholtz;
  fail(Errc::unknown_id, "unknown PDE '" + name + "'");
}

PdeProblem make_pde_problem(PdeKind kind, std::uint64_t seed, int grid_nodes, int points_per_condition,
                            const PdeCoefficients& coef) {
  if (grid_nodes < 2 || points_per_condition < 1) fail(Errc::invalid_size, "collocation sizes must be positive");
  PdeProblem p;
  p.kind = kind;
  p.coef = coef;

  const auto axis = linspace(-1.0, 1.0, grid_nodes);
  std::vector<int> order(static_cast<std::size_t>(grid_nodes) * grid_nodes);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  p.collocation.resize(static_cast<Eigen::Index>(order.size()), 2);
  for (std::size_t i = 0; i < order.size(); ++i) {
    p.collocation(static_cast<Eigen::Index>(i), 0) = axis[static_cast<std::size_t>(order[i] / grid_nodes)];
    p.collocation(static_cast<Eigen::Index>(i), 1) = axis[static_cast<std::size_t>(order[i] % grid_nodes)];
  }

  const auto edge = linspace(-1.0, 1.0, points_per_condition);
  const int n = points_per_condition;
  if (time_dependent(kind)) {
    // initial line tau = -1, then the x = -1 and x = +1 walls
    p.bc_points.resize(3 * n, 2);
    p.bc_targets.resize(3 * n);
    for (int i = 0; i < n; ++i) {
      const double e = edge[static_cast<std::size_t>(i)];
      p.bc_points.row(i) << -1.0, e;
      p.bc_targets(i) = initial_condition(kind, e);
      p.bc_points.row(n + i) << e, -1.0;
      p.bc_targets(n + i) = boundary_value(kind);
      p.bc_points.row(2 * n + i) << e, 1.0;
      p.bc_targets(2 * n + i) = boundary_value(kind);
    }
  } else {
    p.bc_points.resize(4 * n, 2);
    p.bc_targets = Vector::Zero(4 * n);
    for (int i = 0; i < n; ++i) {
      const double e = edge[static_cast<std::size_t>(i)];
      p.bc_points.row(i) << -1.0, e;
      p.bc_points.row(n + i) << 1.0, e;
      p.bc_points.row(2 * n + i) << e, -1.0;
      p.bc_points.row(3 * n + i) << e, 1.0;
    }
  }
  return p;
}

RbaState make_rba(const PdeProblem& problem) {
  RbaState s;
  s.alpha_pde = Vector::Ones(problem.collocation.rows());
  s.alpha_bc = Vector::Ones(problem.bc_points.rows());
  return s;
}

void rba_update(RbaState& state, const Vector& r_pde, const Vector& r_bc) {
  if (r_pde.size() != state.alpha_pde.size() || r_bc.size() != state.alpha_bc.size()) {
    fail(Errc::dimension_mismatch, "residual groups do not match the RBA weights");
  }
  auto update = [&](Vector& alpha, const Vector& r) {
    const double mx = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
    if (mx > 0.0) {
      alpha = state.gamma * alpha + (state.eta / mx) * r.cwiseAbs();
    } else {
      alpha *= state.gamma;
    }
  };
  update(state.alpha_pde, r_pde);
  update(state.alpha_bc, r_bc);
}

double helmholtz_source(double x, double y, const PdeCoefficients& coef) {
  return (1.0 - kPi * kPi * (coef.a1 * coef.a1 + coef.a2 * coef.a2)) * std::sin(kPi * coef.a1 * x) *
         std::sin(kPi * coef.a2 * y);
}

Vector helmholtz_reference(const Batch& points, const PdeCoefficients& coef) {
  if (points.cols() != 2) fail(Errc::dimension_mismatch, "Helmholtz points are 2-d");
  Vector out(points.rows());
  for (Eigen::Index s = 0; s < points.rows(); ++s) {
    out(s) = std::sin(kPi * coef.a1 * points(s, 0)) * std::sin(kPi * coef.a2 * points(s, 1));
  }
  return out;
}

DerivativeRequest pde_request(PdeKind) { return DerivativeRequest{{0, 1}, true}; }

ResidualJet pde_residual_jet(const PdeProblem& problem, const Jet& out, const Batch& points) {
  if (out.value.cols() != 1 || out.first.size() != 2 || out.second.size() != 2) {
    fail(Errc::shape_mismatch, "PDE residuals need a scalar output with first and second derivatives in both inputs");
  }
  const Eigen::Index n = out.value.rows();
  ResidualJet rj;
  rj.r.resize(n);
  rj.partial = out.zeros_like();
  const auto& c = problem.coef;
  // d/dt = 2 d/dtau for the time-dependent problems
  for (Eigen::Index s = 0; s < n; ++s) {
    const double u = out.value(s, 0);
    switch (problem.kind) {
      case PdeKind::allen_cahn: {
        const double u_tau = out.first[0](s, 0);
        const double u_xx = out.second[1](s, 0);
        rj.r(s) = 2.0 * u_tau - c.D * u_xx - c.c * (u - u * u * u);
        rj.partial.value(s, 0) = -c.c * (1.0 - 3.0 * u * u);
        rj.partial.first[0](s, 0) = 2.0;
        rj.partial.second[1](s, 0) = -c.D;
        break;
      }
      case PdeKind::burgers: {
        const double u_tau = out.first[0](s, 0);
        const double u_x = out.first[1](s, 0);
        const double u_xx = out.second[1](s, 0);
        rj.r(s) = 2.0 * u_tau + u * u_x - c.nu * u_xx;
        rj.partial.value(s, 0) = u_x;
        rj.partial.first[0](s, 0) = 2.0;
        rj.partial.first[1](s, 0) = u;
        rj.partial.second[1](s, 0) = -c.nu;
        break;
      }
      case PdeKind::helmholtz: {
        rj.r(s) = out.second[0](s, 0) + out.second[1](s, 0) + u - helmholtz_source(points(s, 0), points(s, 1), c);
        rj.partial.value(s, 0) = 1.0;
        rj.partial.second[0](s, 0) = 1.0;
        rj.partial.second[1](s, 0) = 1.0;
        break;
      }
    }
  }
  return rj;
}

ResidualJet bc_residual_jet(const PdeProblem& problem, const Jet& out) {
  if (out.value.cols() != 1 || out.value.rows() != problem.bc_targets.size()) {
    fail(Errc::shape_mismatch, "boundary residuals need one scalar output per condition point");
  }
  ResidualJet rj;
  rj.r = out.value.col(0) - problem.bc_targets;
  rj.partial = out.zeros_like();
  rj.partial.value.setOnes();
  return rj;
}

Vector pde_residual(const PdeProblem& problem, const KanNetwork& net, const Batch& points) {
  const Jet out = input_derivatives(net, points, pde_request(problem.kind));
  return pde_residual_jet(problem, out, points).r;
}

Vector bc_residuals(const PdeProblem& problem, const KanNetwork& net) {
  return network_forward(net, problem.bc_points).col(0) - problem.bc_targets;
}

PimlLoss piml_loss(const PdeProblem& problem, const KanNetwork& net, const RbaState& rba) {
  PimlLoss out;
  out.r_pde = pde_residual(problem, net, problem.collocation);
  out.r_bc = bc_residuals(problem, net);
  check_residuals(out.r_pde, "PDE");
  check_residuals(out.r_bc, "boundary");
  if (out.r_pde.size() != rba.alpha_pde.size() || out.r_bc.size() != rba.alpha_bc.size()) {
    fail(Errc::dimension_mismatch, "RBA weights do not match the collocation sets");
  }
  out.loss = rba.alpha_pde.cwiseProduct(out.r_pde).squaredNorm() / static_cast<double>(out.r_pde.size()) +
             rba.alpha_bc.cwiseProduct(out.r_bc).squaredNorm() / static_cast<double>(out.r_bc.size());
  return out;
}

std::pair<PimlLoss, NetworkGradient> piml_loss_and_gradient(const PdeProblem& problem, const KanNetwork& net,
                                                            const RbaState& rba) {
  PimlLoss out;
  const ForwardTape pde_tape(net, problem.collocation, pde_request(problem.kind));
  const ForwardTape bc_tape(net, problem.bc_points, {});
  ResidualJet rp = pde_residual_jet(problem, pde_tape.outputs(), problem.collocation);
  ResidualJet rb = bc_residual_jet(problem, bc_tape.outputs());
  check_residuals(rp.r, "PDE");
  check_residuals(rb.r, "boundary");
  if (rp.r.size() != rba.alpha_pde.size() || rb.r.size() != rba.alpha_bc.size()) {
    fail(Errc::dimension_mismatch, "RBA weights do not match the collocation sets");
  }
  const double np = static_cast<double>(rp.r.size());
  const double nb = static_cast<double>(rb.r.size());
  out.loss = rba.alpha_pde.cwiseProduct(rp.r).squaredNorm() / np + rba.alpha_bc.cwiseProduct(rb.r).squaredNorm() / nb;
  if (!std::isfinite(out.loss)) fail(Errc::non_finite_loss, "PIML loss is not finite");

  auto scale_rows = [](Jet& jet, const Vector& w) {
    jet.value.array().colwise() *= w.array();
    for (auto& f : jet.first) f.array().colwise() *= w.array();
    for (auto& h : jet.second) h.array().colwise() *= w.array();
  };
  const Vector wp = (2.0 / np) * rba.alpha_pde.array().square() * rp.r.array();
  const Vector wb = (2.0 / nb) * rba.alpha_bc.array().square() * rb.r.array();
  scale_rows(rp.partial, wp);
  scale_rows(rb.partial, wb);
  NetworkGradient grad = pde_tape.backward(rp.partial);
  const NetworkGradient gb = bc_tape.backward(rb.partial);
  for (std::size_t l = 0; l < grad.layers.size(); ++l) {
    auto add = [](std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(grad.layers[l].r, gb.layers[l].r);
    add(grad.layers[l].c, gb.layers[l].c);
    add(grad.layers[l].b, gb.layers[l].b);
  }
  out.r_pde = std::move(rp.r);
  out.r_bc = std::move(rb.r);
  return {std::move(out), std::move(grad)};
}

// ---------------------------------------------------------------- reference grids

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(std::string cell, const std::string& path, int line) {
  while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
  std::size_t start = 0;
  while (start < cell.size() && cell[start] == ' ') ++start;
  cell = cell.substr(start);
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
    fail(Errc::malformed_file, path + ":" + std::to_string(line) + ": '" + cell + "' is not a finite number");
  }
  return v;
}

void check_increasing(const std::vector<double>& v, const std::string& what, const std::string& path) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) fail(Errc::non_monotone_coordinates, path + ": " + what + " coordinates are not increasing");
  }
}

}  // namespace

ReferenceGrid load_reference_solution(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::file_not_found, "cannot open reference solution '" + path + "'");
  ReferenceGrid g;
  std::string line;
  int lineno = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (lineno == 1) {
      if (cells.size() < 2 || !cells[0].empty()) {
        fail(Errc::malformed_file, path + ": header must be an empty cell followed by x coordinates");
      }
      for (std::size_t j = 1; j < cells.size(); ++j) g.x.push_back(parse_number(cells[j], path, lineno));
      continue;
    }
    if (cells.size() != g.x.size() + 1) {
      fail(Errc::malformed_file, path + ":" + std::to_string(lineno) + ": expected " + std::to_string(g.x.size() + 1) +
                                     " cells, found " + std::to_string(cells.size()));
    }
    g.t.push_back(parse_number(cells[0], path, lineno));
    std::vector<double> row;
    for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(parse_number(cells[j], path, lineno));
    rows.push_back(std::move(row));
  }
  if (g.x.empty() || rows.empty()) fail(Errc::malformed_file, path + ": no grid data");
  check_increasing(g.x, "x", path);
  check_increasing(g.t, "t", path);
  g.u.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(g.x.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < g.x.size(); ++j) g.u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return g;
}

void save_reference_solution(const std::string& path, const ReferenceGrid& grid) {
  std::ofstream out(path);
  if (!out) fail(Errc::file_not_found, "cannot write '" + path + "'");
  out.precision(17);
  for (double x : grid.x) out << ',' << x;
  out << '\n';
  for (std::size_t i = 0; i < grid.t.size(); ++i) {
    out << grid.t[i];
    for (std::size_t j = 0; j < grid.x.size(); ++j) out << ',' << grid.u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out << '\n';
  }
}

Batch reference_points(PdeKind kind, const ReferenceGrid& grid) {
  Batch pts(static_cast<Eigen::Index>(grid.t.size() * grid.x.size()), 2);
  Eigen::Index row = 0;
  for (double t : grid.t) {
    for (double x : grid.x) {
      pts(row, 0) = time_dependent(kind) ? 2.0 * t - 1.0 : t;
      pts(row, 1) = x;
      ++row;
    }
  }
  return pts;
}

Vector reference_values(const ReferenceGrid& grid) {
  Vector v(grid.u.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < grid.u.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.u.cols(); ++j) v(k++) = grid.u(i, j);
  }
  return v;
}

ReferenceGrid helmholtz_reference_grid(int n, const PdeCoefficients& coef) {
  ReferenceGrid g;
  g.t = linspace(-1.0, 1.0, n);  // first coordinate (x) runs along rows
  g.x = g.t;
  g.u.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      g.u(i, j) = std::sin(kPi * coef.a1 * g.t[static_cast<std::size_t>(i)]) * std::sin(kPi * coef.a2 * g.x[static_cast<std::size_t>(j)]);
    }
  }
  return g;
}

// ---------------------------------------------------------------- training

PdeTrainResult train_pde(KanNetwork& net, const PdeProblem& problem, int epochs, std::uint64_t seed,
                         const PdeTrainOptions& options) {
  if (epochs < 0) fail(Errc::invalid_config, "epochs must be non-negative");
  if (net.input_dim() != 2 || net.output_dim() != 1) fail(Errc::dimension_mismatch, "PDE networks map 2 inputs to 1 output");
  const auto start = std::chrono::steady_clock::now();
  PdeTrainResult res;
  TrainRecord& rec = res.record;
  rec.spec.task = pde_name(problem.kind);
  rec.spec.widths = net.widths();
  rec.spec.grid = net.layers.front().kv.intervals();
  rec.spec.spline_order = net.layers.front().kv.order();
  rec.spec.seed = seed;
  rec.spec.epochs = epochs;
  rec.loss_history.reserve(static_cast<std::size_t>(epochs));

  res.rba = make_rba(problem);
  res.min_alpha = 1.0;
  res.max_alpha = 1.0;
  auto theta = pack_parameters(net);
  AdamState adam = make_adam(theta.size(), options.lr);
  if (options.on_epoch) options.on_epoch(0, net, res.rba);
  for (int e = 0; e <= epochs; ++e) {
    std::pair<PimlLoss, NetworkGradient> lg;
    try {
      lg = piml_loss_and_gradient(problem, net, res.rba);
    } catch (const Error& err) {
      if (err.code() != Errc::non_finite_loss && err.code() != Errc::non_finite_residual &&
          err.code() != Errc::non_finite_input) {
        throw;
      }
      rec.diverged = true;
      break;
    }
    if (e == 0) {
      rec.initial_loss = lg.first.loss;
    } else {
      rec.loss_history.push_back(lg.first.loss);
      if (options.on_epoch) options.on_epoch(e, net, res.rba);
    }
    if (e == epochs) break;
    try {
      adam_step(theta, lg.second.flatten(), adam);
    } catch (const Error& err) {
      if (err.code() != Errc::non_finite_gradient) throw;
      rec.diverged = true;
      break;
    }
    unpack_parameters(net, theta);
    rba_update(res.rba, lg.first.r_pde, lg.first.r_bc);
    res.min_alpha = std::min({res.min_alpha, res.rba.alpha_pde.minCoeff(), res.rba.alpha_bc.minCoeff()});
    res.max_alpha = std::max({res.max_alpha, res.rba.alpha_pde.maxCoeff(), res.rba.alpha_bc.maxCoeff()});
  }
  rec.final_loss = rec.loss_history.empty() ? rec.initial_loss : rec.loss_history.back();
  rec.rel_l2 = std::numeric_limits<double>::quiet_NaN();
  if (rec.diverged) {
    rec.final_loss = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::optional<ReferenceGrid> ref = options.reference;
    if (problem.kind == PdeKind::helmholtz && !ref) ref = helmholtz_reference_grid(options.helmholtz_grid, problem.coef);
    if (ref) {
      const Batch pts = reference_points(problem.kind, *ref);
      rec.rel_l2 = relative_l2(network_forward(net, pts).col(0), reference_values(*ref));
    }
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

PdeTrainResult run_pde(const RunSpec& spec, const InitOptions& init, PdeTrainOptions options) {
  const PdeKind kind = parse_pde(spec.task);
  if (spec.widths.size() < 2 || spec.widths.front() != 2 || spec.widths.back() != 1) {
    fail(Errc::invalid_config, "PDE widths must run from 2 to 1");
  }
  KanNetwork net = make_network(spec.widths, spec.grid, spec.spline_order);
  initialize(net, spec.scheme, spec.seed, init);
  const PdeProblem problem = make_pde_problem(kind, spec.seed);
  PdeTrainResult res = train_pde(net, problem, spec.epochs, spec.seed, options);
  res.record.spec = spec;
  res.record.fingerprint = fingerprint(spec);
  return res;
}

}  // namespace kanlab
