#include "kanlab/ntk.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <random>

namespace kanlab {

Matrix residual_jacobian(const KanNetwork& net, const ResidualFn& residual, const Batch& points,
                         const DerivativeRequest& request) {
  const ForwardTape tape(net, points, request);
  const ResidualJet rj = residual(tape.outputs());
  if (!rj.r.allFinite()) fail(Errc::non_finite_residual, "residual is not finite");
  const Eigen::Index n = rj.r.size();
  Matrix jac(n, static_cast<Eigen::Index>(net.parameter_count()));
  Jet adj = rj.partial.zeros_like();
  // One residual at a time; backward skips every all-zero row.
  auto set_row = [&](Eigen::Index s, bool on) {
    auto copy = [&](Batch& dst, const Batch& src) {
      if (on) {
        dst.row(s) = src.row(s);
      } else {
        dst.row(s).setZero();
      }
    };
    copy(adj.value, rj.partial.value);
    for (std::size_t d = 0; d < adj.first.size(); ++d) copy(adj.first[d], rj.partial.first[d]);
    for (std::size_t d = 0; d < adj.second.size(); ++d) copy(adj.second[d], rj.partial.second[d]);
  };
  for (Eigen::Index s = 0; s < n; ++s) {
    if (s > 0) set_row(s - 1, false);
    set_row(s, true);
    const auto g = tape.backward(adj).flatten();
    jac.row(s) = Eigen::Map<const Eigen::RowVectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  }
  return jac;
}

Matrix output_jacobian(const KanNetwork& net, const Batch& points) {
  if (net.output_dim() != 1) fail(Errc::dimension_mismatch, "kernel needs a scalar-output network");
  return residual_jacobian(net, [](const Jet& out) {
    ResidualJet rj;
    rj.r = out.value.col(0);
    rj.partial = out.zeros_like();
    rj.partial.value.setOnes();
    return rj;
  }, points);
}

Matrix pde_jacobian(const PdeProblem& problem, const KanNetwork& net, const Batch& points) {
  return residual_jacobian(
      net, [&](const Jet& out) { return pde_residual_jet(problem, out, points); }, points, pde_request(problem.kind));
}

Matrix bc_jacobian(const PdeProblem& problem, const KanNetwork& net) {
  return residual_jacobian(net, [&](const Jet& out) { return bc_residual_jet(problem, out); }, problem.bc_points);
}

Matrix NtkBlocks::assembled() const {
  const Eigen::Index np = pde_pde.rows();
  const Eigen::Index nb = bc_bc.rows();
  Matrix k(np + nb, np + nb);
  k.topLeftCorner(np, np) = pde_pde;
  k.topRightCorner(np, nb) = pde_bc;
  k.bottomLeftCorner(nb, np) = bc_pde;
  k.bottomRightCorner(nb, nb) = bc_bc;
  return k;
}

NtkBlocks weighted_ntk_blocks(const Matrix& j_pde, const Matrix& j_bc, const Vector& alpha_pde, const Vector& alpha_bc) {
  if (j_pde.cols() != j_bc.cols()) fail(Errc::dimension_mismatch, "Jacobians have different parameter counts");
  if (alpha_pde.size() != j_pde.rows() || alpha_bc.size() != j_bc.rows()) {
    fail(Errc::dimension_mismatch, "RBA weights do not match the Jacobian rows");
  }
  const Matrix wp = alpha_pde.asDiagonal() * j_pde;
  const Matrix wb = alpha_bc.asDiagonal() * j_bc;
  NtkBlocks k;
  k.pde_pde = wp * wp.transpose();
  k.pde_bc = wp * wb.transpose();
  k.bc_pde = k.pde_bc.transpose();
  k.bc_bc = wb * wb.transpose();
  return k;
}

Matrix fit_ntk(const KanNetwork& net, const Batch& points) {
  const Matrix j = output_jacobian(net, points);
  return j * j.transpose();
}

std::vector<int> subsample_indices(int n, int count, std::uint64_t seed) {
  if (n < 0 || count < 0) fail(Errc::invalid_size, "subsample sizes must be non-negative");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::min(n, count)));
  return idx;
}

Batch take_rows(const Batch& x, const std::vector<int>& rows) {
  Batch out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) fail(Errc::invalid_size, "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  return out;
}

EigenDecomposition symmetric_eigen(const Matrix& k) {
  if (k.rows() != k.cols()) fail(Errc::shape_mismatch, "kernel matrix is not square");
  const Matrix sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) fail(Errc::non_convergence, "symmetric eigensolver did not converge");
  // Eigen sorts ascending
  EigenDecomposition out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

std::string block_name(NtkBlock block) {
  switch (block) {
    case NtkBlock::fit: return "fit";
    case NtkBlock::pde: return "pde";
    case NtkBlock::bc: return "bc";
    case NtkBlock::full: return "full";
  }
  return "";
}

NtkBlock parse_block(const std::string& name) {
  for (auto b : {NtkBlock::fit, NtkBlock::pde, NtkBlock::bc, NtkBlock::full}) {
    if (block_name(b) == name) return b;
  }
  fail(Errc::unknown_id, "unknown kernel block '" + name + "'");
}

NtkSpectrum eigen_spectrum(const Matrix& k, int iteration, NtkBlock block) {
  const EigenDecomposition ed = symmetric_eigen(k);
  NtkSpectrum s;
  s.iteration = iteration;
  s.block = block;
  s.eigenvalues.assign(ed.values.data(), ed.values.data() + ed.values.size());
  return s;
}

std::vector<int> ntk_log_iterations(int epochs) {
  if (epochs < 0) fail(Errc::invalid_config, "epochs must be non-negative");
  std::vector<int> out;
  for (int q = 0; q <= 4; ++q) out.push_back(static_cast<int>(static_cast<long long>(epochs) * q / 4));
  return out;
}

NtkRunResult run_ntk(const RunSpec& spec, const InitOptions& init, double lr) {
  NtkRunResult res;
  const auto log_at = ntk_log_iterations(spec.epochs);
  auto due = [&](int epoch) { return std::find(log_at.begin(), log_at.end(), epoch) != log_at.end(); };
  const auto fit_ids = fit_task_ids();
  if (std::find(fit_ids.begin(), fit_ids.end(), spec.task) != fit_ids.end()) {
    const FitTask task = make_fit_task(spec.task);
    const Batch sub = take_rows(sample_inputs(task, spec.seed), subsample_indices(task.n_train, kNtkSubsample, spec.seed));
    TrainOptions opt;
    opt.lr = lr;
    opt.on_epoch = [&](int epoch, const KanNetwork& net) {
      if (due(epoch)) res.spectra.push_back(eigen_spectrum(fit_ntk(net, sub), epoch, NtkBlock::fit));
    };
    res.record = run_fit(spec, init, opt);
    return res;
  }
  const PdeKind kind = parse_pde(spec.task);
  const PdeProblem problem = make_pde_problem(kind, spec.seed);
  const auto rows = subsample_indices(static_cast<int>(problem.collocation.rows()), kNtkSubsample, spec.seed);
  const Batch sub = take_rows(problem.collocation, rows);
  PdeTrainOptions opt;
  opt.lr = lr;
  opt.on_epoch = [&](int epoch, const KanNetwork& net, const RbaState& rba) {
    if (!due(epoch)) return;
    Vector alpha_sub(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) alpha_sub(static_cast<Eigen::Index>(i)) = rba.alpha_pde(rows[i]);
    const NtkBlocks k =
        weighted_ntk_blocks(pde_jacobian(problem, net, sub), bc_jacobian(problem, net), alpha_sub, rba.alpha_bc);
    res.spectra.push_back(eigen_spectrum(k.pde_pde, epoch, NtkBlock::pde));
    res.spectra.push_back(eigen_spectrum(k.bc_bc, epoch, NtkBlock::bc));
    res.spectra.push_back(eigen_spectrum(k.assembled(), epoch, NtkBlock::full));
  };
  res.record = run_pde(spec, init, opt).record;
  return res;
}

}  // namespace kanlab
