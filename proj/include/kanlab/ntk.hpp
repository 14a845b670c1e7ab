#pragma once

#include "kanlab/kan.hpp"
#include "kanlab/optim.hpp"
#include "kanlab/tasks_pde.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace kanlab {

/// Maps the output jet of a batch to one residual per row plus its partials.
using ResidualFn = std::function<ResidualJet(const Jet& outputs)>;

/// Row i is d r_i / d theta in pack_parameters order. Throws non_finite_residual.
Matrix residual_jacobian(const KanNetwork& net, const ResidualFn& residual, const Batch& points,
                         const DerivativeRequest& request = {});

/// d y(x_s) / d theta for a scalar-output network (the fit residual y - t has
/// the same Jacobian).
Matrix output_jacobian(const KanNetwork& net, const Batch& points);
Matrix pde_jacobian(const PdeProblem& problem, const KanNetwork& net, const Batch& points);
Matrix bc_jacobian(const PdeProblem& problem, const KanNetwork& net);

/// K^(xi,zeta) = (A^xi J^xi)(A^zeta J^zeta)^T with A = diag(alpha).
struct NtkBlocks {
  Matrix pde_pde;
  Matrix pde_bc;
  Matrix bc_pde;
  Matrix bc_bc;

  /// The blocks assembled into one symmetric matrix, pde rows first.
  [[nodiscard]] Matrix assembled() const;
};

/// Throws dimension_mismatch when parameter counts or weight lengths differ.
NtkBlocks weighted_ntk_blocks(const Matrix& j_pde, const Matrix& j_bc, const Vector& alpha_pde,
                              const Vector& alpha_bc);

/// J J^T over `points`.
Matrix fit_ntk(const KanNetwork& net, const Batch& points);

inline constexpr int kNtkSubsample = 128;

/// `count` distinct indices of [0, n) in seeded random order (all of them when count >= n).
std::vector<int> subsample_indices(int n, int count, std::uint64_t seed);
Batch take_rows(const Batch& x, const std::vector<int>& rows);

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column i belongs to values(i)
};

/// Decomposition of (K + K^T) / 2. Throws non_convergence, shape_mismatch.
EigenDecomposition symmetric_eigen(const Matrix& k);

/// "fit", "pde", "bc", and "full" for the assembled weighted kernel.
enum class NtkBlock { fit, pde, bc, full };
std::string block_name(NtkBlock block);
NtkBlock parse_block(const std::string& name);

struct NtkSpectrum {
  int iteration = 0;
  NtkBlock block = NtkBlock::fit;
  std::vector<double> eigenvalues;  // descending
};

NtkSpectrum eigen_spectrum(const Matrix& k, int iteration = 0, NtkBlock block = NtkBlock::fit);

/// Training iterations at which spectra are logged: 0, 25, 50, 75 and 100 percent.
std::vector<int> ntk_log_iterations(int epochs);

struct NtkRunResult {
  TrainRecord record;
  std::vector<NtkSpectrum> spectra;
};

/// Trains the run described by `spec` (a fit task or a PDE) and records kernel
/// spectra at ntk_log_iterations(spec.epochs). Fit tasks log the kernel over
/// kNtkSubsample training inputs; PDEs log the RBA-weighted pde, bc and full
/// kernels over kNtkSubsample collocation points and every condition point.
NtkRunResult run_ntk(const RunSpec& spec, const InitOptions& init = {}, double lr = 1e-3);

}  // namespace kanlab
