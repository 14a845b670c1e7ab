#pragma once

#include "kanlab/kan.hpp"
#include "kanlab/optim.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kanlab {

enum class PdeKind { allen_cahn, burgers, helmholtz };

/// "allen-cahn", "burgers", "helmholtz".
std::string pde_name(PdeKind kind);
/// Throws unknown_id.
PdeKind parse_pde(const std::string& name);

struct PdeCoefficients {
  double D = 1e-4;  // Allen-Cahn diffusion
  double c = 5.0;   // Allen-Cahn reaction
  double nu = 0.01 / 3.14159265358979323846;
  double a1 = 1.0;  // Helmholtz source frequencies
  double a2 = 4.0;
};

/// A PDE on a 2-d domain with its fixed collocation sets. All point batches
/// hold network coordinates in [-1, 1]^2: (tau, x) with t = (tau + 1) / 2 for
/// the time-dependent problems, (x, y) for Helmholtz.
struct PdeProblem {
  PdeKind kind = PdeKind::helmholtz;
  PdeCoefficients coef;
  Batch collocation;   // N_pde x 2
  Batch bc_points;     // initial and boundary points stacked
  Vector bc_targets;   // u at bc_points
};

/// Collocation: all grid_nodes^2 nodes of the domain grid in seeded random
/// order. Conditions: points_per_condition evenly spaced points along each
/// initial/boundary segment.
PdeProblem make_pde_problem(PdeKind kind, std::uint64_t seed, int grid_nodes = 64, int points_per_condition = 64,
                            const PdeCoefficients& coef = {});

struct RbaState {
  double gamma = 0.999;
  double eta = 0.01;
  Vector alpha_pde;
  Vector alpha_bc;
};

/// All weights 1.
RbaState make_rba(const PdeProblem& problem);

/// alpha <- gamma alpha + eta |r| / max|r| per group; a group whose residuals
/// are all zero only decays. Throws dimension_mismatch.
void rba_update(RbaState& state, const Vector& r_pde, const Vector& r_bc);

double helmholtz_source(double x, double y, const PdeCoefficients& coef = {});
/// sin(pi a1 x) sin(pi a2 y) at each row.
Vector helmholtz_reference(const Batch& points, const PdeCoefficients& coef = {});

/// Residuals at `points` together with d r_s / d (entries of output row s).
struct ResidualJet {
  Vector r;
  Jet partial;
};

/// Derivatives the PDE operator needs from the network.
DerivativeRequest pde_request(PdeKind kind);

/// PDE residual from a network output jet produced with pde_request().
ResidualJet pde_residual_jet(const PdeProblem& problem, const Jet& outputs, const Batch& points);
ResidualJet bc_residual_jet(const PdeProblem& problem, const Jet& outputs);

/// Residual values only. Second derivatives need spline order k >= 2.
Vector pde_residual(const PdeProblem& problem, const KanNetwork& net, const Batch& points);
Vector bc_residuals(const PdeProblem& problem, const KanNetwork& net);

struct PimlLoss {
  double loss = 0.0;
  Vector r_pde;
  Vector r_bc;
};

/// (1/N_pde) sum |alpha r|^2 + (1/N_bc) sum |alpha r|^2. Throws non_finite_residual.
PimlLoss piml_loss(const PdeProblem& problem, const KanNetwork& net, const RbaState& rba);
/// Loss and parameter gradient (the two groups are evaluated as separate batches).
std::pair<PimlLoss, NetworkGradient> piml_loss_and_gradient(const PdeProblem& problem, const KanNetwork& net,
                                                            const RbaState& rba);

/// Reference solution on a rectangular grid: u(i, j) at (t[i], x[j]).
struct ReferenceGrid {
  std::vector<double> x;
  std::vector<double> t;
  Matrix u;
};

/// CSV: first row is an empty cell then x coordinates; every other row is a t
/// coordinate followed by u values. Throws file_not_found, malformed_file,
/// non_monotone_coordinates.
ReferenceGrid load_reference_solution(const std::string& path);
void save_reference_solution(const std::string& path, const ReferenceGrid& grid);

/// Network coordinates of every grid node (t-major) and the matching values.
Batch reference_points(PdeKind kind, const ReferenceGrid& grid);
Vector reference_values(const ReferenceGrid& grid);

/// Analytic Helmholtz solution on an n x n inclusive grid over [-1, 1]^2.
ReferenceGrid helmholtz_reference_grid(int n = 512, const PdeCoefficients& coef = {});

struct PdeTrainOptions {
  double lr = 1e-3;
  /// Used for rel_l2 of Allen-Cahn / Burgers; Helmholtz uses its analytic grid.
  std::optional<ReferenceGrid> reference;
  int helmholtz_grid = 512;
  /// Called at epoch 0 and after each update, with the RBA weights in force.
  std::function<void(int epoch, const KanNetwork& net, const RbaState& rba)> on_epoch;
};

struct PdeTrainResult {
  TrainRecord record;
  RbaState rba;
  double min_alpha = 0.0;  // extremes over the whole run
  double max_alpha = 0.0;
};

/// Full-batch Adam on the PIML loss with an RBA update after every step.
PdeTrainResult train_pde(KanNetwork& net, const PdeProblem& problem, int epochs, std::uint64_t seed,
                         const PdeTrainOptions& options = {});

/// Builds, initializes and trains the network of `spec` (spec.task is a PDE name).
PdeTrainResult run_pde(const RunSpec& spec, const InitOptions& init = {}, PdeTrainOptions options = {});

}  // namespace kanlab
