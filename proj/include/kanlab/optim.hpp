#pragma once

#include "kanlab/init.hpp"
#include "kanlab/kan.hpp"
#include "kanlab/tasks_fit.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kanlab {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(std::size_t n_params, double lr = 1e-3);

/// One bias-corrected Adam update in place. Throws shape_mismatch and
/// non_finite_gradient (params untouched in that case).
void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state);

/// Mean of squared differences over all entries; shape_mismatch otherwise.
double mse_loss(const Batch& pred, const Batch& target);

/// ||pred - ref|| / ||ref||; zero_reference when ||ref|| = 0.
double relative_l2(const Vector& pred, const Vector& ref);

/// Coordinates identifying one training run.
struct RunSpec {
  std::string task;
  std::vector<int> widths;
  int grid = 5;
  int spline_order = 3;
  InitScheme scheme = Baseline{};
  std::uint64_t seed = 0;
  int epochs = 0;
};

/// Canonical text form of a RunSpec; fingerprint() is its 64-bit FNV-1a hash in hex.
std::string canonical_string(const RunSpec& spec);
std::string fingerprint(const RunSpec& spec);
/// 64-bit FNV-1a of arbitrary text as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

struct TrainRecord {
  RunSpec spec;
  std::string fingerprint;
  double initial_loss = 0.0;
  std::vector<double> loss_history;  // after each epoch's update
  double final_loss = 0.0;
  double rel_l2 = 0.0;  // NaN when no reference is available
  bool diverged = false;
  double wall_time_s = 0.0;
};

struct TrainOptions {
  double lr = 1e-3;
  /// Called with the epoch index (0 = before training, e = after e updates).
  std::function<void(int epoch, const KanNetwork& net)> on_epoch;
};

/// Full-batch Adam on task.n_train points drawn with `seed`. The loss history
/// has one entry per epoch; a non-finite loss stops the run with diverged set.
TrainRecord train_fit(KanNetwork& net, const FitTask& task, int epochs, std::uint64_t seed,
                      const TrainOptions& options = {});

/// Builds, initializes and trains the network described by `spec`.
TrainRecord run_fit(const RunSpec& spec, const InitOptions& init = {}, const TrainOptions& options = {});

}  // namespace kanlab
