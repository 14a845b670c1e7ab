#pragma once

#include "kanlab/init.hpp"
#include "kanlab/optim.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace kanlab {

/// A sweep over tasks, architectures and schemes. Power-law expands over
/// alphas x betas and runs with power_law_seeds; every other scheme runs with
/// seeds.
struct GridSearchConfig {
  std::vector<std::string> tasks;
  std::vector<int> depths;  // hidden layers
  std::vector<int> widths;  // hidden width
  std::vector<int> grids;
  std::vector<std::string> schemes;
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> power_law_seeds;
  int epochs = 2000;
  int spline_order = 3;
  double lr = 1e-3;

  /// Throws invalid_config on empty lists, repeated seeds or unknown names.
  void validate() const;
};

/// Input count of a fit task or PDE name; throws unknown_id.
int task_input_dim(const std::string& task);

/// Every run of the sweep, in a fixed order.
std::vector<RunSpec> expand_runs(const GridSearchConfig& config);
std::size_t predicted_row_count(const GridSearchConfig& config);

struct ResultRow {
  std::string task;
  int depth = 0;
  int width = 0;
  int grid = 0;
  std::string scheme;
  double alpha = 0.0;  // NaN unless power-law
  double beta = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double rel_l2 = 0.0;
  bool diverged = false;
  double wall_time_s = 0.0;
};

inline constexpr const char* kResultsHeader =
    "task,depth,width,G,scheme,alpha,beta,seed,final_loss,rel_l2,diverged,wall_time_s";

ResultRow make_row(const RunSpec& spec, const TrainRecord& record);
/// The spec a row came from, given the sweep's epochs and spline order.
RunSpec row_spec(const ResultRow& row, int epochs, int spline_order);

std::string format_row(const ResultRow& row);
ResultRow parse_row(const std::string& line);
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
/// Throws file_not_found, malformed_file.
std::vector<ResultRow> read_results_csv(const std::string& path);

/// Trains one run of a fit task or PDE.
TrainRecord run_any(const RunSpec& spec, double lr = 1e-3);

struct GridOptions {
  int threads = 0;  // 0: KANLAB_THREADS, else the hardware concurrency
  /// Replaces run_any, e.g. in tests.
  std::function<TrainRecord(const RunSpec&)> runner;
  std::function<void(const ResultRow&, std::size_t done, std::size_t total)> on_row;
};

/// Runs every spec of the sweep not already present in `results_path` and
/// appends one row per run. Returns all rows of the file afterwards.
std::vector<ResultRow> run_grid(const GridSearchConfig& config, const std::string& results_path,
                                const GridOptions& options = {});

/// Worker count from KANLAB_THREADS, defaulting to the hardware concurrency.
int default_thread_count();

struct MedianRow {
  std::string task;
  int depth = 0;
  int width = 0;
  int grid = 0;
  std::string scheme;
  double alpha = 0.0;
  double beta = 0.0;
  int seeds = 0;
  double final_loss = 0.0;
  double rel_l2 = 0.0;
};

/// Lower median (element (n-1)/2 of the sorted values, NaN last).
double lower_median(std::vector<double> values);

/// Component-wise medians per configuration. `expected_seeds(row)` gives the
/// seed count a complete configuration must have; throws incomplete_seed_set.
std::vector<MedianRow> aggregate_median(const std::vector<ResultRow>& rows,
                                        const std::function<std::size_t(const ResultRow&)>& expected_seeds);
/// Seed counts taken from the config.
std::vector<MedianRow> aggregate_median(const std::vector<ResultRow>& rows, const GridSearchConfig& config);

/// One power-law row per (task, depth, width, G): lowest final loss, then
/// lowest rel_l2, then lexicographically smallest (alpha, beta).
std::vector<MedianRow> best_power_law(const std::vector<MedianRow>& medians);

struct ComparisonRow {
  std::string task;
  std::string scheme;
  int settings = 0;
  double loss_pct = 0.0;
  double l2_pct = 0.0;
  double both_pct = 0.0;
};

/// Per (task, scheme), the percentage of settings whose median beats the
/// baseline median strictly, on loss, on rel_l2, and on both. Power-law
/// enters through best_power_law. Throws missing_baseline.
std::vector<ComparisonRow> compare_vs_baseline(const std::vector<MedianRow>& medians);

void write_medians_csv(const std::string& path, const std::vector<MedianRow>& rows);
void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows);

}  // namespace kanlab
