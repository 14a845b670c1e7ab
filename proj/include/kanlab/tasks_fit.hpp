#pragma once

#include "kanlab/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kanlab {

/// A function-fitting target on [-1, 1]^d.
struct FitTask {
  std::string id;           // f1..f5 or a Feynman index such as "I.6.2"
  int input_dim = 2;
  bool feynman = false;     // punctured domain: coordinates avoid -1, 0, 1
  int n_train = 4000;
  int grid_per_axis = 200;  // evaluation grid resolution
  double grid_margin = 0.0; // evaluation grid spans [-1 + margin, 1 - margin]
};

inline constexpr double kFeynmanExclusion = 1e-9;
inline constexpr double kFeynmanGridMargin = 1e-3;

/// f1..f5 followed by the 20 Feynman ids.
std::vector<std::string> fit_task_ids();
std::vector<std::string> feynman_task_ids();

/// Throws unknown_id.
FitTask make_fit_task(const std::string& id);

/// Target values, one per row. Throws singular_input where the formula is not
/// finite, dimension_mismatch on the wrong width.
Vector eval_target(const FitTask& task, const Batch& points);
double eval_target(const FitTask& task, const double* point);

/// n_train uniform draws; Feynman tasks redraw coordinates within 1e-9 of -1, 0, 1.
Batch sample_inputs(const FitTask& task, std::uint64_t seed);

/// Tensor-product evaluation grid, last coordinate fastest. f-tasks use an
/// inclusive linspace; Feynman tasks use cell centres of [-1+1e-3, 1-1e-3].
Batch eval_grid_points(const FitTask& task);

}  // namespace kanlab
