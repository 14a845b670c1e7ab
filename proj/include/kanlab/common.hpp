#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <string_view>

namespace kanlab {

/// Samples are rows, features are columns.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Errc {
  invalid_domain,
  invalid_size,
  unsupported_order,
  empty_batch,
  non_finite_input,
  batch_too_small,
  dimension_mismatch,
  non_finite_loss,
  bad_sample_count,
  zero_moment,
  shape_mismatch,
  non_finite_gradient,
  zero_reference,
  domain_error,
  singular_input,
  malformed_file,
  non_monotone_coordinates,
  file_not_found,
  non_finite_residual,
  non_convergence,
  incomplete_seed_set,
  missing_baseline,
  invalid_config,
  unknown_id,
};

std::string_view to_string(Errc code) noexcept;

/// The single exception type thrown by the library; `code()` tells callers
/// which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace kanlab
