#include "kanlab/common.hpp"

namespace kanlab {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_domain: return "invalid-domain";
    case Errc::invalid_size: return "invalid-size";
    case Errc::unsupported_order: return "unsupported-order";
    case Errc::empty_batch: return "empty-batch";
    case Errc::non_finite_input: return "non-finite-input";
    case Errc::batch_too_small: return "batch-too-small";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::non_finite_loss: return "non-finite-loss";
    case Errc::bad_sample_count: return "bad-sample-count";
    case Errc::zero_moment: return "zero-moment";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::non_finite_gradient: return "non-finite-gradient";
    case Errc::zero_reference: return "zero-reference";
    case Errc::domain_error: return "domain-error";
    case Errc::singular_input: return "singular-input";
    case Errc::malformed_file: return "malformed-file";
    case Errc::non_monotone_coordinates: return "non-monotone-coordinates";
    case Errc::file_not_found: return "file-not-found";
    case Errc::non_finite_residual: return "non-finite-residual";
    case Errc::non_convergence: return "non-convergence";
    case Errc::incomplete_seed_set: return "incomplete-seed-set";
    case Errc::missing_baseline: return "missing-baseline";
    case Errc::invalid_config: return "invalid-config";
    case Errc::unknown_id: return "unknown-id";
  }
  return "unknown";
}

}  // namespace kanlab
