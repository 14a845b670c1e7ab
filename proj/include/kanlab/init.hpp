#pragma once

#include "kanlab/kan.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace kanlab {

struct UniformInput {
  double lo = -1.0;
  double hi = 1.0;
  [[nodiscard]] double variance() const noexcept { return (hi - lo) * (hi - lo) / 12.0; }
};

/// Second moments of the residual and basis paths under an input law.
struct Moments {
  double mu_r0 = 0.0;  // E[R(x)^2]
  double mu_r1 = 0.0;  // E[R'(x)^2]
  double mu_b0 = 0.0;  // E[B_m(x)^2], averaged over m
  double mu_b1 = 0.0;  // E[B_m'(x)^2], averaged over m
  int n_samples = 0;
  UniformInput input;
};

inline constexpr int kDefaultMomentSamples = 100000;

/// Monte-Carlo moments; n_samples >= 1000 or bad_sample_count.
Moments estimate_moments(const KnotVector& kv, UniformInput input, int n_samples, std::uint64_t seed);

struct Baseline {};
struct LeCunNumerical {};
struct LeCunNormalized {};
struct GlorotInspired {};
struct PowerLaw {
  double alpha = 0.0;
  double beta = 0.0;
};
using InitScheme = std::variant<Baseline, LeCunNumerical, LeCunNormalized, GlorotInspired, PowerLaw>;

/// "baseline", "lecun-numerical", "lecun-normalized", "glorot", "power-law".
std::string scheme_name(const InitScheme& scheme);
/// Inverse of scheme_name; alpha/beta only read for power-law. Throws invalid_config.
InitScheme parse_scheme(const std::string& name, double alpha = 0.0, double beta = 0.0);

/// Exponent grid {0, 0.25, ..., 2}.
std::vector<double> default_exponent_set();

struct Sigmas {
  double r = 0.0;
  double b = 0.0;
};

/// sigma_r = sqrt(var / (n_in T mu_r0)), sigma_b likewise with mu_b0; T = G+k+1.
Sigmas lecun_sigmas(int n_in, int terms, double input_var, double mu_r0, double mu_b0);
/// sigma = sqrt((1/T) * 2 / (n_in mu0 + n_out mu1)) for each path.
Sigmas glorot_sigmas(int n_in, int n_out, int terms, const Moments& m);
/// sigma_r = (1/(n_in T))^alpha, sigma_b = (1/(n_in T))^beta.
Sigmas power_law_sigmas(int n_in, int terms, double alpha, double beta);

/// G + k + 1 for a layer.
inline int basis_terms(const KanLayer& layer) { return layer.kv.intervals() + layer.kv.order() + 1; }

enum class LecunVariant { numerical, normalized };

/// Each apply_* overwrites r, c (= 1), b, and returns the per-layer sigmas it
/// drew from (baseline reports the Glorot sigma of r and 0.1 for b).
std::vector<Sigmas> apply_baseline(KanNetwork& net, std::uint64_t seed);
std::vector<Sigmas> apply_lecun(KanNetwork& net, std::span<const Moments> moments, LecunVariant variant,
                                double input_var, std::uint64_t seed);
/// `terms` overrides G+k+1 for every layer (used to check the MLP limit).
std::vector<Sigmas> apply_glorot(KanNetwork& net, std::span<const Moments> moments, std::uint64_t seed,
                                 std::optional<int> terms = std::nullopt);
std::vector<Sigmas> apply_power_law(KanNetwork& net, double alpha, double beta, std::uint64_t seed);

/// One Moments per layer, all under the same input law; layers sharing a knot
/// vector share the estimate.
std::vector<Moments> layer_moments(const KanNetwork& net, UniformInput input, int n_samples, std::uint64_t seed);

struct InitOptions {
  UniformInput input;
  int moment_samples = kDefaultMomentSamples;
};

/// Seed of the moment-sampling stream used by initialize(); kept apart from
/// the weight stream so weights depend only on the seed.
inline std::uint64_t moment_stream_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

/// Dispatches on the scheme, estimating moments where the scheme needs them.
std::vector<Sigmas> initialize(KanNetwork& net, const InitScheme& scheme, std::uint64_t seed,
                               const InitOptions& options = {});

}  // namespace kanlab
