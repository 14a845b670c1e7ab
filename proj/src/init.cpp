#include "kanlab/init.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <type_traits>

namespace kanlab {

Moments estimate_moments(const KnotVector& kv, UniformInput input, int n_samples, std::uint64_t seed) {
  if (n_samples < 1000) fail(Errc::bad_sample_count, "moment estimation needs at least 1000 samples");
  if (!(input.lo < input.hi)) fail(Errc::invalid_domain, "input law needs lo < hi");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(input.lo, input.hi);
  const int nb = kv.basis_count();
  const int md = std::min(1, kv.order());
  LocalBasis lb;
  double r0 = 0.0, r1 = 0.0, b0 = 0.0, b1 = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const double x = u(rng);
    const double r = silu(x);
    const double rp = silu_prime(x);
    r0 += r * r;
    r1 += rp * rp;
    eval_local_basis(x, kv, md, lb);
    for (int q = 0; q < lb.width; ++q) {
      const int m = lb.first + q;
      if (m < 0 || m >= nb) continue;
      b0 += lb.ders[0][q] * lb.ders[0][q];
      if (md > 0) b1 += lb.ders[1][q] * lb.ders[1][q];
    }
  }
  Moments out;
  out.n_samples = n_samples;
  out.input = input;
  out.mu_r0 = r0 / n_samples;
  out.mu_r1 = r1 / n_samples;
  out.mu_b0 = b0 / (static_cast<double>(n_samples) * nb);
  out.mu_b1 = b1 / (static_cast<double>(n_samples) * nb);
  return out;
}

std::string scheme_name(const InitScheme& scheme) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Baseline>) return "baseline";
        if constexpr (std::is_same_v<T, LeCunNumerical>) return "lecun-numerical";
        if constexpr (std::is_same_v<T, LeCunNormalized>) return "lecun-normalized";
        if constexpr (std::is_same_v<T, GlorotInspired>) return "glorot";
        if constexpr (std::is_same_v<T, PowerLaw>) return "power-law";
      },
      scheme);
}

InitScheme parse_scheme(const std::string& name, double alpha, double beta) {
  if (name == "baseline") return Baseline{};
  if (name == "lecun-numerical" || name == "lecun") return LeCunNumerical{};
  if (name == "lecun-normalized") return LeCunNormalized{};
  if (name == "glorot") return GlorotInspired{};
  if (name == "power-law") {
    if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0) {
      fail(Errc::invalid_config, "power-law exponents must be finite and non-negative");
    }
    return PowerLaw{alpha, beta};
  }
  fail(Errc::invalid_config, "unknown init scheme '" + name + "'");
}

std::vector<double> default_exponent_set() {
  std::vector<double> out;
  for (int i = 0; i <= 8; ++i) out.push_back(0.25 * i);
  return out;
}

Sigmas lecun_sigmas(int n_in, int terms, double input_var, double mu_r0, double mu_b0) {
  if (mu_r0 <= 0.0 || mu_b0 <= 0.0) fail(Errc::zero_moment, "LeCun sigmas need positive mu_R0 and mu_B0");
  const double denom = static_cast<double>(n_in) * terms;
  return {std::sqrt(input_var / (denom * mu_r0)), std::sqrt(input_var / (denom * mu_b0))};
}

Sigmas glorot_sigmas(int n_in, int n_out, int terms, const Moments& m) {
  if (m.mu_r0 <= 0.0 || m.mu_r1 <= 0.0 || m.mu_b0 <= 0.0 || m.mu_b1 <= 0.0) {
    fail(Errc::zero_moment, "Glorot sigmas need all four moments positive");
  }
  const double inv_t = 1.0 / terms;
  return {std::sqrt(inv_t * 2.0 / (n_in * m.mu_r0 + n_out * m.mu_r1)),
          std::sqrt(inv_t * 2.0 / (n_in * m.mu_b0 + n_out * m.mu_b1))};
}

Sigmas power_law_sigmas(int n_in, int terms, double alpha, double beta) {
  const double base = 1.0 / (static_cast<double>(n_in) * terms);
  return {std::pow(base, alpha), std::pow(base, beta)};
}

namespace {

void draw(KanLayer& layer, const Sigmas& s, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double& v : layer.r) v = s.r * unit(rng);
  std::fill(layer.c.begin(), layer.c.end(), 1.0);
  for (double& v : layer.b) v = s.b * unit(rng);
}

void check_moment_count(const KanNetwork& net, std::span<const Moments> moments) {
  if (moments.size() != net.layers.size()) {
    fail(Errc::shape_mismatch, "need one Moments entry per layer");
  }
}

}  // namespace

std::vector<Sigmas> apply_baseline(KanNetwork& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sigmas> out;
  for (auto& layer : net.layers) {
    const Sigmas s{std::sqrt(2.0 / (layer.n_in + layer.n_out)), 0.1};
    draw(layer, s, rng);
    layer.normalized_basis = false;
    out.push_back(s);
  }
  return out;
}

std::vector<Sigmas> apply_lecun(KanNetwork& net, std::span<const Moments> moments, LecunVariant variant,
                                double input_var, std::uint64_t seed) {
  check_moment_count(net, moments);
  std::mt19937_64 rng(seed);
  std::vector<Sigmas> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    const bool normalized = variant == LecunVariant::normalized;
    const double mu_b0 = normalized ? 1.0 : moments[l].mu_b0;
    const Sigmas s = lecun_sigmas(layer.n_in, basis_terms(layer), input_var, moments[l].mu_r0, mu_b0);
    draw(layer, s, rng);
    layer.normalized_basis = normalized;
    out.push_back(s);
  }
  return out;
}

std::vector<Sigmas> apply_glorot(KanNetwork& net, std::span<const Moments> moments, std::uint64_t seed,
                                 std::optional<int> terms) {
  check_moment_count(net, moments);
  std::mt19937_64 rng(seed);
  std::vector<Sigmas> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    const Sigmas s = glorot_sigmas(layer.n_in, layer.n_out, terms.value_or(basis_terms(layer)), moments[l]);
    draw(layer, s, rng);
    layer.normalized_basis = false;
    out.push_back(s);
  }
  return out;
}

std::vector<Sigmas> apply_power_law(KanNetwork& net, double alpha, double beta, std::uint64_t seed) {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) fail(Errc::invalid_config, "power-law exponents must be non-negative");
  std::mt19937_64 rng(seed);
  std::vector<Sigmas> out;
  for (auto& layer : net.layers) {
    const Sigmas s = power_law_sigmas(layer.n_in, basis_terms(layer), alpha, beta);
    draw(layer, s, rng);
    layer.normalized_basis = false;
    out.push_back(s);
  }
  return out;
}

std::vector<Moments> layer_moments(const KanNetwork& net, UniformInput input, int n_samples, std::uint64_t seed) {
  std::vector<Moments> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    bool reused = false;
    for (std::size_t p = 0; p < l && !reused; ++p) {
      if (net.layers[p].kv == net.layers[l].kv) {
        out.push_back(out[p]);
        reused = true;
      }
    }
    if (!reused) out.push_back(estimate_moments(net.layers[l].kv, input, n_samples, seed + l));
  }
  return out;
}

std::vector<Sigmas> initialize(KanNetwork& net, const InitScheme& scheme, std::uint64_t seed,
                               const InitOptions& options) {
  const std::uint64_t moment_seed = moment_stream_seed(seed);
  return std::visit(
      [&](const auto& s) -> std::vector<Sigmas> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Baseline>) {
          return apply_baseline(net, seed);
        } else if constexpr (std::is_same_v<T, PowerLaw>) {
          return apply_power_law(net, s.alpha, s.beta, seed);
        } else {
          const auto moments = layer_moments(net, options.input, options.moment_samples, moment_seed);
          if constexpr (std::is_same_v<T, GlorotInspired>) {
            return apply_glorot(net, moments, seed);
          } else {
            const auto variant = std::is_same_v<T, LeCunNormalized> ? LecunVariant::normalized : LecunVariant::numerical;
            return apply_lecun(net, moments, variant, options.input.variance(), seed);
          }
        }
      },
      scheme);
}

}  // namespace kanlab
