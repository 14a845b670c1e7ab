#pragma once

#include "kanlab/common.hpp"
#include "kanlab/spline.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace kanlab {

double silu(double x) noexcept;
double silu_prime(double x) noexcept;

/// R, R', R'', R''' at x.
std::array<double, 4> silu_derivatives(double x) noexcept;

inline constexpr double kDefaultNormEps = 1e-5;

/// One layer y_j = sum_i ( r_ji R(x_i) + c_ji sum_m b_jim B_m(x_i) ).
/// r and c are row-major [n_out x n_in]; b is [n_out x n_in x (G+k)].
struct KanLayer {
  KanLayer(int n_in, int n_out, KnotVector kv, bool normalized_basis = false,
           double norm_eps = kDefaultNormEps);

  int n_in;
  int n_out;
  KnotVector kv;
  std::vector<double> r;
  std::vector<double> c;
  std::vector<double> b;
  bool normalized_basis;
  double norm_eps;

  [[nodiscard]] int basis_count() const noexcept { return kv.basis_count(); }
  [[nodiscard]] std::size_t edge(int j, int i) const noexcept {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_in) + static_cast<std::size_t>(i);
  }
  [[nodiscard]] std::size_t basis_index(int j, int i, int m) const noexcept {
    return edge(j, i) * static_cast<std::size_t>(basis_count()) + static_cast<std::size_t>(m);
  }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return r.size() + c.size() + b.size(); }

  /// Throws shape_mismatch / non_finite_input when the invariants break.
  void validate() const;
};

struct KanNetwork {
  std::vector<KanLayer> layers;

  [[nodiscard]] int input_dim() const { return layers.front().n_in; }
  [[nodiscard]] int output_dim() const { return layers.back().n_out; }
  [[nodiscard]] std::size_t parameter_count() const noexcept;
  [[nodiscard]] std::vector<int> widths() const;
  [[nodiscard]] bool has_normalized_basis() const noexcept;
  void validate() const;
};

/// Builds a network with widths[0] inputs and one layer per consecutive pair,
/// every layer on knots(lo, hi, G, k). Weights start at zero.
KanNetwork make_network(std::span<const int> widths, int grid_intervals, int spline_order,
                        double domain_lo = -1.0, double domain_hi = 1.0, bool normalized_basis = false);

/// Per-(input, basis) batch statistics of a normalized-basis layer.
struct BasisStats {
  std::vector<double> mean;     // [n_in x (G+k)]
  std::vector<double> inv_std;  // 1 / sqrt(var + eps)
};

/// Standardizes every column over the batch: (B - mean) / sqrt(var + eps),
/// population variance. Needs at least two rows.
Batch normalized_basis_values(const Batch& raw, double eps = kDefaultNormEps);

Batch layer_forward(const KanLayer& layer, const Batch& x, const BasisStats* frozen_stats = nullptr);
Batch network_forward(const KanNetwork& net, const Batch& x);

// ---------------------------------------------------------------- derivatives

/// Which input derivatives to carry alongside the forward pass: d/dx_d for
/// every d in `dims`, and d^2/dx_d^2 when `second` is set.
struct DerivativeRequest {
  std::vector<int> dims;
  bool second = false;
};

/// Forward-mode jet of a batch: values plus the requested directional
/// derivatives, each [N x width].
struct Jet {
  Batch value;
  std::vector<Batch> first;
  std::vector<Batch> second;

  /// Same shapes, all zeros.
  [[nodiscard]] Jet zeros_like() const;
};

/// Network outputs and their input derivatives. With normalized-basis layers
/// the batch statistics are held fixed when differentiating a sample's output
/// with respect to that sample's inputs.
Jet input_derivatives(const KanNetwork& net, const Batch& x, const DerivativeRequest& request);

/// Gradient of a scalar loss with respect to every r, c and b, mirroring the
/// network's layer structure.
struct NetworkGradient {
  struct Layer {
    std::vector<double> r;
    std::vector<double> c;
    std::vector<double> b;
  };
  std::vector<Layer> layers;

  /// Flattened in parameter order (see pack_parameters).
  [[nodiscard]] std::vector<double> flatten() const;
};

/// A scalar loss of the output jet and its adjoint (d loss / d jet entries).
struct LossValue {
  double loss = 0.0;
  Jet adjoint;
};
using JetLoss = std::function<LossValue(const Jet& outputs)>;

namespace detail {
struct LayerCache {
  int max_derivative = 0;   // derivatives kept per basis entry
  std::vector<int> band;    // first basis index per (s, i); INT_MIN when empty
  std::vector<double> ders; // [(s, i), p, r] banded basis derivatives
  std::vector<double> silu; // [(s, i), p] R^(p)
  BasisStats stats;         // used when the layer normalizes its basis
  bool batch_stats = false; // stats depend on this batch (gradients flow)
};
}  // namespace detail

/// Recorded forward pass; replayed backwards for any output adjoint.
class ForwardTape {
 public:
  ForwardTape(const KanNetwork& net, const Batch& x, const DerivativeRequest& request);

  [[nodiscard]] const Jet& outputs() const noexcept { return outputs_; }
  [[nodiscard]] const KanNetwork& network() const noexcept { return *net_; }

  /// Reverse pass. `adjoint` has the shape of outputs(); rows that are
  /// entirely zero are skipped.
  [[nodiscard]] NetworkGradient backward(const Jet& adjoint) const;

 private:
  const KanNetwork* net_;
  DerivativeRequest request_;
  std::vector<Jet> inputs_;  // jet entering each layer
  std::vector<detail::LayerCache> caches_;
  Jet outputs_;
};

/// Loss and its parameter gradient. Throws non_finite_loss.
std::pair<double, NetworkGradient> value_and_gradients(const KanNetwork& net, const JetLoss& loss,
                                                       const Batch& x, const DerivativeRequest& request = {});

NetworkGradient parameter_gradients(const KanNetwork& net, const JetLoss& loss, const Batch& x,
                                    const DerivativeRequest& request = {});

/// Mean squared error of the output values against `target`.
JetLoss mse_jet_loss(const Batch& target);

// ---------------------------------------------------------------- parameters

/// Parameter order: layer by layer; r (row-major j,i), then c, then b (j,i,m).
std::vector<double> pack_parameters(const KanNetwork& net);
void unpack_parameters(KanNetwork& net, std::span<const double> theta);

}  // namespace kanlab
