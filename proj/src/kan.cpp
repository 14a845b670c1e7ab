#include "kanlab/kan.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kanlab {

namespace {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double silu(double x) noexcept { return x * sigmoid(x); }

double silu_prime(double x) noexcept {
  const double s = sigmoid(x);
  return s + x * (s * (1.0 - s));
}

std::array<double, 4> silu_derivatives(double x) noexcept {
  const double s = sigmoid(x);
  const double ds = s * (1.0 - s);
  const double u = 1.0 - 2.0 * s;
  return {x * s, s + x * ds, ds * (2.0 + x * u), ds * (u * (3.0 + x * u) - 2.0 * x * ds)};
}

KanLayer::KanLayer(int n_in_, int n_out_, KnotVector kv_, bool normalized_basis_, double norm_eps_)
    : n_in(n_in_), n_out(n_out_), kv(std::move(kv_)), normalized_basis(normalized_basis_), norm_eps(norm_eps_) {
  if (n_in < 1 || n_out < 1) fail(Errc::invalid_size, "layer dimensions must be positive");
  const auto edges = static_cast<std::size_t>(n_in) * static_cast<std::size_t>(n_out);
  r.assign(edges, 0.0);
  c.assign(edges, 0.0);
  b.assign(edges * static_cast<std::size_t>(kv.basis_count()), 0.0);
}

void KanLayer::validate() const {
  const auto edges = static_cast<std::size_t>(n_in) * static_cast<std::size_t>(n_out);
  if (r.size() != edges || c.size() != edges || b.size() != edges * static_cast<std::size_t>(basis_count())) {
    fail(Errc::shape_mismatch, "layer weight arrays do not match n_in, n_out, G+k");
  }
  for (const auto* w : {&r, &c, &b}) {
    for (double v : *w) {
      if (!std::isfinite(v)) fail(Errc::non_finite_input, "layer weight is not finite");
    }
  }
  if (!(norm_eps > 0.0)) fail(Errc::invalid_size, "norm_eps must be positive");
}

std::size_t KanNetwork::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const auto& layer : layers) total += layer.parameter_count();
  return total;
}

std::vector<int> KanNetwork::widths() const {
  std::vector<int> out;
  if (layers.empty()) return out;
  out.push_back(layers.front().n_in);
  for (const auto& layer : layers) out.push_back(layer.n_out);
  return out;
}

bool KanNetwork::has_normalized_basis() const noexcept {
  for (const auto& layer : layers) {
    if (layer.normalized_basis) return true;
  }
  return false;
}

void KanNetwork::validate() const {
  if (layers.empty()) fail(Errc::invalid_size, "network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate();
    if (l + 1 < layers.size() && layers[l].n_out != layers[l + 1].n_in) {
      fail(Errc::dimension_mismatch, "layer " + std::to_string(l) + " n_out does not match the next n_in");
    }
  }
}

KanNetwork make_network(std::span<const int> widths, int grid_intervals, int spline_order, double domain_lo,
                        double domain_hi, bool normalized_basis) {
  if (widths.size() < 2) fail(Errc::invalid_size, "a network needs at least an input and an output width");
  const KnotVector kv(domain_lo, domain_hi, grid_intervals, spline_order);
  KanNetwork net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    net.layers.emplace_back(widths[l], widths[l + 1], kv, normalized_basis);
  }
  return net;
}

Batch normalized_basis_values(const Batch& raw, double eps) {
  const auto n = raw.rows();
  if (n < 2) fail(Errc::batch_too_small, "batch normalization needs at least two samples");
  Batch out(n, raw.cols());
  for (Eigen::Index col = 0; col < raw.cols(); ++col) {
    const double mean = raw.col(col).mean();
    const double var = (raw.col(col).array() - mean).square().mean();
    out.col(col) = (raw.col(col).array() - mean) / std::sqrt(var + eps);
  }
  return out;
}

Jet Jet::zeros_like() const {
  Jet out;
  out.value = Batch::Zero(value.rows(), value.cols());
  for (const auto& f : first) out.first.push_back(Batch::Zero(f.rows(), f.cols()));
  for (const auto& s : second) out.second.push_back(Batch::Zero(s.rows(), s.cols()));
  return out;
}

std::vector<double> NetworkGradient::flatten() const {
  std::vector<double> out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.r.begin(), layer.r.end());
    out.insert(out.end(), layer.c.begin(), layer.c.end());
    out.insert(out.end(), layer.b.begin(), layer.b.end());
  }
  return out;
}

std::vector<double> pack_parameters(const KanNetwork& net) {
  std::vector<double> out;
  out.reserve(net.parameter_count());
  for (const auto& layer : net.layers) {
    out.insert(out.end(), layer.r.begin(), layer.r.end());
    out.insert(out.end(), layer.c.begin(), layer.c.end());
    out.insert(out.end(), layer.b.begin(), layer.b.end());
  }
  return out;
}

void unpack_parameters(KanNetwork& net, std::span<const double> theta) {
  if (theta.size() != net.parameter_count()) {
    fail(Errc::shape_mismatch, "parameter vector has " + std::to_string(theta.size()) + " entries, network needs " +
                                   std::to_string(net.parameter_count()));
  }
  auto it = theta.begin();
  for (auto& layer : net.layers) {
    for (auto* w : {&layer.r, &layer.c, &layer.b}) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(w->size()), w->begin());
      it += static_cast<std::ptrdiff_t>(w->size());
    }
  }
}

JetLoss mse_jet_loss(const Batch& target) {
  return [target](const Jet& out) {
    if (out.value.rows() != target.rows() || out.value.cols() != target.cols()) {
      fail(Errc::shape_mismatch, "MSE target shape differs from network output");
    }
    LossValue lv;
    const Batch diff = out.value - target;
    const double count = static_cast<double>(diff.size());
    lv.loss = diff.squaredNorm() / count;
    lv.adjoint = out.zeros_like();
    lv.adjoint.value = (2.0 / count) * diff;
    return lv;
  };
}

}  // namespace kanlab
