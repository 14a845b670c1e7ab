// Forward-mode jets through KAN layers and the matching reverse pass.
//
// Each edge carries phi(x) = r R(x) + c (sum_m w_m B_m(x) + o), where w = b and
// o = 0 for the raw basis, and w_m = b_m / sigma_m, o = -sum_m w_m mu_m when
// the basis is batch-normalized. The jet recurrences along direction d are
//   y   += phi(x)
//   y'  += phi'(x) x'
//   y'' += phi''(x) x'^2 + phi'(x) x''
// and the reverse pass differentiates exactly these expressions.
// Inner loops run over the output unit j on weights transposed to [i][m][j].

#include "kanlab/kan.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <string>

namespace kanlab {

namespace {

using detail::LayerCache;

constexpr int kNoBand = INT_MIN;

int forward_order(const Jet& in) {
  if (!in.second.empty()) return 2;
  return in.first.empty() ? 0 : 1;
}

void check_input(const KanLayer& layer, const Jet& in) {
  if (in.value.rows() == 0) fail(Errc::empty_batch, "batch is empty");
  if (in.value.cols() != layer.n_in) {
    fail(Errc::dimension_mismatch, "input width " + std::to_string(in.value.cols()) + " does not match layer n_in " +
                                       std::to_string(layer.n_in));
  }
}

// Layer weights in [i][.][j] layout with the normalization folded in:
// w = b and o = 0 for the raw basis, w = b / sigma and o = -sum_m w mu otherwise.
struct Transposed {
  int n_out = 0;
  int nb = 0;
  std::vector<double> r;       // [i][j]
  std::vector<double> c;       // [i][j]
  std::vector<double> w;       // [i][m][j]
  std::vector<double> offset;  // [i][j]

  const double* r_row(int i) const { return &r[static_cast<std::size_t>(i) * n_out]; }
  const double* c_row(int i) const { return &c[static_cast<std::size_t>(i) * n_out]; }
  const double* o_row(int i) const { return &offset[static_cast<std::size_t>(i) * n_out]; }
  const double* w_row(int i, int m) const { return &w[(static_cast<std::size_t>(i) * nb + m) * n_out]; }
};

Transposed transpose_weights(const KanLayer& layer, const LayerCache& cache) {
  Transposed t;
  t.n_out = layer.n_out;
  t.nb = layer.basis_count();
  const std::size_t edges = layer.r.size();
  t.r.resize(edges);
  t.c.resize(edges);
  t.offset.assign(edges, 0.0);
  t.w.resize(layer.b.size());
  for (int j = 0; j < layer.n_out; ++j) {
    for (int i = 0; i < layer.n_in; ++i) {
      const std::size_t ij = static_cast<std::size_t>(i) * t.n_out + j;
      t.r[ij] = layer.r[layer.edge(j, i)];
      t.c[ij] = layer.c[layer.edge(j, i)];
      double o = 0.0;
      for (int m = 0; m < t.nb; ++m) {
        double w = layer.b[layer.basis_index(j, i, m)];
        if (layer.normalized_basis) {
          const std::size_t col = static_cast<std::size_t>(i) * t.nb + m;
          w *= cache.stats.inv_std[col];
          o -= w * cache.stats.mean[col];
        }
        t.w[(static_cast<std::size_t>(i) * t.nb + m) * t.n_out + j] = w;
      }
      t.offset[ij] = o;
    }
  }
  return t;
}

void compute_batch_stats(const KanLayer& layer, LayerCache& cache, Eigen::Index n) {
  if (n < 2) fail(Errc::batch_too_small, "normalized basis needs at least two samples per batch");
  const int nb = layer.basis_count();
  const int width = layer.kv.order() + 1;
  const int stride = (cache.max_derivative + 1) * width;
  const std::size_t cols = static_cast<std::size_t>(layer.n_in) * nb;
  std::vector<double> sum(cols, 0.0);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int i = 0; i < layer.n_in; ++i) {
      const std::size_t si = static_cast<std::size_t>(s) * layer.n_in + i;
      const int first = cache.band[si];
      if (first == kNoBand) continue;
      const double* d0 = &cache.ders[si * stride];
      for (int q = std::max(0, -first); q < std::min(width, nb - first); ++q) {
        sum[static_cast<std::size_t>(i) * nb + first + q] += d0[q];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  cache.stats.mean.resize(cols);
  for (std::size_t col = 0; col < cols; ++col) cache.stats.mean[col] = sum[col] * inv_n;
  // sum_s (B - mu)^2 = N mu^2 + sum over band hits of ((B - mu)^2 - mu^2)
  std::vector<double> sq(cols, 0.0);
  for (std::size_t col = 0; col < cols; ++col) sq[col] = static_cast<double>(n) * cache.stats.mean[col] * cache.stats.mean[col];
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int i = 0; i < layer.n_in; ++i) {
      const std::size_t si = static_cast<std::size_t>(s) * layer.n_in + i;
      const int first = cache.band[si];
      if (first == kNoBand) continue;
      const double* d0 = &cache.ders[si * stride];
      for (int q = std::max(0, -first); q < std::min(width, nb - first); ++q) {
        const std::size_t col = static_cast<std::size_t>(i) * nb + first + q;
        const double mu = cache.stats.mean[col];
        const double dv = d0[q] - mu;
        sq[col] += dv * dv - mu * mu;
      }
    }
  }
  cache.stats.inv_std.resize(cols);
  for (std::size_t col = 0; col < cols; ++col) {
    const double var = std::max(sq[col] * inv_n, 0.0);
    cache.stats.inv_std[col] = 1.0 / std::sqrt(var + layer.norm_eps);
  }
  cache.batch_stats = true;
}

// For one cell (s, i): S_q[j] = [q == 0] o[j] + sum_r ders[q][r] w[first + r][j]
// and phi_q[j] = r[j] R_q + c[j] S_q[j], for q = 0..top. Rows are n_out apart.
void edge_sums(const Transposed& t, int i, int first, int width, const double* ders, const double* rd, int top,
               double* sums, double* phi) {
  const int n_out = t.n_out;
  const int r_lo = first == kNoBand ? 0 : std::max(0, -first);
  const int r_hi = first == kNoBand ? 0 : std::min(width, t.nb - first);
  const double* __restrict rr = t.r_row(i);
  const double* __restrict cc = t.c_row(i);
  for (int q = 0; q <= top; ++q) {
    double* __restrict sq = sums + static_cast<std::size_t>(q) * n_out;
    if (q == 0) {
      const double* __restrict o = t.o_row(i);
      for (int j = 0; j < n_out; ++j) sq[j] = o[j];
    } else {
      for (int j = 0; j < n_out; ++j) sq[j] = 0.0;
    }
    for (int r = r_lo; r < r_hi; ++r) {
      const double d = ders[q * width + r];
      const double* __restrict w = t.w_row(i, first + r);
      for (int j = 0; j < n_out; ++j) sq[j] += d * w[j];
    }
    double* __restrict pq = phi + static_cast<std::size_t>(q) * n_out;
    const double rq = rd[q];
    for (int j = 0; j < n_out; ++j) pq[j] = rr[j] * rq + cc[j] * sq[j];
  }
}

// Evaluates one layer on a jet. `keep` is the highest basis derivative stored
// in the cache (the forward needs forward_order(in), the reverse pass one more).
Jet forward_layer(const KanLayer& layer, const Jet& in, int keep, const BasisStats* frozen, LayerCache& cache) {
  check_input(layer, in);
  const Eigen::Index n = in.value.rows();
  const int order = forward_order(in);
  const int nd = static_cast<int>(in.first.size());
  const bool second = order == 2;
  const int width = layer.kv.order() + 1;
  const int n_out = layer.n_out;

  cache.max_derivative = keep;
  const int stride = (keep + 1) * width;
  const std::size_t cells = static_cast<std::size_t>(n) * layer.n_in;
  cache.band.assign(cells, kNoBand);
  cache.ders.resize(cells * stride);
  cache.silu.resize(cells * 4);

  LocalBasis lb;
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int i = 0; i < layer.n_in; ++i) {
      const double x = in.value(s, i);
      if (!std::isfinite(x)) fail(Errc::non_finite_input, "non-finite layer input");
      const std::size_t si = static_cast<std::size_t>(s) * layer.n_in + i;
      const auto rd = silu_derivatives(x);
      std::copy(rd.begin(), rd.end(), cache.silu.begin() + static_cast<std::ptrdiff_t>(si * 4));
      eval_local_basis(x, layer.kv, std::min(keep, kMaxBandedDerivative), lb);
      if (lb.width == 0) continue;
      cache.band[si] = lb.first;
      double* dst = &cache.ders[si * stride];
      for (int q = 0; q <= keep; ++q) {
        for (int r = 0; r < width; ++r) dst[q * width + r] = lb.ders[q][r];
      }
    }
  }

  cache.batch_stats = false;
  if (layer.normalized_basis) {
    if (frozen != nullptr) {
      cache.stats = *frozen;
    } else {
      compute_batch_stats(layer, cache, n);
    }
  }
  const Transposed t = transpose_weights(layer, cache);

  Jet out;
  out.value = Batch::Zero(n, n_out);
  for (int d = 0; d < nd; ++d) out.first.push_back(Batch::Zero(n, n_out));
  if (second) {
    for (int d = 0; d < nd; ++d) out.second.push_back(Batch::Zero(n, n_out));
  }

  std::vector<double> sums(static_cast<std::size_t>(3) * n_out);
  std::vector<double> phi(sums.size());
  const double* p0 = phi.data();
  const double* p1 = p0 + n_out;
  const double* p2 = p1 + n_out;
  for (Eigen::Index s = 0; s < n; ++s) {
    double* __restrict y = out.value.row(s).data();
    for (int i = 0; i < layer.n_in; ++i) {
      const std::size_t si = static_cast<std::size_t>(s) * layer.n_in + i;
      edge_sums(t, i, cache.band[si], width, &cache.ders[si * stride], &cache.silu[si * 4], order, sums.data(),
                phi.data());
      for (int j = 0; j < n_out; ++j) y[j] += p0[j];
      for (int d = 0; d < nd; ++d) {
        const double g = in.first[d](s, i);
        double* __restrict yg = out.first[d].row(s).data();
        for (int j = 0; j < n_out; ++j) yg[j] += p1[j] * g;
        if (second) {
          const double gg = g * g;
          const double h = in.second[d](s, i);
          double* __restrict yh = out.second[d].row(s).data();
          for (int j = 0; j < n_out; ++j) yh[j] += p2[j] * gg + p1[j] * h;
        }
      }
    }
  }
  return out;
}

bool row_active(const Jet& adj, Eigen::Index s) {
  if ((adj.value.row(s).array() != 0.0).any()) return true;
  for (const auto& f : adj.first) {
    if ((f.row(s).array() != 0.0).any()) return true;
  }
  for (const auto& h : adj.second) {
    if ((h.row(s).array() != 0.0).any()) return true;
  }
  return false;
}

// Reverse pass through one layer. Writes `grad`; accumulates the input adjoint
// when `in_adj` is non-null.
void backward_layer(const KanLayer& layer, const Jet& in, const LayerCache& cache, const Jet& out_adj,
                    NetworkGradient::Layer& grad, Jet* in_adj) {
  const Eigen::Index n = in.value.rows();
  const int order = forward_order(in);
  const int nd = static_cast<int>(in.first.size());
  const bool second = order == 2;
  const int width = layer.kv.order() + 1;
  const int nb = layer.basis_count();
  const int n_in = layer.n_in;
  const int n_out = layer.n_out;
  const int stride = (cache.max_derivative + 1) * width;
  const bool stats_flow = layer.normalized_basis && cache.batch_stats;
  const int top = std::min(order + 1, cache.max_derivative);
  const Transposed t = transpose_weights(layer, cache);

  // Accumulated in the transposed layout; gw holds sum_s c (a0 B + a1 B' + a2 B'').
  std::vector<double> gr(layer.r.size(), 0.0);
  std::vector<double> gc(layer.c.size(), 0.0);
  std::vector<double> gw(layer.b.size(), 0.0);
  std::vector<double> value_adj_sum(static_cast<std::size_t>(n_out), 0.0);

  std::vector<double> sums(static_cast<std::size_t>(4) * n_out, 0.0);
  std::vector<double> phi(sums.size(), 0.0);
  std::vector<double> a1(static_cast<std::size_t>(n_out));
  std::vector<double> a2(static_cast<std::size_t>(n_out));
  const double* s0 = sums.data();
  const double* s1 = s0 + n_out;
  const double* s2 = s1 + n_out;
  const double* p1 = phi.data() + n_out;
  const double* p2 = p1 + n_out;
  const double* p3 = p2 + n_out;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (!row_active(out_adj, s)) continue;
    const double* __restrict a0 = out_adj.value.row(s).data();
    for (int j = 0; j < n_out; ++j) value_adj_sum[static_cast<std::size_t>(j)] += a0[j];

    for (int i = 0; i < n_in; ++i) {
      const std::size_t si = static_cast<std::size_t>(s) * n_in + i;
      const double* rd = &cache.silu[si * 4];
      const int first = cache.band[si];
      const double* ders = &cache.ders[si * stride];
      const double* __restrict rr = t.r_row(i);
      const double* __restrict cc = t.c_row(i);
      edge_sums(t, i, first, width, ders, rd, top, sums.data(), phi.data());
      // Orders above the kept basis derivatives only see the residual path.
      for (int q = top + 1; q <= order + 1; ++q) {
        double* pq = phi.data() + static_cast<std::size_t>(q) * n_out;
        for (int j = 0; j < n_out; ++j) pq[j] = rr[j] * rd[q];
      }

      std::fill(a1.begin(), a1.end(), 0.0);
      std::fill(a2.begin(), a2.end(), 0.0);
      for (int d = 0; d < nd; ++d) {
        const double g = in.first[d](s, i);
        const double* __restrict gb = out_adj.first[d].row(s).data();
        for (int j = 0; j < n_out; ++j) a1[j] += gb[j] * g;
        if (second) {
          const double h = in.second[d](s, i);
          const double gg = g * g;
          const double* __restrict hb = out_adj.second[d].row(s).data();
          for (int j = 0; j < n_out; ++j) {
            a1[j] += hb[j] * h;
            a2[j] += hb[j] * gg;
          }
        }
      }

      double* __restrict grow = &gr[static_cast<std::size_t>(i) * n_out];
      double* __restrict crow = &gc[static_cast<std::size_t>(i) * n_out];
      if (order == 0) {
        for (int j = 0; j < n_out; ++j) {
          grow[j] += a0[j] * rd[0];
          crow[j] += a0[j] * s0[j];
        }
      } else if (order == 1) {
        for (int j = 0; j < n_out; ++j) {
          grow[j] += a0[j] * rd[0] + a1[j] * rd[1];
          crow[j] += a0[j] * s0[j] + a1[j] * s1[j];
        }
      } else {
        for (int j = 0; j < n_out; ++j) {
          grow[j] += a0[j] * rd[0] + a1[j] * rd[1] + a2[j] * rd[2];
          crow[j] += a0[j] * s0[j] + a1[j] * s1[j] + a2[j] * s2[j];
        }
      }

      if (first != kNoBand) {
        for (int r = std::max(0, -first); r < std::min(width, nb - first); ++r) {
          const double b0 = ders[r];
          const double b1 = order >= 1 ? ders[width + r] : 0.0;
          const double b2 = order >= 2 ? ders[2 * width + r] : 0.0;
          double* __restrict dst = &gw[(static_cast<std::size_t>(i) * nb + first + r) * n_out];
          for (int j = 0; j < n_out; ++j) dst[j] += cc[j] * (a0[j] * b0 + a1[j] * b1 + a2[j] * b2);
        }
      }

      if (in_adj == nullptr) continue;
      double x_adj = 0.0;
      for (int j = 0; j < n_out; ++j) x_adj += a0[j] * p1[j];
      if (order >= 1) {
        for (int j = 0; j < n_out; ++j) x_adj += a1[j] * p2[j];
      }
      if (order >= 2) {
        for (int j = 0; j < n_out; ++j) x_adj += a2[j] * p3[j];
      }
      in_adj->value(s, i) += x_adj;
      for (int d = 0; d < nd; ++d) {
        const double* __restrict gb = out_adj.first[d].row(s).data();
        double g_in = 0.0;
        for (int j = 0; j < n_out; ++j) g_in += gb[j] * p1[j];
        if (second) {
          const double* __restrict hb = out_adj.second[d].row(s).data();
          double h1 = 0.0;
          double h2 = 0.0;
          for (int j = 0; j < n_out; ++j) {
            h1 += hb[j] * p1[j];
            h2 += hb[j] * p2[j];
          }
          g_in += 2.0 * h2 * in.first[d](s, i);
          in_adj->second[d](s, i) += h1;
        }
        in_adj->first[d](s, i) += g_in;
      }
    }
  }

  grad.r.assign(layer.r.size(), 0.0);
  grad.c.assign(layer.c.size(), 0.0);
  grad.b.assign(layer.b.size(), 0.0);
  for (int i = 0; i < n_in; ++i) {
    for (int j = 0; j < n_out; ++j) {
      const std::size_t ij = static_cast<std::size_t>(i) * n_out + j;
      grad.r[layer.edge(j, i)] = gr[ij];
      grad.c[layer.edge(j, i)] = gc[ij];
      for (int m = 0; m < nb; ++m) {
        double g = gw[(static_cast<std::size_t>(i) * nb + m) * n_out + j];
        if (layer.normalized_basis) {
          // the mean shift adds -c inv_std mu sum_s ybar
          const std::size_t col = static_cast<std::size_t>(i) * nb + m;
          g = cache.stats.inv_std[col] * (g - t.c[ij] * cache.stats.mean[col] * value_adj_sum[static_cast<std::size_t>(j)]);
        }
        grad.b[layer.basis_index(j, i, m)] = g;
      }
    }
  }
  if (!stats_flow) return;

  // Gradients of the batch mean and variance, pushed back into the raw basis
  // values and from there into the layer inputs.
  const std::size_t cols = static_cast<std::size_t>(n_in) * nb;
  std::vector<double> mean_adj(cols, 0.0);
  std::vector<double> var_adj(cols, 0.0);
  for (int i = 0; i < n_in; ++i) {
    for (int m = 0; m < nb; ++m) {
      const std::size_t col = static_cast<std::size_t>(i) * nb + m;
      double cb_a0 = 0.0;
      double t_acc = 0.0;
      for (int j = 0; j < n_out; ++j) {
        const double bjim = layer.b[layer.basis_index(j, i, m)];
        cb_a0 += t.c[static_cast<std::size_t>(i) * n_out + j] * bjim * value_adj_sum[static_cast<std::size_t>(j)];
        t_acc += bjim * gw[col * n_out + j];
      }
      const double inv = cache.stats.inv_std[col];
      const double mu = cache.stats.mean[col];
      mean_adj[col] = -inv * cb_a0;
      const double inv_adj = t_acc - mu * cb_a0;
      var_adj[col] = -0.5 * inv * inv * inv * inv_adj;
    }
  }
  if (in_adj == nullptr || cache.max_derivative < 1) return;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int i = 0; i < n_in; ++i) {
      const std::size_t si = static_cast<std::size_t>(s) * n_in + i;
      const int first = cache.band[si];
      if (first == kNoBand) continue;
      const double* ders = &cache.ders[si * stride];
      double acc = 0.0;
      for (int r = std::max(0, -first); r < std::min(width, nb - first); ++r) {
        const std::size_t col = static_cast<std::size_t>(i) * nb + first + r;
        const double braw_adj = inv_n * (mean_adj[col] + 2.0 * var_adj[col] * (ders[r] - cache.stats.mean[col]));
        acc += braw_adj * ders[width + r];
      }
      in_adj->value(s, i) += acc;
    }
  }
}

Jet input_jet(const Batch& x, const DerivativeRequest& request) {
  Jet jet;
  jet.value = x;
  for (int d : request.dims) {
    if (d < 0 || d >= x.cols()) fail(Errc::dimension_mismatch, "derivative dimension out of range");
    Batch e = Batch::Zero(x.rows(), x.cols());
    e.col(d).setOnes();
    jet.first.push_back(std::move(e));
    if (request.second) jet.second.push_back(Batch::Zero(x.rows(), x.cols()));
  }
  return jet;
}

void check_request(const KanNetwork& net, const DerivativeRequest& request) {
  if (!request.second) return;
  for (const auto& layer : net.layers) {
    if (layer.kv.order() < 2) fail(Errc::unsupported_order, "second input derivatives need spline order k >= 2");
  }
}

void check_network_input(const KanNetwork& net, const Batch& x) {
  if (net.layers.empty()) fail(Errc::invalid_size, "network has no layers");
  if (x.rows() == 0) fail(Errc::empty_batch, "batch is empty");
  if (x.cols() != net.input_dim()) {
    fail(Errc::dimension_mismatch, "input width " + std::to_string(x.cols()) + " does not match network input " +
                                       std::to_string(net.input_dim()));
  }
}

}  // namespace

Batch layer_forward(const KanLayer& layer, const Batch& x, const BasisStats* frozen_stats) {
  LayerCache cache;
  Jet in;
  in.value = x;
  return forward_layer(layer, in, 0, frozen_stats, cache).value;
}

Batch network_forward(const KanNetwork& net, const Batch& x) {
  check_network_input(net, x);
  Jet jet;
  jet.value = x;
  LayerCache cache;
  for (const auto& layer : net.layers) jet = forward_layer(layer, jet, 0, nullptr, cache);
  return std::move(jet.value);
}

Jet input_derivatives(const KanNetwork& net, const Batch& x, const DerivativeRequest& request) {
  check_network_input(net, x);
  check_request(net, request);
  Jet jet = input_jet(x, request);
  const int order = forward_order(jet);
  LayerCache cache;
  for (const auto& layer : net.layers) jet = forward_layer(layer, jet, order, nullptr, cache);
  return jet;
}

ForwardTape::ForwardTape(const KanNetwork& net, const Batch& x, const DerivativeRequest& request)
    : net_(&net), request_(request) {
  check_network_input(net, x);
  check_request(net, request);
  Jet jet = input_jet(x, request);
  const int keep = forward_order(jet) + 1;
  caches_.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Jet next = forward_layer(net.layers[l], jet, keep, nullptr, caches_[l]);
    inputs_.push_back(std::move(jet));
    jet = std::move(next);
  }
  outputs_ = std::move(jet);
}

NetworkGradient ForwardTape::backward(const Jet& adjoint) const {
  if (adjoint.value.rows() != outputs_.value.rows() || adjoint.value.cols() != outputs_.value.cols() ||
      adjoint.first.size() != outputs_.first.size() || adjoint.second.size() != outputs_.second.size()) {
    fail(Errc::shape_mismatch, "adjoint jet shape differs from the recorded outputs");
  }
  NetworkGradient grad;
  grad.layers.resize(net_->layers.size());
  Jet upstream = adjoint;
  for (std::size_t l = net_->layers.size(); l-- > 0;) {
    Jet in_adj;
    const bool need_input = l > 0;
    if (need_input) in_adj = inputs_[l].zeros_like();
    backward_layer(net_->layers[l], inputs_[l], caches_[l], upstream, grad.layers[l], need_input ? &in_adj : nullptr);
    if (need_input) upstream = std::move(in_adj);
  }
  return grad;
}

std::pair<double, NetworkGradient> value_and_gradients(const KanNetwork& net, const JetLoss& loss, const Batch& x,
                                                       const DerivativeRequest& request) {
  const ForwardTape tape(net, x, request);
  LossValue lv = loss(tape.outputs());
  if (!std::isfinite(lv.loss)) fail(Errc::non_finite_loss, "loss is not finite");
  return {lv.loss, tape.backward(lv.adjoint)};
}

NetworkGradient parameter_gradients(const KanNetwork& net, const JetLoss& loss, const Batch& x,
                                    const DerivativeRequest& request) {
  return value_and_gradients(net, loss, x, request).second;
}

}  // namespace kanlab
