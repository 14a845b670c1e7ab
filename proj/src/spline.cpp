#include "kanlab/spline.hpp"

#include "kanlab/common.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kanlab {

namespace {

// Uniform Cox-de Boor recursion on one span in the local coordinate u:
//   N^d_r = (u + d - r)/d N^{d-1}_{r-1} + (r + 1 - u)/d N^{d-1}_r
// followed by term-wise differentiation, scaled by h^-q.
std::vector<double> span_polynomial_table(int p, double h) {
  const int w = p + 1;
  std::vector<std::vector<double>> cur{{1.0}};
  for (int d = 1; d <= p; ++d) {
    std::vector<std::vector<double>> next(static_cast<std::size_t>(d) + 1, std::vector<double>(static_cast<std::size_t>(d) + 1, 0.0));
    for (int r = 0; r <= d; ++r) {
      auto& out = next[static_cast<std::size_t>(r)];
      if (r >= 1) {
        const auto& lower = cur[static_cast<std::size_t>(r) - 1];
        for (int e = 0; e < d; ++e) {
          out[static_cast<std::size_t>(e)] += (d - r) * lower[static_cast<std::size_t>(e)] / d;
          out[static_cast<std::size_t>(e) + 1] += lower[static_cast<std::size_t>(e)] / d;
        }
      }
      if (r < d) {
        const auto& lower = cur[static_cast<std::size_t>(r)];
        for (int e = 0; e < d; ++e) {
          out[static_cast<std::size_t>(e)] += (r + 1) * lower[static_cast<std::size_t>(e)] / d;
          out[static_cast<std::size_t>(e) + 1] -= lower[static_cast<std::size_t>(e)] / d;
        }
      }
    }
    cur = std::move(next);
  }
  std::vector<double> table(static_cast<std::size_t>(kMaxBandedDerivative + 1) * w * w, 0.0);
  for (int r = 0; r <= p; ++r) {
    std::vector<double> c = cur[static_cast<std::size_t>(r)];
    double scale = 1.0;
    for (int q = 0; q <= std::min(p, kMaxBandedDerivative); ++q) {
      for (int e = 0; e <= p - q; ++e) table[static_cast<std::size_t>((q * w + r) * w + e)] = c[static_cast<std::size_t>(e)] * scale;
      for (int e = 0; e < p - q; ++e) c[static_cast<std::size_t>(e)] = (e + 1) * c[static_cast<std::size_t>(e) + 1];
      scale /= h;
    }
  }
  return table;
}

}  // namespace

KnotVector::KnotVector(double domain_lo, double domain_hi, int intervals, int order)
    : lo_(domain_lo), hi_(domain_hi), intervals_(intervals), order_(order) {
  if (!(domain_lo < domain_hi) || !std::isfinite(domain_lo) || !std::isfinite(domain_hi)) {
    fail(Errc::invalid_domain, "knot vector domain must satisfy lo < hi");
  }
  if (intervals < 1 || order < 0) {
    fail(Errc::invalid_size, "knot vector needs G >= 1 and k >= 0, got G=" + std::to_string(intervals) +
                                 " k=" + std::to_string(order));
  }
  h_ = (hi_ - lo_) / intervals_;
  const int count = intervals_ + 2 * order_ + 1;
  knots_.resize(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) knots_[static_cast<std::size_t>(j)] = knot(j);
  if (order_ <= kMaxBandedOrder) poly_ = span_polynomial_table(order_, h_);
}

double KnotVector::knot(int j) const noexcept {
  const int offset = j - order_;
  if (offset == 0) return lo_;
  if (offset == intervals_) return hi_;
  return lo_ + offset * h_;
}

KnotVector build_knot_vector(double domain_lo, double domain_hi, int intervals, int order) {
  return KnotVector(domain_lo, domain_hi, intervals, order);
}

namespace {

// Degree-0 indicators over the L-1 knot intervals. The last interval is closed
// on the right so that k = 0 covers the whole augmented range.
std::vector<double> indicators(double x, std::span<const double> t) {
  const std::size_t n = t.size() - 1;
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const bool last = j + 1 == n;
    if (t[j] <= x && (x < t[j + 1] || (last && x == t[j + 1]))) {
      out[j] = 1.0;
      break;
    }
  }
  return out;
}

// Derivative of the given order of every degree-`degree` function.
std::vector<double> cox_de_boor(double x, std::span<const double> t, int degree, int derivative) {
  if (derivative > degree) {
    return std::vector<double>(t.size() - 1 - static_cast<std::size_t>(degree), 0.0);
  }
  if (degree == 0) return indicators(x, t);
  const std::vector<double> lower = cox_de_boor(x, t, degree - 1, derivative == 0 ? 0 : derivative - 1);
  const std::size_t n = lower.size() - 1;
  std::vector<double> out(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    const double d1 = t[m + degree] - t[m];
    const double d2 = t[m + degree + 1] - t[m + 1];
    if (derivative == 0) {
      const double a = d1 > 0.0 ? (x - t[m]) / d1 * lower[m] : 0.0;
      const double b = d2 > 0.0 ? (t[m + degree + 1] - x) / d2 * lower[m + 1] : 0.0;
      out[m] = a + b;
    } else {
      const double a = d1 > 0.0 ? lower[m] / d1 : 0.0;
      const double b = d2 > 0.0 ? lower[m + 1] / d2 : 0.0;
      out[m] = degree * (a - b);
    }
  }
  return out;
}

}  // namespace

std::vector<double> basis_values(double x, const KnotVector& kv) {
  return cox_de_boor(x, kv.knots(), kv.order(), 0);
}

std::vector<double> basis_derivatives(double x, const KnotVector& kv, int order) {
  if (order < 1 || order > 2 || order > kv.order()) {
    fail(Errc::unsupported_order, "basis derivative order " + std::to_string(order) +
                                      " unsupported for k=" + std::to_string(kv.order()));
  }
  return cox_de_boor(x, kv.knots(), kv.order(), order);
}

void eval_local_basis(double x, const KnotVector& kv, int max_derivative, LocalBasis& out) {
  const int p = kv.order();
  if (p > kMaxBandedOrder || max_derivative > kMaxBandedDerivative) {
    fail(Errc::unsupported_order, "banded basis supports k <= 7 and derivatives <= 3");
  }
  const auto t = kv.knots();
  const int last = static_cast<int>(t.size()) - 1;
  if (!(x >= t.front() && x <= t.back())) {
    out.width = 0;
    return;
  }
  // Knot span: t[span] <= x < t[span + 1], with the right end folded into the last span.
  int span = static_cast<int>(std::floor((x - t.front()) / kv.spacing()));
  span = std::clamp(span, 0, last - 1);
  while (span > 0 && x < t[static_cast<std::size_t>(span)]) --span;
  while (span < last - 1 && x >= t[static_cast<std::size_t>(span) + 1]) ++span;

  out.first = span - p;
  out.width = p + 1;
  const double u = (x - t[static_cast<std::size_t>(span)]) / kv.spacing();
  const double* poly = kv.span_polynomials().data();
  const int w = p + 1;
  for (int q = 0; q <= max_derivative; ++q) {
    if (q > p) {
      for (int r = 0; r <= p; ++r) out.ders[q][r] = 0.0;
      continue;
    }
    for (int r = 0; r <= p; ++r) {
      const double* c = poly + (q * w + r) * w;
      double v = c[p - q];
      for (int e = p - q - 1; e >= 0; --e) v = v * u + c[e];
      out.ders[q][r] = v;
    }
  }
}

}  // namespace kanlab
