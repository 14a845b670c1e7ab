#pragma once

#include <array>
#include <span>
#include <vector>

namespace kanlab {

/// Augmented uniform knot sequence: G intervals on [lo, hi] plus k knots of
/// the same spacing beyond each end, G + 2k + 1 knots in total. Supports the
/// G + k basis functions of degree k.
class KnotVector {
 public:
  KnotVector(double domain_lo, double domain_hi, int intervals, int order);

  [[nodiscard]] std::span<const double> knots() const noexcept { return knots_; }
  [[nodiscard]] int order() const noexcept { return order_; }
  [[nodiscard]] int intervals() const noexcept { return intervals_; }
  [[nodiscard]] double domain_lo() const noexcept { return lo_; }
  [[nodiscard]] double domain_hi() const noexcept { return hi_; }
  [[nodiscard]] double spacing() const noexcept { return h_; }
  [[nodiscard]] int basis_count() const noexcept { return intervals_ + order_; }

  /// Knot j of the infinite uniform extension; equals knots()[j] in range.
  [[nodiscard]] double knot(int j) const noexcept;

  /// Coefficient table of the span polynomials, empty when k exceeds the banded limit.
  [[nodiscard]] std::span<const double> span_polynomials() const noexcept { return poly_; }

  friend bool operator==(const KnotVector& a, const KnotVector& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_ && a.intervals_ == b.intervals_ && a.order_ == b.order_;
  }

 private:
  double lo_;
  double hi_;
  int intervals_;
  int order_;
  double h_;
  std::vector<double> knots_;
  // Local basis on one span as polynomials in u = (x - t_span) / h:
  // poly_[((q * (k+1)) + r) * (k+1) + e] is the u^e coefficient of d^q B_{first+r} / dx^q.
  std::vector<double> poly_;
};

KnotVector build_knot_vector(double domain_lo, double domain_hi, int intervals, int order);

/// B_m(x) for m = 0 .. G+k-1 by the full Cox-de Boor triangle. Points outside
/// the augmented support evaluate to zero.
std::vector<double> basis_values(double x, const KnotVector& kv);

/// d^order B_m / dx^order, order in {1, 2} and order <= k.
std::vector<double> basis_derivatives(double x, const KnotVector& kv, int order);

inline constexpr int kMaxBandedOrder = 7;
inline constexpr int kMaxBandedDerivative = 3;

/// The k+1 basis functions that can be nonzero at one abscissa, together with
/// their derivatives. Entry ders[p][r] is d^p B_{first + r} / dx^p; indices
/// outside [0, G+k) belong to the virtual extension and must be skipped.
struct LocalBasis {
  int first = 0;
  int width = 0;  // 0 when x lies outside the augmented support
  std::array<std::array<double, kMaxBandedOrder + 1>, kMaxBandedDerivative + 1> ders{};
};

/// Banded evaluation of values and derivatives up to `max_derivative`. The knots
/// are uniform, so every span carries the same k+1 polynomial pieces; they are
/// tabulated once per knot vector. Agrees with basis_values / basis_derivatives.
void eval_local_basis(double x, const KnotVector& kv, int max_derivative, LocalBasis& out);

}  // namespace kanlab
