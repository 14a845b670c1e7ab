#include "kanlab/special.hpp"

#include "kanlab/common.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

namespace kanlab {

double erf(double x) { return std::erf(x); }

double erfinv(double x) {
  if (!(std::abs(x) < 1.0)) fail(Errc::domain_error, "erfinv needs |x| < 1");
  if (x == 0.0) return 0.0;
  const double ax = std::abs(x);
  // Giles (2010) single-precision approximation as the starting point.
  const double w = -std::log((1.0 - ax) * (1.0 + ax));
  double y;
  if (w < 5.0) {
    const double t = w - 2.5;
    double p = 2.81022636e-08;
    p = 3.43273939e-07 + p * t;
    p = -3.5233877e-06 + p * t;
    p = -4.39150654e-06 + p * t;
    p = 0.00021858087 + p * t;
    p = -0.00125372503 + p * t;
    p = -0.00417768164 + p * t;
    p = 0.246640727 + p * t;
    p = 1.50140941 + p * t;
    y = p * ax;
  } else {
    const double t = std::sqrt(w) - 3.0;
    double p = -0.000200214257;
    p = 0.000100950558 + p * t;
    p = 0.00134934322 + p * t;
    p = -0.00367342844 + p * t;
    p = 0.00573950773 + p * t;
    p = -0.0076224613 + p * t;
    p = 0.00943887047 + p * t;
    p = 1.00167406 + p * t;
    p = 2.83297682 + p * t;
    y = p * ax;
  }
  // Newton on erf for small arguments, on erfc near 1 where 1 - ax is exact.
  const double k = 2.0 / std::sqrt(std::numbers::pi);
  const double tail = 1.0 - ax;
  for (int it = 0; it < 4; ++it) {
    const double slope = k * std::exp(-y * y);
    const double r = ax < 0.5 ? std::erf(y) - ax : tail - std::erfc(y);
    // Halley step; f'' / f' = -2y
    const double step = r / slope;
    y -= step / (1.0 + y * step);
  }
  return x < 0.0 ? -y : y;
}

double bessel_i1(double x) {
  // libstdc++ rejects negative arguments; I1 is odd.
  const double v = std::cyl_bessel_i(1.0, std::abs(x));
  return x < 0.0 ? -v : v;
}

namespace {

struct FresnelPair {
  double s;
  double c;
};

FresnelPair fresnel(double x) {
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  constexpr double kTiny = 1e-300;
  constexpr double kSwitch = 1.5;
  constexpr int kMaxIter = 200;
  constexpr double kPi = std::numbers::pi;
  const double ax = std::abs(x);
  FresnelPair out{0.0, 0.0};
  if (ax < 1e-150) {
    out = {0.0, ax};
  } else if (ax <= kSwitch) {
    // Alternating power series, summing the S and C terms in turn.
    double sum = 0.0;
    double sums = 0.0;
    double sumc = ax;
    double sgn = 1.0;
    const double fact = 0.5 * kPi * ax * ax;
    bool odd = true;
    double term = ax;
    int n = 3;
    int k = 1;
    for (; k <= kMaxIter; ++k) {
      term *= fact / k;
      sum += sgn * term / n;
      const double test = std::abs(sum) * kEps;
      if (odd) {
        sgn = -sgn;
        sums = sum;
        sum = sumc;
      } else {
        sumc = sum;
        sum = sums;
      }
      if (term < test) break;
      odd = !odd;
      n += 2;
    }
    if (k > kMaxIter) fail(Errc::non_convergence, "Fresnel series did not converge");
    out = {sums, sumc};
  } else {
    // Continued fraction for erfc of a complex argument (modified Lentz).
    const double pix2 = kPi * ax * ax;
    std::complex<double> b(1.0, -pix2);
    std::complex<double> cc(1.0 / kTiny, 0.0);
    std::complex<double> d = 1.0 / b;
    std::complex<double> h = d;
    int n = -1;
    int k = 2;
    for (; k <= kMaxIter; ++k) {
      n += 2;
      const double a = -static_cast<double>(n) * (n + 1);
      b += 4.0;
      d = 1.0 / (a * d + b);
      cc = b + a / cc;
      const std::complex<double> del = cc * d;
      h *= del;
      if (std::abs(del.real() - 1.0) + std::abs(del.imag()) < kEps) break;
    }
    if (k > kMaxIter) fail(Errc::non_convergence, "Fresnel continued fraction did not converge");
    h *= std::complex<double>(ax, -ax);
    const std::complex<double> cs =
        std::complex<double>(0.5, 0.5) * (1.0 - std::complex<double>(std::cos(0.5 * pix2), std::sin(0.5 * pix2)) * h);
    out = {cs.imag(), cs.real()};
  }
  if (x < 0.0) out = {-out.s, -out.c};
  return out;
}

}  // namespace

double fresnel_s(double x) {
  if (std::isinf(x)) return x > 0 ? 0.5 : -0.5;
  return fresnel(x).s;
}

double fresnel_c(double x) {
  if (std::isinf(x)) return x > 0 ? 0.5 : -0.5;
  return fresnel(x).c;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double sgn_half_minus(double x) { return sign(0.5 - x); }

double special(std::string_view name, double x) {
  if (name == "erf") return erf(x);
  if (name == "erfinv") return erfinv(x);
  if (name == "bessel_I1") return bessel_i1(x);
  if (name == "fresnel_S") return fresnel_s(x);
  if (name == "fresnel_C") return fresnel_c(x);
  if (name == "sign") return sign(x);
  if (name == "sgn_half_minus") return sgn_half_minus(x);
  fail(Errc::unknown_id, "unknown special function '" + std::string(name) + "'");
}

}  // namespace kanlab
