#pragma once

#include <string_view>

namespace kanlab {

double erf(double x);
/// Inverse error function; domain_error for |x| >= 1 or NaN.
double erfinv(double x);
/// Modified Bessel function of the first kind, order one (odd in x).
double bessel_i1(double x);
/// Fresnel integrals with the pi/2 convention, S(x) = int_0^x sin(pi t^2 / 2) dt.
double fresnel_s(double x);
double fresnel_c(double x);
/// -1, 0 or 1.
double sign(double x);
/// sign(0.5 - x)
double sgn_half_minus(double x);

/// By name: erf, erfinv, bessel_I1, fresnel_S, fresnel_C, sign, sgn_half_minus.
/// Unknown names throw unknown_id.
double special(std::string_view name, double x);

}  // namespace kanlab
