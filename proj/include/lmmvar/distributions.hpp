#pragma once

// Upper-tail probabilities and quantiles for the reference distributions of
// the test battery. Backed by Boost.Math's regularized incomplete gamma and
// beta functions, which keep full relative accuracy deep into the tail.

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <string>

#include "lmmvar/errors.hpp"

namespace lmmvar {

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail

/// P(X > x) for X ~ chi-square(df). Equals Q(df/2, x/2).
inline double chisq_sf(double x, double df) {
  detail::require(std::isfinite(x) && x >= 0.0, "chisq_sf: x must be finite and >= 0");
  detail::require(std::isfinite(df) && df > 0.0, "chisq_sf: df must be > 0");
  if (x == 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

/// P(F > x) for F ~ F(d1, d2); real-valued degrees of freedom are allowed.
inline double f_sf(double x, double d1, double d2) {
  detail::require(std::isfinite(x) && x >= 0.0, "f_sf: x must be finite and >= 0");
  detail::require(std::isfinite(d1) && d1 > 0.0, "f_sf: numerator df must be > 0");
  detail::require(d2 > 0.0, "f_sf: denominator df must be > 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(d2)) return chisq_sf(d1 * x, d1);
  // P(F > x) = I_{d2/(d2 + d1 x)}(d2/2, d1/2)
  const double z = d2 / (d2 + d1 * x);
  return boost::math::ibeta(0.5 * d2, 0.5 * d1, z);
}

/// P(T > x) for T ~ t(df); x may be negative, df real and > 0.
inline double t_sf(double x, double df) {
  detail::require(std::isfinite(x), "t_sf: x must be finite");
  detail::require(df > 0.0, "t_sf: df must be > 0");
  if (std::isinf(df)) return 0.5 * std::erfc(x / std::sqrt(2.0));
  // P(|T| > |x|) = I_{df/(df + x^2)}(df/2, 1/2)
  const double z = df / (df + x * x);
  const double two_sided = boost::math::ibeta(0.5 * df, 0.5, z);
  return x >= 0.0 ? 0.5 * two_sided : 1.0 - 0.5 * two_sided;
}

/// Two-sided p-value P(|T| > |t|).
inline double t_two_sided(double t, double df) {
  detail::require(std::isfinite(t), "t_two_sided: statistic must be finite");
  detail::require(df > 0.0, "t_two_sided: df must be > 0");
  if (std::isinf(df)) return std::erfc(std::fabs(t) / std::sqrt(2.0));
  return boost::math::ibeta(0.5 * df, 0.5, df / (df + t * t));
}

/// Lower-tail quantile: returns q with P(T <= q) = p.
inline double t_quantile(double p, double df) {
  detail::require(p > 0.0 && p < 1.0, "t_quantile: p must lie in (0, 1)");
  detail::require(df > 0.0, "t_quantile: df must be > 0");
  if (std::isinf(df)) df = std::numeric_limits<double>::max();
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

}  // namespace lmmvar
