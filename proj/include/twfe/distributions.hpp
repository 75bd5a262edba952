#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace twfe::dist {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {

// Mills ratio (1 - Phi(z)) / phi(z) for z >= 8 by backward continued fraction.
inline double mills_ratio_tail(double z) {
  double t = z;
  for (int k = 60; k >= 1; --k) t = z + k / t;
  return 1.0 / t;
}

inline constexpr double kTailSwitch = -8.0;

}  // namespace detail

/// log Phi(x), accurate in both tails.
inline double log_normal_cdf(double x) {
  if (x < detail::kTailSwitch)
    return -0.5 * x * x - kLogSqrt2Pi + std::log(detail::mills_ratio_tail(-x));
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

/// phi(x) / Phi(x), the inverse Mills ratio of the lower tail.
inline double inv_mills(double x) {
  if (x < detail::kTailSwitch) return 1.0 / detail::mills_ratio_tail(-x);
  return normal_pdf(x) / normal_cdf(x);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double log_sigmoid(double x) { return -softplus(-x); }

/// Upper tail P(X > x) for X ~ chi^2(df).
inline double chi2_sf(double x, int df) {
  if (!(x > 0.0)) return 1.0;
  if (!std::isfinite(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

inline double chi2_cdf(double x, int df) {
  if (!(x > 0.0)) return 0.0;
  if (!std::isfinite(x)) return 1.0;
  return boost::math::cdf(boost::math::chi_squared(df), x);
}

/// Two-sided p-value of a t statistic with df degrees of freedom.
inline double student_t_two_sided(double t, double df) {
  if (!std::isfinite(t) || !(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
}

}  // namespace twfe::dist
