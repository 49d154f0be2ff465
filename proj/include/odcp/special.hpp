#pragma once

// Scalar special functions over the positive reals: log-gamma, digamma,
// trigamma and the inverse of digamma. All are pure and reentrant (no
// reliance on the global signgam written by ::lgamma).

#include <cmath>
#include <numbers>
#include <string>

#include "odcp/error.hpp"

namespace odcp {

inline constexpr double euler_gamma = std::numbers::egamma;

namespace detail {

inline void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

// Stirling series for ln Gamma(x), valid for x >= 10 to well below 1e-16.
inline double log_gamma_asymptotic(double x) {
  constexpr double half_log_two_pi = 0.91893853320467274178;
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // B_{2k} / (2k (2k-1) x^{2k-1})
  const double series =
      inv * (1.0 / 12.0 +
             inv2 * (-1.0 / 360.0 +
                     inv2 * (1.0 / 1260.0 +
                             inv2 * (-1.0 / 1680.0 +
                                     inv2 * (1.0 / 1188.0 +
                                             inv2 * (-691.0 / 360360.0 +
                                                     inv2 * (1.0 / 156.0)))))));
  return (x - 0.5) * std::log(x) - x + half_log_two_pi + series;
}

}  // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  detail::require_positive(x, "log_gamma");
  if (x >= 10.0) return detail::log_gamma_asymptotic(x);
  // Shift up with Gamma(x) = Gamma(x + n) / (x (x+1) ... (x+n-1)).
  double prod = 1.0;
  double z = x;
  while (z < 10.0) {
    prod *= z;
    z += 1.0;
  }
  return detail::log_gamma_asymptotic(z) - std::log(prod);
}

/// psi(x) = d/dx ln Gamma(x), by upward recurrence to x >= 6 and the
/// asymptotic expansion.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv2 = 1.0 / (x * x);
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 -
                                                      inv2 * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 / x - tail;
}

/// psi'(x), same recurrence-then-asymptotic scheme as digamma.
inline double trigamma(double x) {
  detail::require_positive(x, "trigamma");
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      inv * (1.0 + inv * (0.5 +
                          inv * (1.0 / 6.0 +
                                 inv2 * (-1.0 / 30.0 +
                                         inv2 * (1.0 / 42.0 +
                                                 inv2 * (-1.0 / 30.0 +
                                                         inv2 * (5.0 / 66.0 +
                                                                 inv2 * (-691.0 / 2730.0 +
                                                                         inv2 * (7.0 / 6.0)))))))));
  return acc + tail;
}

/// Solves digamma(x) = y for x > 0. Five Newton steps from the usual
/// piecewise initializer; quadratic convergence gets to ~1e-14.
inline double inv_digamma(double y) {
  if (!std::isfinite(y)) {
    throw DomainError("inv_digamma: argument must be finite");
  }
  double x = (y >= -2.22) ? std::exp(y) + 0.5 : -1.0 / (y + euler_gamma);
  for (int i = 0; i < 5; ++i) {
    const double next = x - (digamma(x) - y) / trigamma(x);
    // digamma is increasing and concave, so an overshoot can only leave
    // the domain on the left; fall back to halving.
    x = next > 0.0 ? next : 0.5 * x;
  }
  return x;
}

}  // namespace odcp
