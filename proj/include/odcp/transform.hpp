#pragma once

// General data -> simplex: per-column standardization followed by the
// multinomial expit with an appended pivot coordinate. Also the inverse map,
// its Jacobian, and executable checks that likelihood ratios survive the
// change of variables.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "odcp/error.hpp"
#include "odcp/simplex.hpp"

namespace odcp {

inline constexpr double sigma_guard = 1e-12;

struct Standardization {
  std::vector<double> mu;
  std::vector<double> sigma;
  // Columns whose spread fell below sigma_guard; their sigma was set to 1.
  std::vector<std::size_t> guarded;

  std::size_t dimension() const noexcept { return mu.size(); }
  bool warned() const noexcept { return !guarded.empty(); }
};

inline Standardization fit_standardization(const Series& series) {
  if (series.kind() != SeriesKind::general) {
    throw InvalidSeries("fit_standardization expects a general series");
  }
  const std::size_t n = series.length();
  if (n < 2) throw InsufficientData("fit_standardization needs at least 2 samples");
  const std::size_t d = series.dimension();
  Standardization s;
  s.mu.assign(d, 0.0);
  s.sigma.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) s.mu[j] += series[i][j];
  }
  for (double& m : s.mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double r = series[i][j] - s.mu[j];
      s.sigma[j] += r * r;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    s.sigma[j] = std::sqrt(s.sigma[j] / static_cast<double>(n - 1));
    if (!std::isfinite(s.mu[j]) || !std::isfinite(s.sigma[j])) {
      throw InvalidSeries("column " + std::to_string(j) + " has non-finite values");
    }
    if (s.sigma[j] < sigma_guard) {
      s.sigma[j] = 1.0;
      s.guarded.push_back(j);
    }
  }
  return s;
}

inline std::vector<double> standardize(std::span<const double> y, const Standardization& s) {
  if (y.size() != s.dimension()) throw DimensionError("standardize: dimension mismatch");
  std::vector<double> z(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) z[j] = (y[j] - s.mu[j]) / s.sigma[j];
  return z;
}

inline std::vector<double> destandardize(std::span<const double> z, const Standardization& s) {
  if (z.size() != s.dimension()) throw DimensionError("destandardize: dimension mismatch");
  std::vector<double> y(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) y[j] = z[j] * s.sigma[j] + s.mu[j];
  return y;
}

/// d reals -> interior composition of length d+1, pivot last.
inline Composition expit_map(std::span<const double> y) {
  if (y.empty()) throw DimensionError("expit_map: empty input");
  double shift = 0.0;  // the pivot's logit
  for (double v : y) {
    if (!std::isfinite(v)) throw DomainError("expit_map: non-finite input");
    shift = std::max(shift, v);
  }
  std::vector<double> x(y.size() + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    x[i] = std::exp(y[i] - shift);
    total += x[i];
  }
  x.back() = std::exp(-shift);
  total += x.back();
  // Gaps beyond ~708 underflow; keep those components at the smallest
  // normal double so the result stays interior.
  for (double& v : x) v = std::max(v / total, std::numeric_limits<double>::min());
  return Composition(std::move(x));
}

inline std::vector<double> logit_unmap(std::span<const double> x) {
  if (x.size() < 2) throw DimensionError("logit_unmap: need at least 2 components");
  for (double v : x) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("logit_unmap: boundary component");
  }
  const double log_pivot = std::log(x.back());
  std::vector<double> y(x.size() - 1);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(x[i]) - log_pivot;
  return y;
}

inline std::vector<double> logit_unmap(const Composition& x) { return logit_unmap(x.values()); }

/// ln|det J| of x -> sigma * logit(x) + mu, with respect to the d free
/// coordinates (x_1..x_d).
inline double log_abs_det_jacobian(std::span<const double> x, const Standardization& s) {
  if (x.size() != s.dimension() + 1) {
    throw DimensionError("log_abs_det_jacobian: composition must have dimension d + 1");
  }
  double acc = 0.0;
  for (double v : x) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("log_abs_det_jacobian: boundary component");
    acc -= std::log(v);
  }
  for (double sg : s.sigma) acc += std::log(sg);
  return acc;
}

inline double log_abs_det_jacobian(const Composition& x, const Standardization& s) {
  return log_abs_det_jacobian(x.values(), s);
}

/// Full inverse map: composition -> original data units.
inline std::vector<double> inverse_map(std::span<const double> x, const Standardization& s) {
  if (x.size() != s.dimension() + 1) throw DimensionError("inverse_map: dimension mismatch");
  return destandardize(logit_unmap(x), s);
}

inline Composition forward_map(std::span<const double> y, const Standardization& s) {
  return expit_map(standardize(y, s));
}

inline Series to_compositional(const Series& series, const Standardization& s) {
  if (series.kind() != SeriesKind::general) {
    throw InvalidSeries("to_compositional expects a general series");
  }
  if (series.dimension() != s.dimension()) {
    throw DimensionError("to_compositional: series has dimension " +
                         std::to_string(series.dimension()) + ", standardization has " +
                         std::to_string(s.dimension()));
  }
  std::vector<std::vector<double>> out;
  out.reserve(series.length());
  for (std::size_t i = 0; i < series.length(); ++i) {
    const Composition c = forward_map(series[i], s);
    out.emplace_back(c.begin(), c.end());
  }
  return Series(std::move(out), SeriesKind::compositional);
}

// ---------------------------------------------------------------------------
// Likelihood-ratio invariance checks.

using LogDensity = std::function<double(std::span<const double>)>;

/// Three densities on R^d with a split after `tau` samples. The transform is
/// fitted from `series` unless one is supplied; the checks hold for any
/// fixed transform, fitted or not.
struct LemmaTestCase {
  LogDensity p0;
  LogDensity p1;
  LogDensity p2;
  std::size_t tau = 0;
  Series series;
  std::optional<Standardization> transform;
};

namespace detail {

inline double checked_log_density(const LogDensity& p, std::span<const double> y, std::size_t i) {
  const double v = p(y);
  if (std::isnan(v) || v == -std::numeric_limits<double>::infinity()) {
    throw DegenerateDensity("density is zero at sample " + std::to_string(i));
  }
  return v;
}

inline Standardization lemma_transform(const LemmaTestCase& c) {
  if (c.tau == 0 || c.tau >= c.series.length()) throw ContractError("tau must satisfy 0 < tau < T");
  if (!c.p0 || !c.p1 || !c.p2) throw ContractError("lemma case is missing a density");
  return c.transform ? *c.transform : fit_standardization(c.series);
}

}  // namespace detail

/// (LLR over the raw samples, LLR over their images on the simplex with
/// q_j(x) = p_j(g(x)) |det J(x)|).
inline std::pair<double, double> check_llr_invariance(const LemmaTestCase& c) {
  const Standardization s = detail::lemma_transform(c);
  double llr_y = 0.0;
  double llr_x = 0.0;
  for (std::size_t i = 0; i < c.series.length(); ++i) {
    const auto& y = c.series[i];
    const LogDensity& alt = i < c.tau ? c.p1 : c.p2;
    llr_y += detail::checked_log_density(alt, y, i) - detail::checked_log_density(c.p0, y, i);

    const Composition x = forward_map(y, s);
    const std::vector<double> gy = inverse_map(x.values(), s);
    const double lj = log_abs_det_jacobian(x, s);
    llr_x += (detail::checked_log_density(alt, gy, i) + lj) -
             (detail::checked_log_density(c.p0, gy, i) + lj);
  }
  return {llr_y, llr_x};
}

/// Per-sample (ln q_m/q_0 at x_i, ln p_m/p_0 at y_i), where the mixture
/// density at sample i is the left density before tau and the right after.
inline std::vector<std::pair<double, double>> lemma1_integrands(const LemmaTestCase& c) {
  const Standardization s = detail::lemma_transform(c);
  std::vector<std::pair<double, double>> out;
  out.reserve(c.series.length());
  for (std::size_t i = 0; i < c.series.length(); ++i) {
    const auto& y = c.series[i];
    const LogDensity& alt = i < c.tau ? c.p1 : c.p2;
    const Composition x = forward_map(y, s);
    const std::vector<double> gy = inverse_map(x.values(), s);
    const double lj = log_abs_det_jacobian(x, s);
    const double log_qm = detail::checked_log_density(alt, gy, i) + lj;
    const double log_q0 = detail::checked_log_density(c.p0, gy, i) + lj;
    const double p_ratio =
        detail::checked_log_density(alt, y, i) - detail::checked_log_density(c.p0, y, i);
    out.emplace_back(log_qm - log_q0, p_ratio);
  }
  return out;
}

}  // namespace odcp
