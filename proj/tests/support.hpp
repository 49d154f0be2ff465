#pragma once

// Shared helpers and independent reference implementations for the tests.
// The references deliberately avoid the library's own special functions and
// sufficient statistics (Boost.Math plus plain loops instead).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "odcp/odcp.hpp"

namespace odcp::testing {

inline std::vector<Composition> draw(const std::vector<double>& alpha, std::size_t n,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Composition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(clamp_to_interior(sample_dirichlet(alpha, rng)));
  return out;
}

inline std::vector<Composition> concat(std::vector<Composition> a, const std::vector<Composition>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline Series as_series(const std::vector<Composition>& xs) {
  std::vector<std::vector<double>> rows;
  for (const auto& x : xs) rows.emplace_back(x.begin(), x.end());
  return Series(std::move(rows), SeriesKind::compositional);
}

// ---------------------------------------------------------------------------
// Reference Dirichlet likelihood and MLE.

inline double ref_log_beta(const std::vector<double>& a) {
  double s = 0.0;
  double acc = 0.0;
  for (double v : a) {
    acc += boost::math::lgamma(v);
    s += v;
  }
  return acc - boost::math::lgamma(s);
}

inline double ref_log_lik(const std::vector<Composition>& data, std::size_t lo, std::size_t hi,
                          const std::vector<double>& a) {
  const double lb = ref_log_beta(a);
  double acc = 0.0;
  for (std::size_t t = lo; t < hi; ++t) {
    acc -= lb;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - 1.0) * std::log(data[t][i]);
  }
  return acc;
}

/// Full Newton on alpha with the exact Hessian (dense Gaussian elimination),
/// iterated to machine precision. Independent of the library's solver.
inline std::vector<double> ref_fit(const std::vector<Composition>& data, std::size_t lo,
                                   std::size_t hi) {
  const std::size_t k = data[lo].size();
  const double n = static_cast<double>(hi - lo);
  std::vector<double> mean_log(k, 0.0);
  std::vector<double> mean(k, 0.0);
  for (std::size_t t = lo; t < hi; ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      mean_log[i] += std::log(data[t][i]) / n;
      mean[i] += data[t][i] / n;
    }
  }
  // Start at mean * 1 and let Newton (with step halving) do the rest.
  std::vector<double> a(mean);
  for (double& v : a) v *= 2.0;
  auto objective = [&](const std::vector<double>& x) {
    double s = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      acc += -boost::math::lgamma(x[i]) + (x[i] - 1.0) * mean_log[i];
      s += x[i];
    }
    return acc + boost::math::lgamma(s);
  };
  for (int it = 0; it < 500; ++it) {
    double s = 0.0;
    for (double v : a) s += v;
    const double ps = boost::math::digamma(s);
    const double ts = boost::math::trigamma(s);
    std::vector<double> g(k);
    std::vector<double> h(k * k);
    for (std::size_t i = 0; i < k; ++i) {
      g[i] = ps - boost::math::digamma(a[i]) + mean_log[i];
      for (std::size_t j = 0; j < k; ++j) {
        h[i * k + j] = ts - (i == j ? boost::math::trigamma(a[i]) : 0.0);
      }
    }
    // Solve h d = -g.
    std::vector<double> d(g);
    for (double& v : d) v = -v;
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < k; ++r) {
        if (std::abs(h[r * k + c]) > std::abs(h[piv * k + c])) piv = r;
      }
      for (std::size_t j = 0; j < k; ++j) std::swap(h[c * k + j], h[piv * k + j]);
      std::swap(d[c], d[piv]);
      for (std::size_t r = c + 1; r < k; ++r) {
        const double f = h[r * k + c] / h[c * k + c];
        for (std::size_t j = c; j < k; ++j) h[r * k + j] -= f * h[c * k + j];
        d[r] -= f * d[c];
      }
    }
    for (std::size_t c = k; c-- > 0;) {
      for (std::size_t j = c + 1; j < k; ++j) d[c] -= h[c * k + j] * d[j];
      d[c] /= h[c * k + c];
    }
    const double f0 = objective(a);
    double step = 1.0;
    std::vector<double> next(k);
    for (;;) {
      bool ok = true;
      for (std::size_t i = 0; i < k; ++i) {
        next[i] = a[i] + step * d[i];
        if (!(next[i] > 0.0)) ok = false;
      }
      if (ok && objective(next) >= f0 - 1e-12 * std::abs(f0)) break;
      step *= 0.5;
      if (step < 1e-12) break;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) change = std::max(change, std::abs(next[i] - a[i]) / a[i]);
    a = next;
    if (change < 1e-13) break;
  }
  return a;
}

/// LL_tau for tau in [m, n - m], recomputed from scratch per split.
inline std::vector<double> ref_profile(const std::vector<Composition>& w, std::size_t m) {
  std::vector<double> out;
  for (std::size_t tau = m; tau + m <= w.size(); ++tau) {
    const auto left = ref_fit(w, 0, tau);
    const auto right = ref_fit(w, tau, w.size());
    out.push_back(ref_log_lik(w, 0, tau, left) + ref_log_lik(w, tau, w.size(), right));
  }
  return out;
}

inline double ref_ll0(const std::vector<Composition>& w) {
  return ref_log_lik(w, 0, w.size(), ref_fit(w, 0, w.size()));
}

/// Permutation p-value computed by brute force: shuffle, rescan with the
/// reference profile, compare maxima.
inline double ref_permutation_p(const std::vector<Composition>& w, std::size_t m, double z_star,
                                std::size_t replicates, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Composition> shuffled(w);
  std::size_t exceed = 0;
  for (std::size_t r = 0; r < replicates; ++r) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto prof = ref_profile(shuffled, m);
    const double z = *std::max_element(prof.begin(), prof.end()) - ref_ll0(shuffled);
    if (z >= z_star) ++exceed;
  }
  return static_cast<double>(1 + exceed) / static_cast<double>(replicates + 1);
}

// ---------------------------------------------------------------------------
// Transform references.

// Inverse map on the free coordinates, written out independently of the
// library: y_i = sigma_i * ln(x_i / (1 - sum x)) + mu_i.
inline std::vector<double> g_free(const std::vector<double>& x, const Standardization& s) {
  double rest = 1.0;
  for (double v : x) rest -= v;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = s.sigma[i] * std::log(x[i] / rest) + s.mu[i];
  return y;
}

inline double log_abs_det(std::vector<double> a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    }
    for (std::size_t j = 0; j < n; ++j) std::swap(a[c * n + j], a[piv * n + j]);
    acc += std::log(std::abs(a[c * n + c]));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t j = c; j < n; ++j) a[r * n + j] -= f * a[c * n + j];
    }
  }
  return acc;
}

inline double fd_log_det(const std::vector<double>& x_full, const Standardization& s, double h = 1e-6) {
  const std::size_t d = x_full.size() - 1;
  const std::vector<double> x(x_full.begin(), x_full.end() - 1);
  std::vector<double> jac(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    auto up = x, dn = x;
    up[j] += h;
    dn[j] -= h;
    const auto yu = g_free(up, s), yd = g_free(dn, s);
    for (std::size_t i = 0; i < d; ++i) jac[i * d + j] = (yu[i] - yd[i]) / (2 * h);
  }
  return log_abs_det(jac, d);
}

inline LogDensity density(const MvNormal& n) {
  return [n](std::span<const double> y) { return n.log_density(y); };
}

struct RandomCase {
  LemmaTestCase c;
  std::size_t d;
};

// Gaussian case with random means, correlated covariances and a seeded
// series that changes at tau.
inline RandomCase random_case(std::mt19937_64& rng, std::size_t d, std::size_t t, std::size_t tau) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  auto make = [&](double shift) {
    std::vector<double> mean(d), a(d * d), cov(d * d, 0.0);
    for (double& m : mean) m = shift + z(rng);
    // Off-diagonal entries stay below 0.1, so the factor is diagonally
    // dominant and the covariance well conditioned.
    for (double& v : a) v = std::clamp(0.05 * z(rng), -0.099, 0.099);
    for (std::size_t i = 0; i < d; ++i) a[i * d + i] = u(rng);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) cov[i * d + j] += a[i * d + k] * a[j * d + k];
      }
    }
    return MvNormal(mean, cov);
  };
  const MvNormal p0 = make(0.0), p1 = make(-1.0), p2 = make(1.5);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < t; ++i) rows.push_back(i < tau ? p1.sample(rng) : p2.sample(rng));
  RandomCase out;
  out.c.p0 = density(p0);
  out.c.p1 = density(p1);
  out.c.p2 = density(p2);
  out.c.tau = tau;
  out.c.series = Series(std::move(rows), SeriesKind::general);
  out.d = d;
  return out;
}

}  // namespace odcp::testing
