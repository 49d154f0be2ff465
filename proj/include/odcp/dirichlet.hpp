#pragma once

// Dirichlet density, data log-likelihood, maximum-likelihood fitting from
// sufficient statistics, and KL divergence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "odcp/error.hpp"
#include "odcp/simplex.hpp"
#include "odcp/special.hpp"

namespace odcp {

inline constexpr double alpha_min = 1e-3;
inline constexpr double alpha_max = 1e6;

/// Concentration vector of one Dirichlet distribution.
class DirichletParams {
public:
  DirichletParams() = default;

  explicit DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
    if (alpha_.size() < 2) throw DomainError("Dirichlet needs at least 2 parameters");
    for (double a : alpha_) {
      if (!(a > 0.0) || !std::isfinite(a)) {
        throw DomainError("Dirichlet parameters must be positive and finite");
      }
    }
  }

  std::size_t size() const noexcept { return alpha_.size(); }
  double operator[](std::size_t i) const { return alpha_[i]; }
  std::span<const double> alpha() const noexcept { return alpha_; }
  double precision() const noexcept {
    double s = 0.0;
    for (double a : alpha_) s += a;
    return s;
  }

  friend bool operator==(const DirichletParams&, const DirichletParams&) = default;

private:
  std::vector<double> alpha_;
};

namespace detail {

__extension__ typedef __int128 int128;

// Fixed-point accumulator: each term is rounded once to a multiple of
// 2^-Bits, after which sums are exact integers. Totals therefore do not
// depend on the order of additions and removals.
template <int Bits>
class ExactSum {
public:
  void add(double v) { acc_ += quantize(v); }
  void sub(double v) { acc_ -= quantize(v); }
  void sub(const ExactSum& o) { acc_ -= o.acc_; }
  double value() const { return std::ldexp(static_cast<double>(acc_), -Bits); }

private:
  static int128 quantize(double v) { return static_cast<int128>(std::nearbyint(std::ldexp(v, Bits))); }
  int128 acc_ = 0;
};

}  // namespace detail

/// Running sums over a set of compositions. Only the log-sums enter the
/// likelihood; the plain moments feed the moment-matching initializer.
/// Samples can be added and removed in O(K), and the sums are exact in
/// fixed point, so the order of additions never changes the result.
class SufficientStats {
public:
  SufficientStats() = default;
  explicit SufficientStats(std::size_t k) : sum_log_(k), sum_(k), sum_sq_(k) {}

  explicit SufficientStats(std::span<const Composition> data)
      : SufficientStats(data.empty() ? 0 : data.front().size()) {
    for (const auto& x : data) add(x);
  }

  void add(const Composition& x) {
    check_dim(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum_log_[i].add(std::log(x[i]));
      sum_[i].add(x[i]);
      sum_sq_[i].add(x[i] * x[i]);
    }
    ++n_;
  }

  /// Hot-path add with precomputed logs.
  void add(std::span<const double> x, std::span<const double> log_x) {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      sum_log_[i].add(log_x[i]);
      sum_[i].add(x[i]);
      sum_sq_[i].add(x[i] * x[i]);
    }
    ++n_;
  }

  void remove(std::span<const double> x, std::span<const double> log_x) {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      sum_log_[i].sub(log_x[i]);
      sum_[i].sub(x[i]);
      sum_sq_[i].sub(x[i] * x[i]);
    }
    --n_;
  }

  /// this - other, for complements of a subset within a whole window.
  SufficientStats minus(const SufficientStats& other) const {
    SufficientStats out(*this);
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      out.sum_log_[i].sub(other.sum_log_[i]);
      out.sum_[i].sub(other.sum_[i]);
      out.sum_sq_[i].sub(other.sum_sq_[i]);
    }
    out.n_ -= other.n_;
    return out;
  }

  std::size_t count() const noexcept { return n_; }
  std::size_t dimension() const noexcept { return sum_.size(); }
  double sum_log(std::size_t i) const { return sum_log_[i].value(); }
  double mean_log(std::size_t i) const { return sum_log(i) / static_cast<double>(n_); }
  double mean(std::size_t i) const { return sum_[i].value() / static_cast<double>(n_); }
  double mean_sq(std::size_t i) const { return sum_sq_[i].value() / static_cast<double>(n_); }

private:
  void check_dim(std::size_t k) {
    if (sum_.empty()) {
      sum_log_.assign(k, {});
      sum_.assign(k, {});
      sum_sq_.assign(k, {});
    } else if (k != sum_.size()) {
      throw DimensionError("sample dimension does not match statistics");
    }
  }

  // log x >= -745 for any positive double, so 2^60 leaves room for ~10^17
  // samples; x and x^2 lie in (0, 1].
  std::size_t n_ = 0;
  std::vector<detail::ExactSum<60>> sum_log_;
  std::vector<detail::ExactSum<90>> sum_;
  std::vector<detail::ExactSum<90>> sum_sq_;
};

inline double log_beta(std::span<const double> alpha) {
  double s = 0.0;
  double lg = 0.0;
  for (double a : alpha) {
    s += a;
    lg += log_gamma(a);
  }
  return lg - log_gamma(s);
}

inline double log_beta(const DirichletParams& p) { return log_beta(p.alpha()); }

inline double log_pdf(const Composition& x, const DirichletParams& p) {
  if (x.size() != p.size()) throw DimensionError("log_pdf: dimension mismatch");
  double acc = -log_beta(p);
  for (std::size_t i = 0; i < x.size(); ++i) acc += (p[i] - 1.0) * std::log(x[i]);
  return acc;
}

/// Log-likelihood of the samples summarized by `stats`.
inline double log_likelihood(const SufficientStats& stats, std::span<const double> alpha) {
  double acc = -static_cast<double>(stats.count()) * log_beta(alpha);
  for (std::size_t i = 0; i < alpha.size(); ++i) acc += (alpha[i] - 1.0) * stats.sum_log(i);
  return acc;
}

inline double log_likelihood(std::span<const Composition> data, const DirichletParams& p) {
  if (data.empty()) throw EmptySegment("log_likelihood: no samples");
  double acc = 0.0;
  for (const auto& x : data) acc += log_pdf(x, p);
  return acc;
}

/// Moment-matching initializer: alpha = mean * s with s taken from the
/// first component's mean and variance, clamped to [alpha_min, alpha_max].
inline std::vector<double> moment_match_init(const SufficientStats& stats) {
  const std::size_t k = stats.dimension();
  const double m1 = stats.mean(0);
  const double v1 = stats.mean_sq(0) - m1 * m1;
  double s = 1.0;
  if (v1 > 1e-14 * m1 * m1) {
    s = (m1 - m1 * m1) / v1 - 1.0;
    if (!(s > 0.0) || !std::isfinite(s)) s = 1.0;
  }
  std::vector<double> alpha(k);
  for (std::size_t i = 0; i < k; ++i) {
    alpha[i] = std::clamp(stats.mean(i) * s, alpha_min, alpha_max);
  }
  return alpha;
}

inline DirichletParams moment_match_init(std::span<const Composition> data) {
  if (data.size() < 2) throw InsufficientData("moment_match_init needs at least 2 samples");
  return DirichletParams(moment_match_init(SufficientStats(data)));
}

enum class FitMethod {
  // Minka fixed point with a Newton correction of the overall scale.
  fixed_point,
  // Minka's Newton step (diagonal plus rank-one Hessian, O(K) solve);
  // falls back to a fixed-point sweep whenever a step leaves the domain.
  newton,
};

struct FitOptions {
  double tol = 1e-7;
  int max_iter = 1000;
  FitMethod method = FitMethod::fixed_point;
};

struct FitResult {
  std::vector<double> alpha;
  int iterations = 0;
  bool converged = false;
  // Some component sits on the alpha_min/alpha_max clamp (degenerate data).
  bool clamped = false;
  // max_i |digamma(alpha_i) - digamma(sum alpha) - mean_log_i| over the
  // unclamped components.
  double residual = 0.0;
};

namespace detail {

inline double stationarity_residual(const SufficientStats& stats, std::span<const double> alpha) {
  double s = 0.0;
  for (double a : alpha) s += a;
  const double psi_s = digamma(s);
  double r = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] <= alpha_min || alpha[i] >= alpha_max) continue;
    r = std::max(r, std::abs(digamma(alpha[i]) - psi_s - stats.mean_log(i)));
  }
  return r;
}

// Newton for digamma(x) = y started from a nearby x0. digamma is concave
// and increasing, so after the first step the iterates approach the root
// monotonically from the left.
inline double solve_digamma(double y, double x0) {
  double x = x0;
  for (int i = 0; i < 30; ++i) {
    const double step = (digamma(x) - y) / trigamma(x);
    const double next = x - step;
    x = next > 0.0 ? next : 0.5 * x;
    if (std::abs(step) <= 1e-12 * x) break;
  }
  return x;
}

}  // namespace detail

namespace detail {

// Minka fixed-point sweep from `alpha`: next_i solves
// digamma(next_i) = digamma(sum alpha) + mean_log_i.
inline void fixed_point_sweep(const SufficientStats& stats, std::span<const double> alpha,
                              double psi_sum, std::span<double> next) {
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    next[i] = std::clamp(solve_digamma(psi_sum + stats.mean_log(i), alpha[i]), alpha_min,
                         alpha_max);
  }
}

inline double relative_change(std::span<const double> from, std::span<const double> to) {
  double change = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    change = std::max(change, std::abs(to[i] - from[i]) / from[i]);
  }
  return change;
}

inline bool on_clamp(double a) { return a <= alpha_min || a >= alpha_max; }

// Every component has (numerically) zero spread: all samples coincide.
inline bool identical_samples(const SufficientStats& stats) {
  for (std::size_t i = 0; i < stats.dimension(); ++i) {
    const double m = stats.mean(i);
    if (stats.mean_sq(i) - m * m > 1e-12 * m * m) return false;
  }
  return true;
}

inline void fit_fixed_point(const SufficientStats& stats, const FitOptions& opts,
                            std::vector<double>& alpha, FitResult& out) {
  const std::size_t k = alpha.size();
  std::vector<double> next(k);
  for (int it = 1; it <= opts.max_iter; ++it) {
    double s = 0.0;
    for (double a : alpha) s += a;
    fixed_point_sweep(stats, alpha, digamma(s), next);
    const double change = relative_change(alpha, next);
    out.iterations = it;

    // Residual of the swept point; the same digamma values drive the
    // scale correction.
    double s_next = 0.0;
    for (double a : next) s_next += a;
    const double psi_next = digamma(s_next);
    double residual = 0.0;
    double grad = s_next * psi_next;
    double hess = s_next * s_next * trigamma(s_next);
    for (std::size_t i = 0; i < k; ++i) {
      const double a = next[i];
      const double psi = digamma(a);
      if (!on_clamp(a)) residual = std::max(residual, std::abs(psi - psi_next - stats.mean_log(i)));
      grad += a * (stats.mean_log(i) - psi);
      hess -= a * a * trigamma(a);
    }
    out.residual = residual;
    if (change <= opts.tol && residual <= 10.0 * opts.tol) {
      out.converged = true;
      alpha = next;
      return;
    }
    // Newton step on the scale c of alpha -> c * alpha; the objective is
    // concave along the ray.
    const double c = hess < 0.0 ? std::clamp(1.0 - grad / hess, 0.25, 4.0) : 1.0;
    for (std::size_t i = 0; i < k; ++i) alpha[i] = std::clamp(next[i] * c, alpha_min, alpha_max);
  }
}

inline void fit_newton(const SufficientStats& stats, const FitOptions& opts,
                       std::vector<double>& alpha, FitResult& out) {
  const std::size_t k = alpha.size();
  std::vector<double> grad(k);
  std::vector<double> curv(k);
  std::vector<double> next(k);
  for (int it = 1; it <= opts.max_iter; ++it) {
    double s = 0.0;
    for (double a : alpha) s += a;
    const double psi_s = digamma(s);
    const double z = trigamma(s);
    double residual = 0.0;
    double sum_gq = 0.0;
    double sum_inv_q = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      // Per-sample gradient and Hessian diagonal.
      grad[i] = psi_s - digamma(alpha[i]) + stats.mean_log(i);
      curv[i] = -trigamma(alpha[i]);
      if (!on_clamp(alpha[i])) residual = std::max(residual, std::abs(grad[i]));
      sum_gq += grad[i] / curv[i];
      sum_inv_q += 1.0 / curv[i];
    }
    out.iterations = it;
    out.residual = residual;

    // H = diag(curv) + z 11^T, inverted by Sherman-Morrison.
    const double b = sum_gq / (1.0 / z + sum_inv_q);
    bool in_domain = true;
    for (std::size_t i = 0; i < k; ++i) {
      next[i] = alpha[i] - (grad[i] - b) / curv[i];
      if (!(next[i] > 0.0) || !std::isfinite(next[i])) in_domain = false;
    }
    if (!in_domain) {
      fixed_point_sweep(stats, alpha, psi_s, next);
    } else {
      for (double& a : next) a = std::clamp(a, alpha_min, alpha_max);
    }
    const double change = relative_change(alpha, next);
    if (change <= opts.tol && residual <= 10.0 * opts.tol) {
      // The current point carries the verified residual.
      out.converged = true;
      return;
    }
    alpha.swap(next);
  }
}

}  // namespace detail

/// Maximum-likelihood Dirichlet parameters from sufficient statistics.
///
/// The fixed-point solver iterates alpha_i <- inv_digamma(digamma(sum alpha)
/// + mean_log_i). Its only slow mode is the overall scale of alpha (the
/// contraction factor there approaches 1 as alpha grows), so every sweep is
/// followed by one Newton step along alpha -> c * alpha. Both solvers stop
/// once an update changes alpha by at most `tol` relative and the
/// stationarity residual of the returned alpha is at most 10 * tol. Starts
/// from moment matching unless `init` is given.
inline FitResult fit_mle(const SufficientStats& stats, const FitOptions& opts = {},
                         std::optional<std::span<const double>> init = std::nullopt) {
  const std::size_t k = stats.dimension();
  FitResult out;
  std::vector<double> alpha;
  if (stats.count() >= 2 && detail::identical_samples(stats)) {
    // The likelihood grows without bound along the mean direction, so the
    // clamped optimum puts the largest component on alpha_max.
    double top = 0.0;
    for (std::size_t i = 0; i < k; ++i) top = std::max(top, stats.mean(i));
    for (std::size_t i = 0; i < k; ++i) {
      alpha.push_back(std::clamp(stats.mean(i) * alpha_max / top, alpha_min, alpha_max));
    }
    out.converged = true;
    out.clamped = true;
    out.alpha = std::move(alpha);
    return out;
  }
  if (init && init->size() == k) {
    alpha.assign(init->begin(), init->end());
  } else {
    alpha = moment_match_init(stats);
  }
  if (opts.method == FitMethod::newton) {
    detail::fit_newton(stats, opts, alpha, out);
  } else {
    detail::fit_fixed_point(stats, opts, alpha, out);
  }
  if (!out.converged) {
    out.residual = detail::stationarity_residual(stats, alpha);
    out.converged = out.residual <= 100.0 * opts.tol;
  }
  out.clamped = std::any_of(alpha.begin(), alpha.end(), detail::on_clamp);
  out.alpha = std::move(alpha);
  return out;
}

/// Throwing convenience over a list of samples.
inline DirichletParams fit_mle(std::span<const Composition> data, double tol = 1e-7,
                               int max_iter = 1000) {
  if (data.size() < 2) throw InsufficientData("fit_mle needs at least 2 samples");
  const SufficientStats stats(data);
  FitResult r = fit_mle(stats, FitOptions{tol, max_iter});
  if (!r.converged) {
    throw NonConvergence("fit_mle did not converge after " + std::to_string(r.iterations) +
                             " iterations (residual " + std::to_string(r.residual) + ")",
                         r.alpha, r.residual);
  }
  return DirichletParams(std::move(r.alpha));
}

/// KL(a || b), clamped at 0 against rounding.
inline double kl_dirichlet(const DirichletParams& a, const DirichletParams& b) {
  if (a.size() != b.size()) throw DimensionError("kl_dirichlet: dimension mismatch");
  const double psi_sum = digamma(a.precision());
  double acc = log_beta(b) - log_beta(a);
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += (a[i] - b[i]) * (digamma(a[i]) - psi_sum);
  }
  return std::max(acc, 0.0);
}

inline double symmetric_kl(const DirichletParams& a, const DirichletParams& b) {
  return kl_dirichlet(a, b) + kl_dirichlet(b, a);
}

/// One draw via normalized gamma variates; redraws the (astronomically
/// rare) all-underflow case.
template <class Rng>
std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
  std::vector<double> x(alpha.size());
  for (;;) {
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      std::gamma_distribution<double> g(alpha[i], 1.0);
      x[i] = g(rng);
      total += x[i];
    }
    if (total > 0.0 && std::isfinite(total)) {
      for (double& v : x) v /= total;
      return x;
    }
  }
}

}  // namespace odcp
