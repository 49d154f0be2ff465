#pragma once

// Single change-point scan, significance testing by random subsets, and the
// multiple change-point active-window loop (batch and streaming).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "odcp/dirichlet.hpp"
#include "odcp/error.hpp"
#include "odcp/parallel.hpp"
#include "odcp/rng.hpp"
#include "odcp/simplex.hpp"

namespace odcp {

enum class SignificanceMethod {
  // Each replicate draws nested uniformly random subsets of every admissible
  // size as left partitions (complements as right) and keeps the best split.
  random_subset,
  // Each replicate draws one subset of uniformly random size. No max over
  // sizes, so the null distribution does not match Z*; kept for comparison.
  single_subset,
  // Reference: permute the window and rerun the full scan per replicate.
  full_permutation,
};

inline const char* to_string(SignificanceMethod m) {
  switch (m) {
    case SignificanceMethod::random_subset: return "random-subset";
    case SignificanceMethod::single_subset: return "single-subset";
    case SignificanceMethod::full_permutation: return "full-permutation";
  }
  return "?";
}

struct DetectorConfig {
  std::size_t initial_window = 200;
  std::size_t batch = 50;
  std::size_t replicates = 199;
  double alpha = 0.05;
  // 0 selects max(10, K + 1) for compositional dimension K.
  std::size_t min_segment = 0;
  double mle_tol = 1e-7;
  int mle_max_iter = 1000;
  // Solver for the per-split fits; Newton is several times cheaper per fit
  // and both stop on the same tolerance.
  FitMethod fit_method = FitMethod::newton;
  double eps = default_eps;
  std::uint64_t seed = 0;
  SignificanceMethod method = SignificanceMethod::random_subset;
  // Stop drawing replicates once the test can no longer reject. Changes
  // only the reported p-value of non-significant tests (a lower bound).
  bool early_stop = true;
  unsigned threads = 1;
};

inline std::size_t min_segment_floor(std::size_t k) { return k + 1; }

inline std::size_t resolved_min_segment(const DetectorConfig& cfg, std::size_t k) {
  return cfg.min_segment != 0 ? cfg.min_segment : std::max<std::size_t>(10, k + 1);
}

inline void validate_config(const DetectorConfig& cfg, std::size_t k) {
  const std::size_t m = resolved_min_segment(cfg, k);
  if (m < min_segment_floor(k)) {
    throw ContractError("min_segment " + std::to_string(m) + " is below the floor " +
                        std::to_string(min_segment_floor(k)) + " for dimension " +
                        std::to_string(k));
  }
  if (cfg.initial_window < 2 * m) {
    throw ContractError("initial window must be at least 2 * min_segment");
  }
  if (cfg.batch < 1) throw ContractError("batch size must be at least 1");
  if (cfg.replicates < 19) throw ContractError("need at least 19 replicates");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ContractError("alpha must lie in (0, 1)");
  if (!(cfg.mle_tol > 0.0) || cfg.mle_max_iter < 1) throw ContractError("bad MLE settings");
}

struct ScanResult {
  std::size_t tau_star = 0;  // size of the left segment
  double z_star = 0.0;
  std::size_t tau_first = 0;  // ll_profile[j] belongs to tau = tau_first + j
  std::vector<double> ll_profile;  // NaN where the fit failed
  std::vector<std::size_t> skipped;  // candidate taus dropped for non-convergence
  double ll0 = 0.0;
  bool ll0_converged = true;
  DirichletParams left_params;
  DirichletParams right_params;
};

struct SignificanceResult {
  double p_value = 1.0;
  std::size_t exceedances = 0;
  std::size_t replicates_run = 0;
  bool significant = false;
  bool stopped_early = false;
};

struct ChangePointReport {
  std::size_t global_index = 0;
  double z_star = 0.0;
  double p_value = 1.0;
  std::pair<std::size_t, std::size_t> window_span{0, 0};  // [first, last)
  DirichletParams left_params;
  DirichletParams right_params;
};

/// One significance test performed by the windowing loop.
struct TestRecord {
  std::size_t window_begin = 0;
  std::size_t window_end = 0;
  std::size_t candidate = 0;  // global index of tau*
  double z_star = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

namespace detail {

// Flattened window with logs precomputed once.
struct WindowData {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> x;
  std::vector<double> log_x;
  SufficientStats total;

  std::span<const double> row(std::size_t i) const { return {x.data() + i * k, k}; }
  std::span<const double> log_row(std::size_t i) const { return {log_x.data() + i * k, k}; }
};

inline WindowData make_window(std::span<const Composition> window) {
  WindowData w;
  w.n = window.size();
  w.k = window.empty() ? 0 : window.front().size();
  w.x.reserve(w.n * w.k);
  w.log_x.reserve(w.n * w.k);
  w.total = SufficientStats(w.k);
  for (const auto& c : window) {
    if (c.size() != w.k) throw DimensionError("window samples differ in dimension");
    for (double v : c) {
      w.x.push_back(v);
      w.log_x.push_back(std::log(v));
    }
  }
  for (std::size_t i = 0; i < w.n; ++i) w.total.add(w.row(i), w.log_row(i));
  return w;
}

// Fits one side of a split, warm-starting from that side's previous fit.
class SideFitter {
public:
  explicit SideFitter(FitOptions opts) : opts_(opts) {}

  std::optional<double> log_lik(const SufficientStats& stats) {
    FitResult r = warm_ ? fit_mle(stats, opts_, std::span<const double>(alpha_))
                        : fit_mle(stats, opts_);
    if (!r.converged) {
      warm_ = false;
      return std::nullopt;
    }
    alpha_ = std::move(r.alpha);
    warm_ = true;
    return log_likelihood(stats, alpha_);
  }

private:
  FitOptions opts_;
  std::vector<double> alpha_;
  bool warm_ = false;
};

// LL_tau for tau in [m, n - m], left = first tau entries of `order`.
inline std::vector<double> split_profile(const WindowData& w, std::span<const std::size_t> order,
                                         std::size_t m, const FitOptions& opts) {
  std::vector<double> profile;
  if (w.n < 2 * m) return profile;
  profile.reserve(w.n - 2 * m + 1);
  SufficientStats left(w.k);
  SideFitter left_fit(opts);
  SideFitter right_fit(opts);
  for (std::size_t i = 0; i + 1 + m <= w.n; ++i) {
    const std::size_t tau = i + 1;  // left size after adding entry i
    const std::size_t idx = order.empty() ? i : order[i];
    left.add(w.row(idx), w.log_row(idx));
    if (tau < m) continue;
    const SufficientStats right = w.total.minus(left);
    const auto ll_left = left_fit.log_lik(left);
    const auto ll_right = right_fit.log_lik(right);
    profile.push_back(ll_left && ll_right ? *ll_left + *ll_right
                                          : std::numeric_limits<double>::quiet_NaN());
  }
  return profile;
}

// Largest finite entry; nullopt when every fit failed.
inline std::optional<double> profile_max(const std::vector<double>& profile) {
  std::optional<double> best;
  for (double v : profile) {
    if (std::isnan(v)) continue;
    if (!best || v > *best) best = v;
  }
  return best;
}

// Values within this relative band of the maximum count as ties; the scan
// then reports the smallest tau.
inline constexpr double tie_tolerance = 1e-9;

inline ScanResult scan(const WindowData& w, std::size_t m, const FitOptions& opts) {
  if (m < 1 || w.n < 2 * m) {
    throw InsufficientData("window of " + std::to_string(w.n) +
                           " samples is shorter than 2 * min_segment = " + std::to_string(2 * m));
  }
  ScanResult r;
  const FitResult whole = fit_mle(w.total, opts);
  r.ll0_converged = whole.converged;
  r.ll0 = log_likelihood(w.total, whole.alpha);

  r.tau_first = m;
  r.ll_profile = split_profile(w, {}, m, opts);
  for (std::size_t j = 0; j < r.ll_profile.size(); ++j) {
    if (std::isnan(r.ll_profile[j])) r.skipped.push_back(m + j);
  }
  const auto best = profile_max(r.ll_profile);
  if (!best) throw NonConvergence("no candidate split produced a converged fit", whole.alpha, 0.0);
  const double band = tie_tolerance * std::max(1.0, std::abs(*best));
  for (std::size_t j = 0; j < r.ll_profile.size(); ++j) {
    if (!std::isnan(r.ll_profile[j]) && r.ll_profile[j] >= *best - band) {
      r.tau_star = m + j;
      break;
    }
  }
  // The split model nests the single one, so a negative value is rounding.
  r.z_star = std::max(0.0, *best - r.ll0);

  SufficientStats left(w.k);
  for (std::size_t i = 0; i < r.tau_star; ++i) left.add(w.row(i), w.log_row(i));
  r.left_params = DirichletParams(fit_mle(left, opts).alpha);
  r.right_params = DirichletParams(fit_mle(w.total.minus(left), opts).alpha);
  return r;
}

inline FitOptions fit_options(const DetectorConfig& cfg) {
  return FitOptions{cfg.mle_tol, cfg.mle_max_iter, cfg.fit_method};
}

// Statistic of one replicate; nullopt if no split could be fitted.
inline std::optional<double> replicate_statistic(const WindowData& w,
                                                 std::span<const Composition> window,
                                                 double ll0, std::size_t m,
                                                 const DetectorConfig& cfg, std::uint64_t key,
                                                 std::size_t replicate, std::size_t attempt) {
  const FitOptions opts = fit_options(cfg);
  switch (cfg.method) {
    case SignificanceMethod::random_subset: {
      auto rng = make_stream(cfg.seed, {stream_tag::random_subset, key, replicate, attempt});
      // Partial Fisher-Yates: after step s the first s entries form a
      // uniformly random s-subset, nested in the (s+1)-subset.
      std::vector<std::size_t> order(w.n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t s = 0; s + m < w.n; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, w.n - 1);
        std::swap(order[s], order[pick(rng)]);
      }
      const auto best = profile_max(split_profile(w, order, m, opts));
      if (!best) return std::nullopt;
      return *best - ll0;
    }
    case SignificanceMethod::single_subset: {
      auto rng = make_stream(cfg.seed, {stream_tag::single_subset, key, replicate, attempt});
      std::uniform_int_distribution<std::size_t> size_dist(m, w.n - m);
      const std::size_t size = size_dist(rng);
      std::vector<std::size_t> order(w.n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      SufficientStats left(w.k);
      for (std::size_t s = 0; s < size; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, w.n - 1);
        std::swap(order[s], order[pick(rng)]);
        left.add(w.row(order[s]), w.log_row(order[s]));
      }
      const SufficientStats right = w.total.minus(left);
      const FitResult fl = fit_mle(left, opts);
      const FitResult fr = fit_mle(right, opts);
      if (!fl.converged || !fr.converged) return std::nullopt;
      return log_likelihood(left, fl.alpha) + log_likelihood(right, fr.alpha) - ll0;
    }
    case SignificanceMethod::full_permutation: {
      auto rng = make_stream(cfg.seed, {stream_tag::full_permutation, key, replicate, attempt});
      std::vector<Composition> shuffled(window.begin(), window.end());
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      try {
        return scan(make_window(shuffled), m, opts).z_star;
      } catch (const NonConvergence&) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

inline SignificanceResult significance(const WindowData& w, std::span<const Composition> window,
                                       double ll0, double z_star, std::size_t m,
                                       const DetectorConfig& cfg, std::uint64_t key) {
  if (w.n < 2 * m) throw InsufficientData("significance: window shorter than 2 * min_segment");
  const std::size_t total = cfg.replicates;
  const std::size_t max_attempts = 4;
  // Most exceedances compatible with p <= alpha.
  const double allowed = std::floor(cfg.alpha * static_cast<double>(total + 1) + 1e-9) - 1.0;

  SignificanceResult out;
  std::size_t failures = 0;
  constexpr std::size_t chunk = 16;
  std::vector<std::optional<double>> stats(chunk);
  std::vector<std::size_t> failed(chunk);
  for (std::size_t begin = 0; begin < total; begin += chunk) {
    const std::size_t count = std::min(chunk, total - begin);
    parallel_for(count, cfg.threads, [&](std::size_t j) {
      failed[j] = 0;
      stats[j].reset();
      for (std::size_t attempt = 0; attempt < max_attempts && !stats[j]; ++attempt) {
        stats[j] = replicate_statistic(w, window, ll0, m, cfg, key, begin + j, attempt);
        if (!stats[j]) ++failed[j];
      }
    });
    for (std::size_t j = 0; j < count; ++j) {
      failures += failed[j];
      if (!stats[j] || failures > 3 * total) {
        throw SignificanceFailure("significance: replicate fits kept failing to converge");
      }
      if (*stats[j] >= z_star) ++out.exceedances;
    }
    out.replicates_run = begin + count;
    if (cfg.early_stop && static_cast<double>(out.exceedances) > allowed &&
        out.replicates_run < total) {
      out.stopped_early = true;
      break;
    }
  }
  out.p_value = static_cast<double>(1 + out.exceedances) / static_cast<double>(total + 1);
  out.significant = static_cast<double>(out.exceedances) <= allowed;
  return out;
}

}  // namespace detail

/// Best single split of `window`: maximizes the two-segment log-likelihood
/// over left sizes tau in [min_segment, t - min_segment].
inline ScanResult scan_window(std::span<const Composition> window, const DetectorConfig& cfg) {
  const std::size_t k = window.empty() ? 0 : window.front().size();
  const std::size_t m = resolved_min_segment(cfg, k);
  if (window.size() < 2 * m) {
    throw InsufficientData("scan_window: window of " + std::to_string(window.size()) +
                           " samples is shorter than 2 * min_segment = " + std::to_string(2 * m));
  }
  return detail::scan(detail::make_window(window), m, detail::fit_options(cfg));
}

/// Monte-Carlo p-value of `z_star` for this window, (1 + #{Z_i >= z*}) / (M + 1).
/// `stream_key` selects the random streams; the windowing loop derives it
/// from the window's global position.
inline SignificanceResult significance(std::span<const Composition> window, double z_star,
                                       const DetectorConfig& cfg, std::uint64_t stream_key = 0) {
  const std::size_t k = window.empty() ? 0 : window.front().size();
  const std::size_t m = resolved_min_segment(cfg, k);
  const auto w = detail::make_window(window);
  if (w.n < 2 * m) throw InsufficientData("significance: window shorter than 2 * min_segment");
  const double ll0 = log_likelihood(w.total, fit_mle(w.total, detail::fit_options(cfg)).alpha);
  return detail::significance(w, window, ll0, z_star, m, cfg, stream_key);
}

/// Active-window detector. Feed samples in any chunking; call finish() at the
/// end of the stream. Results equal detect() on the concatenated input.
class Detector {
public:
  explicit Detector(DetectorConfig cfg) : cfg_(cfg) {}

  std::vector<ChangePointReport> feed(std::span<const Composition> batch) {
    if (finished_) throw ContractError("feed after finish");
    for (const auto& c : batch) {
      if (k_ == 0) {
        k_ = c.size();
        validate_config(cfg_, k_);
        m_ = resolved_min_segment(cfg_, k_);
        target_end_ = cfg_.initial_window;
      } else if (c.size() != k_) {
        throw DimensionError("sample dimension " + std::to_string(c.size()) +
                             " does not match detector dimension " + std::to_string(k_));
      }
      buffer_.push_back(c);
      ++received_;
    }
    return advance(false);
  }

  std::vector<ChangePointReport> finish() {
    if (finished_) return {};
    auto out = advance(true);
    finished_ = true;
    return out;
  }

  std::size_t received() const noexcept { return received_; }
  std::size_t window_begin() const noexcept { return begin_; }
  std::size_t buffered() const noexcept { return buffer_.size(); }
  const std::vector<TestRecord>& tests() const noexcept { return tests_; }
  const DetectorConfig& config() const noexcept { return cfg_; }

private:
  std::vector<ChangePointReport> advance(bool final) {
    std::vector<ChangePointReport> out;
    if (k_ == 0) return out;
    for (;;) {
      if (!final && received_ < target_end_) break;
      const std::size_t end = std::min(target_end_, received_);
      const std::size_t len = end - begin_;
      // A stream ending exactly on a batch boundary would otherwise re-test
      // the last window at finish().
      const bool tested = last_tested_ && *last_tested_ == std::pair{begin_, end};
      if (len >= 2 * m_ && !tested) {
        last_tested_ = std::pair{begin_, end};
        const std::span<const Composition> window(buffer_.data(), len);
        const auto w = detail::make_window(window);
        const ScanResult scan = detail::scan(w, m_, detail::fit_options(cfg_));
        const std::uint64_t key = derive_seed(begin_, {end});
        const SignificanceResult sig =
            detail::significance(w, window, scan.ll0, scan.z_star, m_, cfg_, key);
        const std::size_t g = begin_ + scan.tau_star;
        tests_.push_back({begin_, end, g, scan.z_star, sig.p_value, sig.significant});
        if (sig.significant) {
          out.push_back({g, scan.z_star, sig.p_value, {begin_, end}, scan.left_params,
                         scan.right_params});
          buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(scan.tau_star));
          begin_ = g;
          target_end_ = g + cfg_.initial_window;
          continue;
        }
      }
      if (final && end == received_) break;
      target_end_ = end + cfg_.batch;
    }
    return out;
  }

  DetectorConfig cfg_;
  std::size_t k_ = 0;
  std::size_t m_ = 0;
  std::vector<Composition> buffer_;  // samples from begin_ onward
  std::size_t begin_ = 0;
  std::size_t target_end_ = 0;
  std::size_t received_ = 0;
  bool finished_ = false;
  std::optional<std::pair<std::size_t, std::size_t>> last_tested_;
  std::vector<TestRecord> tests_;
};

/// Batch detection over a compositional series.
inline std::vector<ChangePointReport> detect(const Series& series, const DetectorConfig& cfg,
                                             std::vector<TestRecord>* trace = nullptr) {
  const std::vector<Composition> samples = to_compositions(series);
  const std::size_t k = series.dimension();
  validate_config(cfg, k);
  const std::size_t m = resolved_min_segment(cfg, k);
  if (samples.size() < 2 * m) {
    throw InsufficientData("series of " + std::to_string(samples.size()) +
                           " samples is shorter than 2 * min_segment = " + std::to_string(2 * m));
  }
  Detector det(cfg);
  auto reports = det.feed(samples);
  auto tail = det.finish();
  reports.insert(reports.end(), tail.begin(), tail.end());
  if (trace) *trace = det.tests();
  return reports;
}

}  // namespace odcp
