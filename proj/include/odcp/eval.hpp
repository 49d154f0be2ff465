#pragma once

// Precision / recall of detected change points against ground truth within
// a tolerance window, window sweeps and Monte-Carlo averaging.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "odcp/error.hpp"
#include "odcp/parallel.hpp"

namespace odcp {

enum class Matching {
  one_to_one,     // greedy by distance, each index used at most once
  any_in_window,  // a detection is correct if any truth lies within W
};

struct EvalResult {
  std::optional<double> precision;  // empty when nothing was detected
  double recall = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (detected, truth)
  std::size_t tolerance_w = 0;
  std::size_t detected_count = 0;
  std::size_t truth_count = 0;
};

/// Default tolerance: 4% of the segment length, rounded.
inline std::size_t default_tolerance(std::size_t segment_length) {
  return static_cast<std::size_t>(std::llround(0.04 * static_cast<double>(segment_length)));
}

namespace detail {

inline void require_sorted(const std::vector<std::size_t>& v, const char* what) {
  if (!std::is_sorted(v.begin(), v.end())) {
    throw ContractError(std::string(what) + " indices must be sorted ascending");
  }
}

inline std::size_t distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

}  // namespace detail

inline EvalResult match_and_score(const std::vector<std::size_t>& detected,
                                  const std::vector<std::size_t>& truth, std::size_t w,
                                  Matching mode = Matching::one_to_one) {
  detail::require_sorted(detected, "detected");
  detail::require_sorted(truth, "truth");
  EvalResult r;
  r.tolerance_w = w;
  r.detected_count = detected.size();
  r.truth_count = truth.size();

  std::size_t correct_detected = 0;
  std::size_t covered_truth = 0;
  if (mode == Matching::one_to_one) {
    // Candidate pairs ordered by distance, then truth index, then detection.
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < detected.size(); ++i) {
      for (std::size_t j = 0; j < truth.size(); ++j) {
        const std::size_t dist = detail::distance(detected[i], truth[j]);
        if (dist <= w) pairs.emplace_back(dist, j, i);
      }
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> used_d(detected.size(), false);
    std::vector<bool> used_t(truth.size(), false);
    for (const auto& [dist, j, i] : pairs) {
      if (used_d[i] || used_t[j]) continue;
      used_d[i] = used_t[j] = true;
      r.matches.emplace_back(detected[i], truth[j]);
    }
    std::sort(r.matches.begin(), r.matches.end());
    correct_detected = covered_truth = r.matches.size();
  } else {
    for (std::size_t i = 0; i < detected.size(); ++i) {
      std::optional<std::size_t> best;
      for (std::size_t j = 0; j < truth.size(); ++j) {
        const std::size_t dist = detail::distance(detected[i], truth[j]);
        if (dist <= w && (!best || dist < detail::distance(detected[i], truth[*best]))) best = j;
      }
      if (best) {
        ++correct_detected;
        r.matches.emplace_back(detected[i], truth[*best]);
      }
    }
    for (std::size_t t : truth) {
      if (std::any_of(detected.begin(), detected.end(),
                      [&](std::size_t d) { return detail::distance(d, t) <= w; })) {
        ++covered_truth;
      }
    }
  }

  if (!detected.empty()) {
    r.precision = static_cast<double>(correct_detected) / static_cast<double>(detected.size());
  }
  if (truth.empty()) {
    r.recall = detected.empty() ? 1.0 : 0.0;
  } else {
    r.recall = static_cast<double>(covered_truth) / static_cast<double>(truth.size());
  }
  return r;
}

struct CurvePoint {
  std::size_t w = 0;
  std::optional<double> precision;
  double recall = 0.0;
};

inline std::vector<CurvePoint> sweep_curves(const std::vector<std::size_t>& detected,
                                            const std::vector<std::size_t>& truth,
                                            std::size_t w_max,
                                            Matching mode = Matching::one_to_one) {
  std::vector<CurvePoint> out;
  out.reserve(w_max + 1);
  for (std::size_t w = 0; w <= w_max; ++w) {
    const EvalResult r = match_and_score(detected, truth, w, mode);
    out.push_back({w, r.precision, r.recall});
  }
  return out;
}

struct RunRow {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalResult result;
};

struct Aggregate {
  std::optional<double> mean_precision;  // over runs with a defined precision
  std::optional<double> mean_recall;     // over successful runs
  std::size_t null_precision = 0;
  std::size_t failed = 0;
  std::vector<RunRow> rows;
};

using SeededRun = std::function<EvalResult(std::uint64_t)>;

/// Runs seeds seed0 .. seed0 + runs - 1. A throwing run is recorded as
/// failed and left out of the means.
inline Aggregate monte_carlo(const SeededRun& runner, std::size_t runs, std::uint64_t seed0 = 0,
                             unsigned threads = 1) {
  if (runs < 1) throw ContractError("monte_carlo needs at least one run");
  Aggregate agg;
  agg.rows.resize(runs);
  parallel_for(runs, threads, [&](std::size_t i) {
    RunRow& row = agg.rows[i];
    row.seed = seed0 + i;
    try {
      row.result = runner(row.seed);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  double p_sum = 0.0;
  double r_sum = 0.0;
  std::size_t p_n = 0;
  std::size_t r_n = 0;
  for (const RunRow& row : agg.rows) {
    if (!row.ok) {
      ++agg.failed;
      continue;
    }
    r_sum += row.result.recall;
    ++r_n;
    if (row.result.precision) {
      p_sum += *row.result.precision;
      ++p_n;
    } else {
      ++agg.null_precision;
    }
  }
  if (p_n > 0) agg.mean_precision = p_sum / static_cast<double>(p_n);
  if (r_n > 0) agg.mean_recall = r_sum / static_cast<double>(r_n);
  return agg;
}

}  // namespace odcp
