#pragma once

// Core data model: compositions on the open simplex, fixed-dimension series
// and change-point labelings.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "odcp/error.hpp"

namespace odcp {

inline constexpr double default_eps = 1e-6;
inline constexpr double sum_tolerance = 1e-9;

/// A strictly positive probability vector of length >= 2.
class Composition {
public:
  Composition() = default;

  /// Accepts values that are already interior and sum to 1 within
  /// sum_tolerance; the stored vector is renormalized exactly.
  explicit Composition(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
      throw InvalidSample("composition needs at least 2 components");
    }
    double total = 0.0;
    for (double v : values_) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidSample("composition components must be strictly positive");
      }
      total += v;
    }
    if (std::abs(total - 1.0) > sum_tolerance) {
      throw InvalidSample("composition does not sum to 1 (sum = " + std::to_string(total) + ")");
    }
    for (double& v : values_) v /= total;
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  friend bool operator==(const Composition&, const Composition&) = default;

private:
  std::vector<double> values_;
};

/// Normalizes `raw` onto the simplex and lifts every component to at least
/// `eps`, taking the added mass proportionally from the components above the
/// floor. The result has min component >= eps exactly and sums to 1.
inline Composition clamp_to_interior(std::span<const double> raw, double eps = default_eps) {
  const std::size_t k = raw.size();
  if (k < 2) throw InvalidSample("sample needs at least 2 components");
  if (!(eps > 0.0) || !(eps < 1.0 / static_cast<double>(k))) {
    throw DomainError("eps must lie in (0, 1/K)");
  }
  double total = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw InvalidSample("sample has a non-finite component");
    if (v < 0.0) throw InvalidSample("sample has a negative component");
    total += v;
  }
  if (!(total > 0.0)) throw InvalidSample("sample has zero total mass");

  std::vector<double> x(raw.begin(), raw.end());
  for (double& v : x) v /= total;

  // Water-filling: components pinned at eps never come back up, so the
  // pinned set only grows and the loop runs at most k times.
  std::vector<bool> pinned(k, false);
  for (std::size_t round = 0; round < k; ++round) {
    std::size_t n_pinned = 0;
    double free_mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!pinned[i] && x[i] < eps) pinned[i] = true;
      if (pinned[i]) {
        ++n_pinned;
      } else {
        free_mass += x[i];
      }
    }
    if (n_pinned == 0) break;
    const double scale = (1.0 - static_cast<double>(n_pinned) * eps) / free_mass;
    bool settled = true;
    for (std::size_t i = 0; i < k; ++i) {
      if (pinned[i]) {
        x[i] = eps;
      } else {
        x[i] *= scale;
        if (x[i] < eps) settled = false;
      }
    }
    if (settled) break;
  }
  // Final exact renormalization; Composition re-divides by the sum.
  return Composition(std::move(x));
}

enum class SeriesKind { compositional, general };

inline const char* to_string(SeriesKind kind) {
  return kind == SeriesKind::compositional ? "compositional" : "general";
}

/// Ordered samples of one fixed dimension. Construction enforces non-empty
/// and uniform dimension; compositional validity is reported by
/// validate_series rather than enforced, so raw ingested data can be
/// inspected before clamping.
class Series {
public:
  Series() = default;

  Series(std::vector<std::vector<double>> samples, SeriesKind kind)
      : samples_(std::move(samples)), kind_(kind) {
    if (samples_.empty()) throw InvalidSeries("series is empty");
    const std::size_t d = samples_.front().size();
    if (d == 0) throw InvalidSeries("series samples have dimension 0");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (samples_[i].size() != d) {
        throw InvalidSeries("ragged series: sample " + std::to_string(i) + " has dimension " +
                            std::to_string(samples_[i].size()) + ", expected " +
                            std::to_string(d));
      }
    }
  }

  std::size_t length() const noexcept { return samples_.size(); }
  std::size_t dimension() const noexcept { return samples_.empty() ? 0 : samples_.front().size(); }
  SeriesKind kind() const noexcept { return kind_; }
  const std::vector<double>& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<std::vector<double>>& samples() const noexcept { return samples_; }

private:
  std::vector<std::vector<double>> samples_;
  SeriesKind kind_ = SeriesKind::general;
};

/// Clamps every row and returns a compositional series.
inline Series make_compositional(const std::vector<std::vector<double>>& rows,
                                 double eps = default_eps) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      const Composition c = clamp_to_interior(rows[i], eps);
      out.emplace_back(c.begin(), c.end());
    } catch (const InvalidSample& e) {
      throw InvalidSample("row " + std::to_string(i) + ": " + e.what());
    }
  }
  return Series(std::move(out), SeriesKind::compositional);
}

/// Strict view of a compositional series as Composition values.
inline std::vector<Composition> to_compositions(const Series& s) {
  if (s.kind() != SeriesKind::compositional) {
    throw InvalidSeries("expected a compositional series");
  }
  std::vector<Composition> out;
  out.reserve(s.length());
  for (std::size_t i = 0; i < s.length(); ++i) {
    try {
      out.emplace_back(s[i]);
    } catch (const InvalidSample& e) {
      throw InvalidSeries("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

/// Strictly increasing interior change-point indices. Index g means the new
/// segment starts at sample g (0-based), so g is also the left-segment size.
class SegmentLabeling {
public:
  SegmentLabeling() = default;

  SegmentLabeling(std::vector<std::size_t> change_points, std::size_t series_length)
      : change_points_(std::move(change_points)) {
    for (std::size_t i = 0; i < change_points_.size(); ++i) {
      const std::size_t cp = change_points_[i];
      if (cp == 0 || cp >= series_length) {
        throw ContractError("change point " + std::to_string(cp) + " is not interior");
      }
      if (i > 0 && cp <= change_points_[i - 1]) {
        throw ContractError("change points must be strictly increasing");
      }
    }
  }

  const std::vector<std::size_t>& change_points() const noexcept { return change_points_; }
  std::size_t segment_count() const noexcept { return change_points_.size() + 1; }

private:
  std::vector<std::size_t> change_points_;
};

struct SeriesReport {
  std::size_t length = 0;
  std::size_t dimension = 0;
  SeriesKind kind = SeriesKind::general;
  std::vector<double> column_min;
  std::vector<double> column_max;
  // Compositional only: samples with a component <= 0 (need clamping).
  std::vector<std::size_t> boundary_samples;
  // Compositional only: samples with a negative component or a sum off 1.
  std::vector<std::size_t> off_simplex_samples;
  // General only: samples with non-finite values.
  std::vector<std::size_t> non_finite_samples;

  bool ok() const noexcept {
    return boundary_samples.empty() && off_simplex_samples.empty() && non_finite_samples.empty();
  }
};

inline SeriesReport validate_series(const Series& s) {
  SeriesReport r;
  r.length = s.length();
  r.dimension = s.dimension();
  r.kind = s.kind();
  r.column_min.assign(r.dimension, std::numeric_limits<double>::infinity());
  r.column_max.assign(r.dimension, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < s.length(); ++i) {
    const auto& row = s[i];
    double total = 0.0;
    bool boundary = false;
    bool negative = false;
    bool finite = true;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double v = row[j];
      r.column_min[j] = std::min(r.column_min[j], v);
      r.column_max[j] = std::max(r.column_max[j], v);
      total += v;
      if (!std::isfinite(v)) finite = false;
      if (v <= 0.0) boundary = true;
      if (v < 0.0) negative = true;
    }
    if (!finite) r.non_finite_samples.push_back(i);
    if (s.kind() == SeriesKind::compositional) {
      if (boundary) r.boundary_samples.push_back(i);
      if (negative || !finite || std::abs(total - 1.0) > sum_tolerance) {
        r.off_simplex_samples.push_back(i);
      }
    }
  }
  return r;
}

/// Raw-row overload; ragged input raises InvalidSeries.
inline SeriesReport validate_series(const std::vector<std::vector<double>>& rows, SeriesKind kind) {
  return validate_series(Series(rows, kind));
}

}  // namespace odcp
