#pragma once

// Detection on general (non-compositional) data: standardize, map onto the
// simplex, detect. Change-point indices refer to the original rows.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "odcp/detector.hpp"
#include "odcp/simplex.hpp"
#include "odcp/transform.hpp"

namespace odcp {

/// Batch: the transform is fitted on the whole series unless supplied.
inline std::vector<ChangePointReport> detect_general(
    const Series& series, const DetectorConfig& cfg,
    const std::optional<Standardization>& transform = std::nullopt,
    std::vector<TestRecord>* trace = nullptr) {
  const Standardization s = transform ? *transform : fit_standardization(series);
  return detect(to_compositional(series, s), cfg, trace);
}

/// Streaming: buffers the first initial_window rows, fits the transform on
/// them and keeps it frozen for the rest of the stream.
class GeneralStreamDetector {
public:
  explicit GeneralStreamDetector(DetectorConfig cfg,
                                 std::optional<Standardization> transform = std::nullopt)
      : cfg_(cfg), detector_(cfg), transform_(std::move(transform)) {}

  std::vector<ChangePointReport> feed(const std::vector<std::vector<double>>& rows) {
    if (transform_) return push(rows);
    pending_.insert(pending_.end(), rows.begin(), rows.end());
    if (pending_.size() < cfg_.initial_window) return {};
    return release();
  }

  std::vector<ChangePointReport> finish() {
    std::vector<ChangePointReport> out;
    if (!transform_ && !pending_.empty()) {
      if (pending_.size() < 2) {
        throw InsufficientData("need at least 2 rows to fit the transform");
      }
      out = release();
    }
    auto tail = detector_.finish();
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
  }

  const std::optional<Standardization>& transform() const noexcept { return transform_; }

private:
  std::vector<ChangePointReport> release() {
    const std::size_t n = std::min(pending_.size(), cfg_.initial_window);
    transform_ = fit_standardization(Series(
        std::vector<std::vector<double>>(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n)),
        SeriesKind::general));
    std::vector<std::vector<double>> rows;
    rows.swap(pending_);
    return push(rows);
  }

  std::vector<ChangePointReport> push(const std::vector<std::vector<double>>& rows) {
    std::vector<Composition> batch;
    batch.reserve(rows.size());
    for (const auto& r : rows) batch.push_back(forward_map(r, *transform_));
    return detector_.feed(batch);
  }

  DetectorConfig cfg_;
  Detector detector_;
  std::optional<Standardization> transform_;
  std::vector<std::vector<double>> pending_;
};

}  // namespace odcp
