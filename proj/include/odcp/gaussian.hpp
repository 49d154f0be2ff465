#pragma once

// Multivariate normal with a Cholesky-factored covariance. Used by the
// synthetic generators and as the closed-form density in transform checks.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "odcp/error.hpp"

namespace odcp {

class MvNormal {
public:
  MvNormal() = default;

  /// `cov` is row-major d x d, symmetric positive definite.
  MvNormal(std::vector<double> mean, std::vector<double> cov)
      : mean_(std::move(mean)), cov_(std::move(cov)) {
    const std::size_t d = mean_.size();
    if (d == 0) throw DimensionError("normal: empty mean");
    if (cov_.size() != d * d) throw DimensionError("normal: covariance is not d x d");
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (std::abs(cov_[i * d + j] - cov_[j * d + i]) >
            1e-12 * (std::abs(cov_[i * d + j]) + std::abs(cov_[j * d + i]) + 1.0)) {
          throw DomainError("normal: covariance is not symmetric");
        }
      }
    }
    chol_.assign(d * d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      double diag = cov_[j * d + j];
      for (std::size_t k = 0; k < j; ++k) diag -= chol_[j * d + k] * chol_[j * d + k];
      if (!(diag > 0.0)) throw DomainError("normal: covariance is not positive definite");
      const double ljj = std::sqrt(diag);
      chol_[j * d + j] = ljj;
      for (std::size_t i = j + 1; i < d; ++i) {
        double v = cov_[i * d + j];
        for (std::size_t k = 0; k < j; ++k) v -= chol_[i * d + k] * chol_[j * d + k];
        chol_[i * d + j] = v / ljj;
      }
    }
    log_norm_ = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
    for (std::size_t j = 0; j < d; ++j) log_norm_ -= std::log(chol_[j * d + j]);
  }

  static MvNormal diagonal(std::vector<double> mean, std::span<const double> sd) {
    const std::size_t d = mean.size();
    if (sd.size() != d) throw DimensionError("normal: sd length differs from mean");
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) cov[i * d + i] = sd[i] * sd[i];
    return MvNormal(std::move(mean), std::move(cov));
  }

  std::size_t dimension() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& covariance() const noexcept { return cov_; }

  double log_density(std::span<const double> y) const {
    const std::size_t d = dimension();
    if (y.size() != d) throw DimensionError("normal: sample dimension mismatch");
    // Forward solve L z = y - mu.
    std::vector<double> z(d);
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double v = y[i] - mean_[i];
      for (std::size_t k = 0; k < i; ++k) v -= chol_[i * d + k] * z[k];
      z[i] = v / chol_[i * d + i];
      quad += z[i] * z[i];
    }
    return log_norm_ - 0.5 * quad;
  }

  template <class Rng>
  std::vector<double> sample(Rng& rng) const {
    const std::size_t d = dimension();
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> z(d);
    for (double& v : z) v = n01(rng);
    std::vector<double> y(mean_);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k <= i; ++k) y[i] += chol_[i * d + k] * z[k];
    }
    return y;
  }

private:
  std::vector<double> mean_;
  std::vector<double> cov_;
  std::vector<double> chol_;
  double log_norm_ = 0.0;
};

}  // namespace odcp
