#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "support.hpp"

using namespace odcp;
using odcp::testing::draw;

namespace {

std::vector<Composition> comps(std::initializer_list<std::vector<double>> rows) {
  std::vector<Composition> out;
  for (const auto& r : rows) out.emplace_back(r);
  return out;
}

double log_lik(std::span<const Composition> data, std::span<const double> a) {
  return log_likelihood(data, DirichletParams(std::vector<double>(a.begin(), a.end())));
}

// Coordinate grid refinement: a 201 x 201 log-spaced grid over the box, then
// repeated 41 x 41 grids shrinking around the incumbent.
std::pair<double, double> grid_argmax(const std::vector<Composition>& data) {
  double lo0 = std::log(0.01), hi0 = std::log(200.0);
  double lo1 = lo0, hi1 = hi0;
  double best = -INFINITY, b0 = 0.0, b1 = 0.0;
  int n = 201;
  for (int round = 0; round < 40; ++round) {
    const double s0 = (hi0 - lo0) / (n - 1), s1 = (hi1 - lo1) / (n - 1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double a[2] = {std::exp(lo0 + i * s0), std::exp(lo1 + j * s1)};
        const double v = odcp::testing::ref_log_lik(data, 0, data.size(), {a[0], a[1]});
        if (v > best) {
          best = v;
          b0 = std::log(a[0]);
          b1 = std::log(a[1]);
        }
      }
    }
    lo0 = b0 - 2 * s0, hi0 = b0 + 2 * s0;
    lo1 = b1 - 2 * s1, hi1 = b1 + 2 * s1;
    n = 41;
  }
  return {std::exp(b0), std::exp(b1)};
}

}  // namespace

TEST(LogBeta, Examples) {
  EXPECT_NEAR(log_beta(std::vector<double>{1, 1}), 0.0, 1e-12);
  EXPECT_NEAR(log_beta(std::vector<double>{2, 2}), -1.791759469, 1e-9);
  EXPECT_NEAR(log_beta(std::vector<double>{0.5, 0.5}), std::log(std::numbers::pi), 1e-12);
}

TEST(LogPdf, Examples) {
  const Composition x({0.2, 0.3, 0.5});
  EXPECT_NEAR(log_pdf(x, DirichletParams({1, 1, 1})), std::log(2.0), 1e-12);
  EXPECT_NEAR(log_pdf(x, DirichletParams({2, 1, 1})), std::log(1.2), 1e-12);
  EXPECT_NEAR(log_pdf(Composition({0.5, 0.5}), DirichletParams({2, 2})), std::log(1.5), 1e-12);
  EXPECT_THROW(log_pdf(x, DirichletParams({2, 2})), DimensionError);
}

TEST(LogLikelihood, Examples) {
  const DirichletParams flat({1, 1, 1});
  const auto two = comps({{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}});
  EXPECT_NEAR(log_likelihood(two, flat), 2 * std::log(2.0), 1e-12);
  const auto one = comps({{0.1, 0.6, 0.3}});
  EXPECT_NEAR(log_likelihood(one, DirichletParams({3, 2, 4})),
              log_pdf(one[0], DirichletParams({3, 2, 4})), 1e-14);
  const auto five = draw({1, 2, 3, 4}, 5, 9);
  EXPECT_NEAR(log_likelihood(five, DirichletParams({1, 1, 1, 1})), 5 * std::log(6.0), 1e-12);
  EXPECT_THROW(log_likelihood(std::vector<Composition>{}, flat), EmptySegment);
}

TEST(FitMle, LargeSampleConcentratesAtTruth) {
  std::mt19937_64 rng(42);
  std::vector<Composition> data;
  for (int i = 0; i < 10000; ++i) data.push_back(clamp_to_interior(sample_dirichlet(std::vector<double>{5, 5}, rng)));
  const DirichletParams a = fit_mle(data);
  EXPECT_NEAR(a[0], 5.0, 0.25);
  EXPECT_NEAR(a[1], 5.0, 0.25);
}

TEST(FitMle, MatchesGridSearch) {
  const auto data = comps({{0.2, 0.8}, {0.3, 0.7}, {0.25, 0.75}});
  const auto [g0, g1] = grid_argmax(data);
  // Frozen from an independent high-resolution grid run.
  EXPECT_NEAR(g0, 27.86185, 1e-2 * 27.86185);
  EXPECT_NEAR(g1, 83.59082, 1e-2 * 83.59082);
  for (auto method : {FitMethod::fixed_point, FitMethod::newton}) {
    const FitResult r = fit_mle(SufficientStats(data), FitOptions{1e-7, 1000, method});
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.alpha[0], g0, 1e-2 * g0);
    EXPECT_NEAR(r.alpha[1], g1, 1e-2 * g1);
  }
  const DirichletParams a = fit_mle(data);
  EXPECT_NEAR(a[0], g0, 1e-2 * g0);
  EXPECT_NEAR(a[1], g1, 1e-2 * g1);
}

TEST(FitMle, MatchesReferenceNewton) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.3, 20.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 2 + trial % 6;
    std::vector<double> alpha(k);
    for (double& v : alpha) v = u(rng);
    const auto data = draw(alpha, 50 + 10 * trial, 1000 + trial);
    const auto want = odcp::testing::ref_fit(data, 0, data.size());
    for (auto method : {FitMethod::fixed_point, FitMethod::newton}) {
      const FitResult r = fit_mle(SufficientStats(data), FitOptions{1e-10, 5000, method});
      ASSERT_TRUE(r.converged);
      for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(r.alpha[i], want[i], 1e-6 * want[i]);
    }
  }
}

TEST(FitMle, StationarityResidualWithinContract) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(0.2, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> alpha(3 + trial % 8);
    for (double& v : alpha) v = u(rng);
    const auto data = draw(alpha, 30 + trial, 2000 + trial);
    const SufficientStats stats(data);
    for (auto method : {FitMethod::fixed_point, FitMethod::newton}) {
      const FitResult r = fit_mle(stats, FitOptions{1e-7, 1000, method});
      ASSERT_TRUE(r.converged);
      double s = 0.0;
      for (double a : r.alpha) s += a;
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double res = boost::math::digamma(r.alpha[i]) - boost::math::digamma(s) - stats.mean_log(i);
        EXPECT_LE(std::abs(res), 1e-6);
      }
    }
  }
}

TEST(FitMle, DominatesMomentMatchInit) {
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> alpha{0.5 + trial * 0.3, 2.0, 7.0 - trial * 0.1};
    const auto data = draw(alpha, 20 + trial, 3000 + trial);
    const DirichletParams init = moment_match_init(data);
    const DirichletParams fit = fit_mle(data);
    EXPECT_GE(log_likelihood(data, fit), log_likelihood(data, init) - 1e-9);
  }
}

TEST(FitMle, GradientVanishesByFiniteDifferences) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> alpha(2 + trial % 5);
    for (double& v : alpha) v = u(rng);
    const auto data = draw(alpha, 50 + 5 * trial, 4000 + trial);
    const DirichletParams fit = fit_mle(data);
    std::vector<double> a(fit.alpha().begin(), fit.alpha().end());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double h = 1e-5 * a[i];
      auto up = a, dn = a;
      up[i] += h;
      dn[i] -= h;
      const double g = (log_lik(data, up) - log_lik(data, dn)) / (2 * h);
      EXPECT_LE(std::abs(g), 1e-3) << "trial " << trial << " component " << i;
    }
  }
}

TEST(FitMle, LikelihoodDominatesPerturbations) {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> alpha(2 + trial % 6);
    for (double& v : alpha) v = u(rng);
    const auto data = draw(alpha, 20 + 3 * trial, 5000 + trial);
    const DirichletParams fit = fit_mle(data);
    const double best = log_likelihood(data, fit);
    for (int p = 0; p < 20; ++p) {
      std::vector<double> b(fit.alpha().begin(), fit.alpha().end());
      for (double& v : b) v *= std::exp(jitter(rng));
      EXPECT_GE(best, log_lik(data, b) - 1e-9);
    }
  }
}

TEST(FitMle, ExactlyPermutationInvariant) {
  auto data = draw({1.5, 3.0, 0.7, 9.0}, 300, 6000);
  std::mt19937_64 rng(21);
  const FitResult base = fit_mle(SufficientStats(data));
  for (int p = 0; p < 20; ++p) {
    std::shuffle(data.begin(), data.end(), rng);
    const FitResult r = fit_mle(SufficientStats(data));
    EXPECT_EQ(r.alpha, base.alpha);
    EXPECT_EQ(r.iterations, base.iterations);
  }
}

TEST(FitMle, IncrementalStatsMatchFreshOnes) {
  const auto data = draw({2.0, 3.0, 4.0}, 100, 6100);
  SufficientStats all(data);
  SufficientStats left(3);
  for (int i = 0; i < 37; ++i) left.add(data[i]);
  const SufficientStats right = all.minus(left);
  const SufficientStats fresh(std::span<const Composition>(data).subspan(37));
  EXPECT_EQ(right.count(), fresh.count());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(right.sum_log(i), fresh.sum_log(i));
    EXPECT_EQ(right.mean(i), fresh.mean(i));
    EXPECT_EQ(right.mean_sq(i), fresh.mean_sq(i));
  }
}

TEST(FitMle, IdenticalSamplesGiveClampedEstimate) {
  const std::vector<Composition> same(30, Composition({0.2, 0.3, 0.5}));
  for (auto method : {FitMethod::fixed_point, FitMethod::newton}) {
    const FitResult r = fit_mle(SufficientStats(same), FitOptions{1e-7, 1000, method});
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(r.clamped);
    EXPECT_DOUBLE_EQ(r.alpha[2], alpha_max);
    EXPECT_NEAR(r.alpha[0] / r.alpha[2], 0.4, 1e-12);
  }
  EXPECT_NO_THROW(fit_mle(same));
}

TEST(FitMle, ComponentPinnedAtEpsStillFits) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::vector<Composition> data;
  for (int i = 0; i < 50; ++i) {
    const double v = u(rng);
    data.push_back(clamp_to_interior(std::vector<double>{0.0, v, 1 - v}));
  }
  const FitResult r = fit_mle(SufficientStats(data));
  EXPECT_TRUE(r.converged);
  for (double a : r.alpha) EXPECT_TRUE(std::isfinite(a) && a >= alpha_min && a <= alpha_max);
}

TEST(FitMle, Errors) {
  EXPECT_THROW(fit_mle(comps({{0.2, 0.8}})), InsufficientData);
  const auto data = draw({0.05, 0.05, 0.05}, 200, 7000);
  // One iteration cannot reach a 1e-12 residual from the moment-matched start.
  try {
    fit_mle(data, 1e-14, 1);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_EQ(e.last_alpha().size(), 3u);
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(MomentMatch, Examples) {
  const DirichletParams a = moment_match_init(comps({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  // First component 0.1 or 0.4 with equal weight: mean 0.25, variance 0.0225.
  // Rescale so the variance is 0.01875: 0.25 +- sqrt(0.01875).
  const double d = std::sqrt(0.01875);
  const DirichletParams b =
      moment_match_init(comps({{0.25 - d, 0.75 + d}, {0.25 + d, 0.75 - d}}));
  EXPECT_NEAR(b[0], 2.25, 1e-9);
  EXPECT_NEAR(b[1], 6.75, 1e-9);
  EXPECT_THROW(moment_match_init(comps({{0.3, 0.7}})), InsufficientData);
}

TEST(MomentMatch, LargeSampleWithinFactorTwo) {
  const auto data = draw({2.0, 6.0}, 20000, 8000);
  const DirichletParams a = moment_match_init(data);
  EXPECT_GT(a[0], 1.0);
  EXPECT_LT(a[0], 4.0);
  EXPECT_GT(a[1], 3.0);
  EXPECT_LT(a[1], 12.0);
}

TEST(Kl, Examples) {
  const DirichletParams a({1, 1}), b({2, 2});
  EXPECT_EQ(kl_dirichlet(a, a), 0.0);
  EXPECT_EQ(symmetric_kl(a, a), 0.0);
  EXPECT_THROW(kl_dirichlet(a, DirichletParams({1, 1, 1})), DimensionError);

  std::mt19937_64 rng(99);
  const int n = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto x = sample_dirichlet(a.alpha(), rng);
    if (!(x[0] > 0.0 && x[1] > 0.0)) continue;
    // ln p_a - ln p_b, written out by hand.
    const double v = -std::log(6.0) - std::log(x[0]) - std::log(x[1]);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_NEAR(kl_dirichlet(a, b), mean, 3 * se);
}

TEST(Kl, NonNegativeAndZeroOnlyAtEquality) {
  std::mt19937_64 rng(100);
  std::uniform_real_distribution<double> u(0.05, 50.0);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = 2 + i % 9;
    std::vector<double> a(k), b(k);
    for (std::size_t j = 0; j < k; ++j) {
      a[j] = u(rng);
      b[j] = u(rng);
    }
    const double kl = kl_dirichlet(DirichletParams(a), DirichletParams(b));
    EXPECT_GE(kl, 0.0);
    EXPECT_GT(kl, 1e-9);
    EXPECT_EQ(kl_dirichlet(DirichletParams(a), DirichletParams(a)), 0.0);
  }
}

TEST(Density, IntegratesToOne) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  boost::math::quadrature::tanh_sinh<double> q;
  for (int trial = 0; trial < 5; ++trial) {
    const DirichletParams p2({u(rng), u(rng)});
    const double i2 = q.integrate(
        [&](double x) {
          if (!(x > 0.0 && x < 1.0)) return 0.0;
          return std::exp(-log_beta(p2) + (p2[0] - 1) * std::log(x) + (p2[1] - 1) * std::log1p(-x));
        },
        0.0, 1.0);
    EXPECT_NEAR(i2, 1.0, 1e-3) << p2[0] << " " << p2[1];

    const DirichletParams p3({u(rng), u(rng), u(rng)});
    auto dens = [&](double x1, double x2) {
      double v = -log_beta(p3);
      const double x[3] = {x1, x2, 1 - x1 - x2};
      for (int i = 0; i < 3; ++i) {
        if (!(x[i] > 0.0)) return 0.0;
        v += (p3[i] - 1) * std::log(x[i]);
      }
      return std::exp(v);
    };
    const double i3 = q.integrate(
        [&](double x1) {
          if (!(x1 < 1.0)) return 0.0;
          return q.integrate([&](double x2) { return dens(x1, x2); }, 0.0, 1.0 - x1);
        },
        0.0, 1.0);
    EXPECT_NEAR(i3, 1.0, 1e-3) << p3[0] << " " << p3[1] << " " << p3[2];
  }
}
