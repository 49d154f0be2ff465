#pragma once

// Seeded synthetic series with known change points: Dirichlet, Dirichlet
// mixture and Gaussian segments, optionally pushed onto the simplex.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "odcp/dirichlet.hpp"
#include "odcp/error.hpp"
#include "odcp/gaussian.hpp"
#include "odcp/rng.hpp"
#include "odcp/simplex.hpp"
#include "odcp/transform.hpp"

namespace odcp {

struct DirichletMixture {
  std::vector<DirichletParams> components;
  std::vector<double> weights;
};

enum class SegmentFamily { dirichlet, dirichlet_mixture, gaussian };

inline const char* to_string(SegmentFamily f) {
  switch (f) {
    case SegmentFamily::dirichlet: return "dirichlet";
    case SegmentFamily::dirichlet_mixture: return "dirichlet_mixture";
    case SegmentFamily::gaussian: return "gaussian";
  }
  return "?";
}

struct SegmentSpec {
  std::size_t length = 0;
  std::variant<DirichletParams, DirichletMixture, MvNormal> params;

  SegmentFamily family() const noexcept { return static_cast<SegmentFamily>(params.index()); }

  std::size_t dimension() const {
    return std::visit(
        [](const auto& p) -> std::size_t {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, DirichletParams>) {
            return p.size();
          } else if constexpr (std::is_same_v<P, DirichletMixture>) {
            return p.components.empty() ? 0 : p.components.front().size();
          } else {
            return p.dimension();
          }
        },
        params);
  }
};

enum class PostTransform { none, l1_normalize, expit };

inline const char* to_string(PostTransform t) {
  switch (t) {
    case PostTransform::none: return "none";
    case PostTransform::l1_normalize: return "l1_normalize";
    case PostTransform::expit: return "expit";
  }
  return "?";
}

struct GenSpec {
  std::vector<SegmentSpec> segments;
  PostTransform post_transform = PostTransform::none;
  std::uint64_t seed = 0;
};

inline void validate_spec(const GenSpec& spec) {
  if (spec.segments.empty()) throw ContractError("generator needs at least one segment");
  const std::size_t d = spec.segments.front().dimension();
  for (std::size_t s = 0; s < spec.segments.size(); ++s) {
    const SegmentSpec& seg = spec.segments[s];
    const std::string where = "segment " + std::to_string(s) + ": ";
    if (seg.length < 1) throw ContractError(where + "length must be at least 1");
    if (seg.dimension() != d) throw DimensionError(where + "dimension differs from segment 0");
    if (seg.family() == SegmentFamily::dirichlet_mixture) {
      const auto& mix = std::get<DirichletMixture>(seg.params);
      if (mix.components.empty() || mix.components.size() != mix.weights.size()) {
        throw ContractError(where + "mixture needs one weight per component");
      }
      double total = 0.0;
      for (double w : mix.weights) {
        if (!(w >= 0.0)) throw ContractError(where + "negative mixture weight");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-9) throw ContractError(where + "mixture weights must sum to 1");
      for (const auto& c : mix.components) {
        if (c.size() != d) throw DimensionError(where + "mixture components differ in dimension");
      }
    }
    if (spec.post_transform != PostTransform::none && seg.family() != SegmentFamily::gaussian) {
      throw ContractError(where + "post transforms apply to gaussian segments only");
    }
  }
}

template <class Rng>
std::size_t draw_mixture_component(const DirichletMixture& mix, Rng& rng) {
  std::discrete_distribution<std::size_t> pick(mix.weights.begin(), mix.weights.end());
  return pick(rng);
}

namespace detail {

inline constexpr int max_redraws = 1000;

template <class Rng>
std::vector<double> draw_sample(const SegmentSpec& seg, PostTransform post, Rng& rng) {
  switch (seg.family()) {
    case SegmentFamily::dirichlet: {
      const auto raw = sample_dirichlet(std::get<DirichletParams>(seg.params).alpha(), rng);
      const Composition c = clamp_to_interior(raw);
      return {c.begin(), c.end()};
    }
    case SegmentFamily::dirichlet_mixture: {
      const auto& mix = std::get<DirichletMixture>(seg.params);
      const std::size_t j = draw_mixture_component(mix, rng);
      const auto raw = sample_dirichlet(mix.components[j].alpha(), rng);
      const Composition c = clamp_to_interior(raw);
      return {c.begin(), c.end()};
    }
    case SegmentFamily::gaussian: break;
  }
  const auto& normal = std::get<MvNormal>(seg.params);
  switch (post) {
    case PostTransform::none: return normal.sample(rng);
    case PostTransform::expit: {
      const Composition c = expit_map(normal.sample(rng));
      return {c.begin(), c.end()};
    }
    case PostTransform::l1_normalize: break;
  }
  for (int attempt = 0; attempt < max_redraws; ++attempt) {
    std::vector<double> y = normal.sample(rng);
    if (std::any_of(y.begin(), y.end(), [](double v) { return !(v > 0.0); })) continue;
    const Composition c = clamp_to_interior(y);
    return {c.begin(), c.end()};
  }
  throw GenerationError("l1 normalization: no positive draw after " +
                        std::to_string(max_redraws) + " attempts");
}

}  // namespace detail

/// Segment s draws from its own stream (seed, s), so appending segments
/// leaves earlier samples unchanged.
inline std::pair<Series, SegmentLabeling> generate(const GenSpec& spec) {
  validate_spec(spec);
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> boundaries;
  for (std::size_t s = 0; s < spec.segments.size(); ++s) {
    if (s > 0) boundaries.push_back(rows.size());
    auto rng = make_stream(spec.seed, {stream_tag::segment, s});
    for (std::size_t i = 0; i < spec.segments[s].length; ++i) {
      rows.push_back(detail::draw_sample(spec.segments[s], spec.post_transform, rng));
    }
  }
  const bool general = spec.segments.front().family() == SegmentFamily::gaussian &&
                       spec.post_transform == PostTransform::none;
  const std::size_t t = rows.size();
  return {Series(std::move(rows), general ? SeriesKind::general : SeriesKind::compositional),
          SegmentLabeling(std::move(boundaries), t)};
}

/// Alternating +-1/sqrt(K) direction used to perturb a base parameter.
inline std::vector<double> alternating_direction(std::size_t k) {
  std::vector<double> u(k);
  const double mag = 1.0 / std::sqrt(static_cast<double>(k));
  for (std::size_t i = 0; i < k; ++i) u[i] = i % 2 == 0 ? mag : -mag;
  return u;
}

inline DirichletParams perturb(const DirichletParams& base, double c) {
  const auto u = alternating_direction(base.size());
  std::vector<double> a(base.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = base[i] * std::exp(c * u[i]);
  return DirichletParams(std::move(a));
}

/// Bisection on c in [0, 10] for base * exp(c u) at the requested
/// symmetric KL from base.
inline DirichletParams find_dirichlet_pair(const DirichletParams& base, double target_sym_kl,
                                           double tol = 1e-4) {
  if (!(target_sym_kl >= 0.0) || !std::isfinite(target_sym_kl)) {
    throw ContractError("target symmetric KL must be non-negative");
  }
  if (!(tol > 0.0)) throw ContractError("tolerance must be positive");
  if (target_sym_kl <= tol) return base;
  auto f = [&](double c) { return symmetric_kl(base, perturb(base, c)); };
  double lo = 0.0;
  double hi = 10.0;
  double f_lo = 0.0;
  double f_hi = f(hi);
  if (f_hi < target_sym_kl - tol) {
    throw SearchFailure("symmetric KL " + std::to_string(target_sym_kl) +
                        " is out of reach (max " + std::to_string(f_hi) + " at c = 10)");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = f(mid);
    if (f_mid < f_lo || f_mid > f_hi) {
      throw SearchFailure("symmetric KL is not monotone along the perturbation path");
    }
    if (std::abs(f_mid - target_sym_kl) <= tol) return perturb(base, mid);
    if (f_mid < target_sym_kl) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
  }
  throw SearchFailure("bisection did not reach the requested tolerance");
}

// ---------------------------------------------------------------------------
// Gaussian presets.

enum class ChangeKind { mean_change, var_change };
// Inverted labels: "high" SNR is the low-noise setting (label 5), "low" SNR
// the high-noise one (label 20).
enum class Snr { high, low };

inline const char* to_string(ChangeKind k) { return k == ChangeKind::mean_change ? "mean" : "var"; }
inline const char* to_string(Snr s) { return s == Snr::high ? "high" : "low"; }

inline constexpr double snr_label(Snr s) { return s == Snr::high ? 5.0 : 20.0; }

/// Base noise scale for an SNR label: label / 10, so 0.5 (high) or 2 (low)
/// against a unit mean shift.
inline constexpr double snr_noise(Snr s) { return snr_label(s) / 10.0; }

struct GaussianPreset {
  ChangeKind kind = ChangeKind::mean_change;
  Snr snr = Snr::high;
  std::size_t d = 10;
  double sparsity = 1.0;
  std::size_t segments = 2;
  std::size_t seg_len = 500;
  std::optional<double> noise;  // overrides snr_noise(snr)
  double shift = 1.0;           // mean change per boundary
  double var_factor = 2.0;      // sd multiplier per boundary
  PostTransform post = PostTransform::none;
  std::uint64_t seed = 0;
};

inline std::size_t changed_coordinates(double sparsity, std::size_t d) {
  // The small slack keeps e.g. 0.3 * 10 from rounding up to 4.
  const auto n = static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(d) - 1e-9));
  return std::clamp<std::size_t>(n, 1, d);
}

inline GenSpec gaussian_preset(const GaussianPreset& p) {
  if (p.d < 2) throw ContractError("gaussian preset needs d >= 2");
  if (p.segments < 2) throw ContractError("gaussian preset needs at least 2 segments");
  if (!(p.sparsity > 0.0 && p.sparsity <= 1.0)) throw ContractError("sparsity must lie in (0, 1]");
  if (p.seg_len < 1) throw ContractError("segment length must be at least 1");
  const double noise = p.noise.value_or(snr_noise(p.snr));
  if (!(noise > 0.0)) throw ContractError("noise scale must be positive");

  auto rng = make_stream(p.seed, {stream_tag::preset});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> mean(p.d);
  for (double& m : mean) m = unit(rng);
  std::vector<double> sd(p.d, noise);

  std::vector<std::vector<double>> means{mean};
  std::vector<std::vector<double>> sds{sd};
  const std::size_t n_changed = changed_coordinates(p.sparsity, p.d);
  std::vector<std::size_t> coords(p.d);
  for (std::size_t s = 1; s < p.segments; ++s) {
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    for (std::size_t j = 0; j < n_changed; ++j) {
      if (p.kind == ChangeKind::mean_change) {
        mean[coords[j]] += p.shift;
      } else {
        sd[coords[j]] *= p.var_factor;
      }
    }
    means.push_back(mean);
    sds.push_back(sd);
  }

  // L1 normalization needs positive draws: lift every mean to at least five
  // of the largest standard deviations above zero.
  if (p.post == PostTransform::l1_normalize) {
    double sd_max = 0.0;
    for (const auto& v : sds) sd_max = std::max(sd_max, *std::max_element(v.begin(), v.end()));
    double mean_min = means.front().front();
    for (const auto& v : means) mean_min = std::min(mean_min, *std::min_element(v.begin(), v.end()));
    const double lift = std::max(0.0, 5.0 * sd_max - mean_min);
    for (auto& v : means) {
      for (double& m : v) m += lift;
    }
  }

  GenSpec spec;
  spec.post_transform = p.post;
  spec.seed = p.seed;
  for (std::size_t s = 0; s < p.segments; ++s) {
    spec.segments.push_back({p.seg_len, MvNormal::diagonal(means[s], sds[s])});
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Named datasets.

struct PresetRequest {
  std::string name = "d1";
  std::size_t d = 10;
  std::optional<std::size_t> seg_len;   // 500, or 300 for the sparse presets
  std::optional<std::size_t> segments;  // 2, or 4 for the sparse presets
  double sym_kl = 0.5;
  std::optional<ChangeKind> change;
  Snr snr = Snr::high;
  std::optional<double> sparsity;  // 1, or 0.5 for the sparse presets
  std::optional<double> noise;
  double mixture_perturbation = 0.15;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "d1",      "d2",     "d3",      "d3-mean", "d3-var",      "d4",
      "d4-mean", "d4-var", "g1",      "g1-mean", "g1-var",      "sparse-mean",
      "sparse-var"};
  return names;
}

namespace detail {

inline std::vector<double> uniform_alpha(std::size_t k, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> a(k);
  for (double& v : a) v = u(rng);
  return a;
}

}  // namespace detail

inline GenSpec dataset_preset(const PresetRequest& r) {
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), r.name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ContractError("unknown preset '" + r.name + "' (known: " + list + ")");
  }
  const bool sparse = r.name.rfind("sparse-", 0) == 0;
  const std::size_t seg_len = r.seg_len.value_or(sparse ? 300 : 500);
  const std::size_t segments = r.segments.value_or(sparse ? 4 : 2);
  if (r.d < 2) throw ContractError("dimension must be at least 2");
  if (segments < 1) throw ContractError("need at least one segment");
  auto rng = make_stream(r.seed, {stream_tag::preset, 1});

  if (r.name == "d1") {
    const DirichletParams base(detail::uniform_alpha(r.d, 1.0, 10.0, rng));
    const DirichletParams other = find_dirichlet_pair(base, r.sym_kl);
    GenSpec spec;
    spec.seed = r.seed;
    for (std::size_t s = 0; s < segments; ++s) {
      spec.segments.push_back({seg_len, s % 2 == 0 ? base : other});
    }
    return spec;
  }
  if (r.name == "d2") {
    DirichletMixture base;
    base.weights = {0.3, 0.4, 0.3};
    for (int j = 0; j < 3; ++j) {
      base.components.emplace_back(detail::uniform_alpha(r.d, 1.0, 10.0, rng));
    }
    DirichletMixture other = base;
    for (auto& c : other.components) {
      std::vector<double> a(c.alpha().begin(), c.alpha().end());
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] *= std::exp(i % 2 == 0 ? r.mixture_perturbation : -r.mixture_perturbation);
      }
      c = DirichletParams(std::move(a));
    }
    GenSpec spec;
    spec.seed = r.seed;
    for (std::size_t s = 0; s < segments; ++s) {
      spec.segments.push_back({seg_len, s % 2 == 0 ? base : other});
    }
    return spec;
  }

  GaussianPreset g;
  g.d = r.d;
  g.snr = r.snr;
  g.noise = r.noise;
  g.seg_len = seg_len;
  g.segments = segments;
  g.seed = r.seed;
  g.sparsity = r.sparsity.value_or(sparse ? 0.5 : 1.0);
  g.kind = r.change.value_or(ChangeKind::mean_change);
  if (r.name.ends_with("-mean")) g.kind = ChangeKind::mean_change;
  if (r.name.ends_with("-var")) g.kind = ChangeKind::var_change;
  if (sparse || r.name.starts_with("d3")) {
    g.post = PostTransform::l1_normalize;
  } else if (r.name.starts_with("d4")) {
    g.post = PostTransform::expit;
  } else {
    g.post = PostTransform::none;
  }
  return gaussian_preset(g);
}

}  // namespace odcp
