#pragma once

// Layer-wise sparsity allocation: uniform, separability-weighted (SWL),
// outlier-weighted (OWL) and the prefix-aligned hybrid (TPLO).
//
// Every non-uniform profile lies in the box [s - lambda, s + lambda] and has mean s.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tplo/error.hpp"
#include "tplo/separability.hpp"

namespace tplo {

enum class AllocationMethod { uniform, swl, owl, tplo };

NLOHMANN_JSON_SERIALIZE_ENUM(AllocationMethod, {{AllocationMethod::uniform, "uniform"},
                                                {AllocationMethod::swl, "swl"},
                                                {AllocationMethod::owl, "owl"},
                                                {AllocationMethod::tplo, "tplo"}})

inline constexpr double kDefaultLambda = 0.08;
inline constexpr std::uint32_t kDefaultPrefixLayers = 10;

struct SparsityProfile {
  std::vector<double> sparsity;
  double target = 0.0;
  double bound = 0.0;
  AllocationMethod method = AllocationMethod::uniform;
  bool degenerate = false;  // scores carried no ranking; the profile fell back to uniform

  std::size_t layers() const noexcept { return sparsity.size(); }

  double mean() const {
    double s = 0.0;
    for (double v : sparsity) s += v;
    return sparsity.empty() ? 0.0 : s / static_cast<double>(sparsity.size());
  }
};

inline nlohmann::json profile_to_json(const SparsityProfile& p) {
  return {{"method", p.method}, {"target", p.target}, {"lambda", p.bound}, {"sparsity", p.sparsity}};
}

inline SparsityProfile profile_from_json(const nlohmann::json& j) {
  try {
    SparsityProfile p;
    p.method = j.at("method").get<AllocationMethod>();
    p.target = j.at("target").get<double>();
    p.bound = j.at("lambda").get<double>();
    p.sparsity = j.at("sparsity").get<std::vector<double>>();
    return p;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::SchemaError, std::string("sparsity profile: ") + ex.what());
  }
}

namespace detail {

inline void check_target(double s) {
  require(s >= 0.0 && s < 1.0, ErrorCode::InvalidSparsity, "target sparsity must be in [0,1), got " + std::to_string(s));
}

inline void check_bound(double s, double lambda) {
  check_target(s);
  require(lambda >= 0.0 && (lambda == 0.0 || lambda < std::min(s, 1.0 - s)), ErrorCode::InvalidSparsity,
          "lambda must be in [0, min(s, 1-s))");
}

/// Clips into [lo, hi] and spreads the clipped mass over entries that can still
/// absorb it, until the mean equals `target`. Rank order is preserved (ties may form).
inline void project_to_box(std::vector<double>& x, double target, double lo, double hi) {
  const double want = target * static_cast<double>(x.size());
  for (std::size_t round = 0; round <= x.size(); ++round) {
    for (auto& v : x) v = std::clamp(v, lo, hi);
    double sum = 0.0;
    for (double v : x) sum += v;
    const double residual = want - sum;
    if (std::fabs(residual) <= 1e-12) return;
    std::size_t free = 0;
    for (double v : x) free += residual > 0 ? (v < hi) : (v > lo);
    if (free == 0) return;  // infeasible target; cannot happen for lo <= target <= hi
    const double step = residual / static_cast<double>(free);
    for (auto& v : x)
      if (residual > 0 ? v < hi : v > lo) v += step;
  }
  for (auto& v : x) v = std::clamp(v, lo, hi);
}

/// Min-max maps scores (higher score => lower sparsity) onto the box, recenters on
/// the target and projects back into the box.
inline SparsityProfile weighted_profile(std::span<const double> importance, double s, double lambda,
                                        AllocationMethod method) {
  require(importance.size() >= 2, ErrorCode::ProfileMismatch, "non-uniform allocation needs at least 2 layers");
  check_bound(s, lambda);
  SparsityProfile p{std::vector<double>(importance.size(), s), s, lambda, method, false};

  const auto [mn, mx] = std::minmax_element(importance.begin(), importance.end());
  if (*mx - *mn <= 1e-12 * std::max(std::fabs(*mx), 1e-300)) {
    p.degenerate = true;
    return p;
  }
  if (lambda == 0.0) return p;

  const double lo = s - lambda, hi = s + lambda;
  // u = 1 - importance; min-max of u onto [lo, hi].
  const double u_min = 1.0 - *mx, u_max = 1.0 - *mn;
  for (std::size_t l = 0; l < importance.size(); ++l) {
    const double u = 1.0 - importance[l];
    p.sparsity[l] = lo + (hi - lo) * (u - u_min) / (u_max - u_min);
  }
  const double shift = s - p.mean();
  for (auto& v : p.sparsity) v += shift;
  project_to_box(p.sparsity, s, lo, hi);
  return p;
}

}  // namespace detail

inline SparsityProfile uniform_profile(std::uint32_t layers, double s) {
  require(layers >= 1, ErrorCode::ProfileMismatch, "profile needs at least one layer");
  detail::check_target(s);
  return {std::vector<double>(layers, s), s, 0.0, AllocationMethod::uniform, false};
}

/// Layers with higher separability get lower sparsity.
inline SparsityProfile swl_profile(const SeparabilityProfile& sep, double s, double lambda = kDefaultLambda) {
  return detail::weighted_profile(sep.sep_pd, s, lambda, AllocationMethod::swl);
}

/// Layers with a higher outlier ratio get lower sparsity.
inline SparsityProfile owl_profile(std::span<const double> outlier_ratios, double s, double lambda = kDefaultLambda) {
  double total = 0.0;
  for (double r : outlier_ratios) {
    require(r >= 0.0 && std::isfinite(r), ErrorCode::RejectedValue, "outlier ratios must be finite and non-negative");
    total += r;
  }
  std::vector<double> norm(outlier_ratios.size(), 0.0);
  if (total > 0.0)
    for (std::size_t l = 0; l < norm.size(); ++l) norm[l] = outlier_ratios[l] / total;
  return detail::weighted_profile(norm, s, lambda, AllocationMethod::owl);
}

/// SWL profile whose first `prefix_k` layers are replaced by OWL's, recentered on
/// the target and projected back into the shared box.
inline SparsityProfile tplo_profile(const SparsityProfile& swl, const SparsityProfile& owl, std::uint32_t prefix_k,
                                    double s) {
  require(swl.layers() == owl.layers(), ErrorCode::ProfileMismatch, "SWL and OWL profiles differ in layer count");
  require(swl.target == s && owl.target == s, ErrorCode::ProfileMismatch, "profiles were built for a different target");
  require(swl.bound == owl.bound, ErrorCode::ProfileMismatch, "SWL and OWL profiles use different lambda");
  require(prefix_k <= swl.layers(), ErrorCode::ProfileMismatch, "prefix_k exceeds layer count");
  detail::check_bound(s, swl.bound);

  SparsityProfile p = swl;
  p.method = AllocationMethod::tplo;
  p.degenerate = false;
  for (std::uint32_t l = 0; l < prefix_k; ++l) p.sparsity[l] = owl.sparsity[l];

  // Shifting densities by (1-s) - mean(d) is the same as shifting sparsities by
  // s - mean(s); done in sparsity space so untouched profiles come back bit-exact.
  const double shift = s - p.mean();
  if (std::fabs(shift) > 1e-12)
    for (auto& v : p.sparsity) v += shift;
  detail::project_to_box(p.sparsity, s, s - p.bound, s + p.bound);
  return p;
}

/// Scales a prefix length chosen for a `reference_layers`-deep model to `layers`.
inline std::uint32_t scaled_prefix(std::uint32_t layers, std::uint32_t prefix_k = kDefaultPrefixLayers,
                                   std::uint32_t reference_layers = 32) {
  const double k = std::round(static_cast<double>(prefix_k) * layers / reference_layers);
  return static_cast<std::uint32_t>(std::clamp(k, 0.0, static_cast<double>(layers)));
}

}  // namespace tplo
