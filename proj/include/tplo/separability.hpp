#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tplo/dataset.hpp"
#include "tplo/error.hpp"
#include "tplo/matrix.hpp"

namespace tplo {

inline constexpr double kWithinVarianceFloor = 1e-12;

/// Per-layer separability (LSD) and its normalized distribution across layers.
struct SeparabilityProfile {
  std::vector<double> lsd;
  std::vector<double> sep_pd;
  std::size_t argmax_layer = 0;
};

/// Per-dimension ratio of between-class to within-class sum of squares (one-way
/// ANOVA without degrees-of-freedom normalization).
template <typename T>
std::vector<double> variance_ratio(const Matrix<T>& acts_true, const Matrix<T>& acts_false) {
  require(acts_true.rows() >= 2 && acts_false.rows() >= 2, ErrorCode::InsufficientSamples,
          "variance_ratio needs at least 2 rows per class");
  require(acts_true.cols() == acts_false.cols(), ErrorCode::ShapeError, "class matrices differ in width");
  const std::size_t d = acts_true.cols();
  const double nt = static_cast<double>(acts_true.rows());
  const double nf = static_cast<double>(acts_false.rows());

  auto class_mean = [d](const Matrix<T>& m) {
    std::vector<double> mu(d, 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) mu[j] += static_cast<double>(m(i, j));
    for (auto& v : mu) v /= static_cast<double>(m.rows());
    return mu;
  };
  auto within_ss = [d](const Matrix<T>& m, const std::vector<double>& mu, std::vector<double>& acc) {
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = static_cast<double>(m(i, j)) - mu[j];
        acc[j] += c * c;
      }
  };

  const auto mu_t = class_mean(acts_true);
  const auto mu_f = class_mean(acts_false);
  std::vector<double> within(d, 0.0);
  within_ss(acts_true, mu_t, within);
  within_ss(acts_false, mu_f, within);

  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double mu = (nt * mu_t[j] + nf * mu_f[j]) / (nt + nf);
    const double between = nt * (mu_t[j] - mu) * (mu_t[j] - mu) + nf * (mu_f[j] - mu) * (mu_f[j] - mu);
    out[j] = between / (within[j] + kWithinVarianceFloor);
  }
  return out;
}

template <typename T>
double mean_variance_ratio(const Matrix<T>& acts_true, const Matrix<T>& acts_false) {
  const auto r = variance_ratio(acts_true, acts_false);
  double s = 0.0;
  for (double v : r) s += v;
  return r.empty() ? 0.0 : s / static_cast<double>(r.size());
}

/// Normalizes LSD values to a distribution; an all-zero profile maps to uniform.
inline std::vector<double> normalize_separability(const std::vector<double>& lsd) {
  double total = 0.0;
  for (double v : lsd) total += v;
  std::vector<double> pd(lsd.size(), lsd.empty() ? 0.0 : 1.0 / static_cast<double>(lsd.size()));
  if (total > 0.0)
    for (std::size_t l = 0; l < lsd.size(); ++l) pd[l] = lsd[l] / total;
  return pd;
}

inline SeparabilityProfile profile_from_lsd(std::vector<double> lsd) {
  SeparabilityProfile p;
  p.sep_pd = normalize_separability(lsd);
  for (std::size_t l = 1; l < lsd.size(); ++l)
    if (lsd[l] > lsd[p.argmax_layer]) p.argmax_layer = l;
  p.lsd = std::move(lsd);
  return p;
}

/// LSD for every layer of `ds`. With `topic` set, only that topic's rows are used;
/// otherwise all topics and polarities are pooled.
inline SeparabilityProfile lsd_profile(const ActivationDataset& ds, const std::optional<std::string>& topic = std::nullopt) {
  ds.validate();
  std::vector<std::size_t> t_idx, f_idx;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (topic && ds.topics[i] != *topic) continue;
    (ds.labels[i] ? t_idx : f_idx).push_back(i);
  }
  std::vector<double> lsd;
  lsd.reserve(ds.num_layers());
  for (const auto& layer : ds.layers)
    lsd.push_back(mean_variance_ratio(select_rows(layer, t_idx), select_rows(layer, f_idx)));
  return profile_from_lsd(std::move(lsd));
}

}  // namespace tplo
