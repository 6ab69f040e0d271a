#pragma once

// Lie-detection probes over residual-stream activations:
//   LR    logistic regression on standardized features
//   MM    difference-of-class-means direction with a midpoint threshold
//   CCS   unsupervised contrast-consistent search over affirmative/negated pairs
//   TTPD  truth direction + polarity direction with a 2-D logistic head
// and the hold-one-topic-out evaluation harness.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tplo/dataset.hpp"
#include "tplo/error.hpp"
#include "tplo/matrix.hpp"
#include "tplo/rng.hpp"

namespace tplo {

enum class ProbeKind { LR, MM, CCS, TTPD };

NLOHMANN_JSON_SERIALIZE_ENUM(ProbeKind, {{ProbeKind::LR, "lr"}, {ProbeKind::MM, "mm"}, {ProbeKind::CCS, "ccs"}, {ProbeKind::TTPD, "ttpd"}})

inline std::string probe_name(ProbeKind k) { return nlohmann::json(k).get<std::string>(); }

struct ProbeModel {
  ProbeKind kind = ProbeKind::LR;
  std::vector<double> direction;           // unit norm; t_G for TTPD
  std::vector<double> polarity_direction;  // TTPD only (t_P), unit norm
  double scale = 1.0;                      // LR/CCS: norm of the fitted weight vector
  double bias = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  std::array<double, 3> head{};  // TTPD: weights on (t_G proj, t_P proj) and bias

  // Fit diagnostics.
  double train_accuracy = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> restart_losses;  // CCS only

  std::size_t dim() const noexcept { return feature_mean.size(); }
};

struct ContrastPair {
  std::vector<double> a_plus;   // affirmative statement
  std::vector<double> a_minus;  // its negation
  bool plus_label = false;      // truth of the affirmative side; used only to fix the global sign
  std::string id;
};

struct LrConfig {
  double l2 = 1e-3;
  double lr = 0.1;
  std::uint32_t iters = 2000;
  std::uint64_t seed = 0;
};

struct CcsConfig {
  std::uint32_t restarts = 10;
  std::uint32_t iters = 1000;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

struct TtpdConfig {
  LrConfig lr{};
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace detail {

struct Standardizer {
  std::vector<double> mean, std;

  static Standardizer fit(const MatrixD& x) {
    Standardizer s{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 0.0)};
    const double n = static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) s.mean[j] += x(i, j);
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const double c = x(i, j) - s.mean[j];
        s.std[j] += c * c;
      }
    // Constant features keep std 1 so they contribute nothing instead of dividing by 0.
    for (auto& v : s.std) {
      v = std::sqrt(v / n);
      if (!(v > 1e-12)) v = 1.0;
    }
    return s;
  }

  MatrixD apply(const MatrixD& x) const {
    MatrixD out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) / std[j];
    return out;
  }
};

inline void check_labels(std::span<const std::uint8_t> labels, std::size_t rows) {
  require(labels.size() == rows, ErrorCode::ShapeError, "label count differs from row count");
  std::size_t pos = 0;
  for (auto l : labels) pos += l != 0;
  require(pos > 0 && pos < labels.size(), ErrorCode::SingleClass, "both classes must be present");
}

inline std::vector<double> unit(std::vector<double> v) {
  const double n = norm2(v);
  require(n > 0.0 && std::isfinite(n), ErrorCode::DegenerateDirection, "fitted direction has zero norm");
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace detail

/// Mean binary cross-entropy plus (l2/2)||w||^2; the bias is not regularized.
inline double lr_loss(const MatrixD& x, std::span<const std::uint8_t> y, std::span<const double> w, double b, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double z = dot(x.row(i), w) + b;
    loss += softplus(z) - (y[i] ? z : 0.0);
  }
  return loss / static_cast<double>(x.rows()) + 0.5 * l2 * dot(w, w);
}

/// Analytic gradient of lr_loss; returns {dL/dw..., dL/db}.
inline std::vector<double> lr_gradient(const MatrixD& x, std::span<const std::uint8_t> y, std::span<const double> w,
                                       double b, double l2) {
  const std::size_t d = x.cols();
  std::vector<double> g(d + 1, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    const double err = sigmoid(dot(r, w) + b) - (y[i] ? 1.0 : 0.0);
    for (std::size_t j = 0; j < d; ++j) g[j] += err * r[j];
    g[d] += err;
  }
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] / n + l2 * w[j];
  g[d] /= n;
  return g;
}

/// Score before the sigmoid.
inline double probe_score(const ProbeModel& m, std::span<const double> a) {
  switch (m.kind) {
    case ProbeKind::MM:
      return dot(m.direction, a) + m.bias;
    case ProbeKind::TTPD: {
      double g = 0.0, p = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double c = a[j] - m.feature_mean[j];
        g += m.direction[j] * c;
        p += m.polarity_direction[j] * c;
      }
      return m.head[0] * g + m.head[1] * p + m.head[2];
    }
    case ProbeKind::LR:
    case ProbeKind::CCS:
    default: {
      double s = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) s += m.direction[j] * (a[j] - m.feature_mean[j]) / m.feature_std[j];
      return m.scale * s + m.bias;
    }
  }
}

struct Prediction {
  std::vector<double> probability;
  std::vector<std::uint8_t> label;

  double accuracy(std::span<const std::uint8_t> truth) const {
    require(truth.size() == label.size(), ErrorCode::ShapeError, "label count mismatch");
    if (truth.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < label.size(); ++i) hit += (label[i] != 0) == (truth[i] != 0);
    return static_cast<double>(hit) / static_cast<double>(truth.size());
  }
};

template <typename T>
Prediction predict(const ProbeModel& m, const Matrix<T>& acts) {
  require(acts.cols() == m.dim(), ErrorCode::ShapeError,
          "probe expects d=" + std::to_string(m.dim()) + ", got " + std::to_string(acts.cols()));
  Prediction p;
  std::vector<double> row(acts.cols());
  for (std::size_t i = 0; i < acts.rows(); ++i) {
    auto r = acts.row(i);
    std::copy(r.begin(), r.end(), row.begin());
    const double prob = sigmoid(probe_score(m, row));
    p.probability.push_back(prob);
    p.label.push_back(prob > 0.5 ? 1 : 0);
  }
  return p;
}

/// Subtracts each topic's mean activation from its rows.
template <typename T>
MatrixD center_by_topic(const Matrix<T>& acts, std::span<const std::string> topics) {
  require(topics.size() == acts.rows(), ErrorCode::ShapeError, "topic count differs from row count");
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> means;
  for (std::size_t i = 0; i < acts.rows(); ++i) {
    auto& [sum, n] = means.try_emplace(topics[i], std::vector<double>(acts.cols(), 0.0), 0).first->second;
    for (std::size_t j = 0; j < acts.cols(); ++j) sum[j] += static_cast<double>(acts(i, j));
    ++n;
  }
  MatrixD out(acts.rows(), acts.cols());
  for (std::size_t i = 0; i < acts.rows(); ++i) {
    const auto& [sum, n] = means.at(topics[i]);
    for (std::size_t j = 0; j < acts.cols(); ++j) out(i, j) = static_cast<double>(acts(i, j)) - sum[j] / n;
  }
  return out;
}

/// TTPD prediction with per-topic centering of the batch, matching how the probe was fit.
template <typename T>
Prediction predict_centered(const ProbeModel& m, const Matrix<T>& acts, std::span<const std::string> topics) {
  require(m.kind == ProbeKind::TTPD, ErrorCode::ShapeError, "predict_centered applies to TTPD probes");
  ProbeModel centered = m;
  std::fill(centered.feature_mean.begin(), centered.feature_mean.end(), 0.0);
  return predict(centered, center_by_topic(acts, topics));
}

template <typename T>
ProbeModel train_lr(const Matrix<T>& acts, std::span<const std::uint8_t> labels, const LrConfig& cfg = {}) {
  require(acts.rows() >= 4, ErrorCode::InsufficientSamples, "LR needs at least 4 rows");
  detail::check_labels(labels, acts.rows());
  const MatrixD raw = matrix_cast<double>(acts);
  const auto stdz = detail::Standardizer::fit(raw);
  const MatrixD x = stdz.apply(raw);
  const std::size_t d = x.cols();

  // Zero init: the fit is a deterministic function of the data; the seed is unused.
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  ProbeModel m;
  m.kind = ProbeKind::LR;
  m.initial_loss = lr_loss(x, labels, w, b, cfg.l2);
  for (std::uint32_t it = 0; it < cfg.iters; ++it) {
    const auto g = lr_gradient(x, labels, w, b, cfg.l2);
    for (std::size_t j = 0; j < d; ++j) w[j] -= cfg.lr * g[j];
    b -= cfg.lr * g[d];
  }
  m.final_loss = lr_loss(x, labels, w, b, cfg.l2);
  m.scale = norm2(w);
  m.direction = detail::unit(w);
  m.bias = b;
  m.feature_mean = stdz.mean;
  m.feature_std = stdz.std;
  m.train_accuracy = predict(m, raw).accuracy(labels);
  return m;
}

template <typename T>
ProbeModel train_mm(const Matrix<T>& acts, std::span<const std::uint8_t> labels) {
  require(labels.size() == acts.rows(), ErrorCode::ShapeError, "label count differs from row count");
  const std::size_t d = acts.cols();
  std::vector<double> mu_t(d, 0.0), mu_f(d, 0.0);
  std::size_t nt = 0, nf = 0;
  for (std::size_t i = 0; i < acts.rows(); ++i) {
    auto& mu = labels[i] ? mu_t : mu_f;
    (labels[i] ? nt : nf)++;
    for (std::size_t j = 0; j < d; ++j) mu[j] += static_cast<double>(acts(i, j));
  }
  require(nt > 0 && nf > 0, ErrorCode::SingleClass, "both classes must be present");
  std::vector<double> diff(d), mid(d);
  for (std::size_t j = 0; j < d; ++j) {
    mu_t[j] /= static_cast<double>(nt);
    mu_f[j] /= static_cast<double>(nf);
    diff[j] = mu_t[j] - mu_f[j];
    mid[j] = 0.5 * (mu_t[j] + mu_f[j]);
  }
  ProbeModel m;
  m.kind = ProbeKind::MM;
  m.direction = detail::unit(diff);
  m.bias = -dot(m.direction, mid);
  m.feature_mean.assign(d, 0.0);
  m.feature_std.assign(d, 1.0);
  m.train_accuracy = predict(m, acts).accuracy(labels);
  return m;
}

namespace detail {

struct CcsData {
  MatrixD plus, minus;
};

inline double ccs_loss(const CcsData& data, std::span<const double> w, double b) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.plus.rows(); ++i) {
    const double pp = sigmoid(dot(data.plus.row(i), w) + b);
    const double pm = sigmoid(dot(data.minus.row(i), w) + b);
    const double consistency = pp + pm - 1.0;
    const double confidence = std::min(pp, pm);
    loss += consistency * consistency + confidence * confidence;
  }
  return loss / static_cast<double>(data.plus.rows());
}

inline std::vector<double> ccs_gradient(const CcsData& data, std::span<const double> w, double b) {
  const std::size_t d = w.size();
  std::vector<double> g(d + 1, 0.0);
  for (std::size_t i = 0; i < data.plus.rows(); ++i) {
    auto zp = data.plus.row(i);
    auto zm = data.minus.row(i);
    const double pp = sigmoid(dot(zp, w) + b);
    const double pm = sigmoid(dot(zm, w) + b);
    const double c = 2.0 * (pp + pm - 1.0);
    const double dpp = (c + (pp <= pm ? 2.0 * pp : 0.0)) * pp * (1.0 - pp);
    const double dpm = (c + (pm < pp ? 2.0 * pm : 0.0)) * pm * (1.0 - pm);
    for (std::size_t j = 0; j < d; ++j) g[j] += dpp * zp[j] + dpm * zm[j];
    g[d] += dpp + dpm;
  }
  for (auto& v : g) v /= static_cast<double>(data.plus.rows());
  return g;
}

}  // namespace detail

/// Unsupervised CCS fit with Adam over seeded restarts. Labels on the pairs are
/// used only to choose the global sign of the returned direction.
inline ProbeModel train_ccs(std::span<const ContrastPair> pairs, const CcsConfig& cfg = {}) {
  require(pairs.size() >= 8, ErrorCode::InsufficientPairs, "CCS needs at least 8 contrast pairs");
  const std::size_t d = pairs.front().a_plus.size();
  MatrixD plus(pairs.size(), d), minus(pairs.size(), d);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    require(pairs[i].a_plus.size() == d && pairs[i].a_minus.size() == d, ErrorCode::ShapeError,
            "contrast pair dimensions differ");
    std::copy(pairs[i].a_plus.begin(), pairs[i].a_plus.end(), plus.row(i).begin());
    std::copy(pairs[i].a_minus.begin(), pairs[i].a_minus.end(), minus.row(i).begin());
  }
  const auto s_plus = detail::Standardizer::fit(plus);
  const auto s_minus = detail::Standardizer::fit(minus);
  const detail::CcsData data{s_plus.apply(plus), s_minus.apply(minus)};

  std::vector<double> best_w;
  double best_b = 0.0, best_loss = INFINITY;
  ProbeModel m;
  m.kind = ProbeKind::CCS;
  for (std::uint32_t r = 0; r < std::max<std::uint32_t>(cfg.restarts, 1); ++r) {
    CounterRng rng(cfg.seed, r);
    std::vector<double> w(d);
    for (auto& v : w) v = rng.normal() / std::sqrt(static_cast<double>(d));
    double b = 0.0;
    std::vector<double> m1(d + 1, 0.0), m2(d + 1, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    for (std::uint32_t it = 1; it <= cfg.iters; ++it) {
      const auto g = detail::ccs_gradient(data, w, b);
      const double c1 = 1.0 - std::pow(beta1, it), c2 = 1.0 - std::pow(beta2, it);
      for (std::size_t j = 0; j <= d; ++j) {
        m1[j] = beta1 * m1[j] + (1 - beta1) * g[j];
        m2[j] = beta2 * m2[j] + (1 - beta2) * g[j] * g[j];
        const double step = cfg.lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + eps);
        if (j < d) w[j] -= step;
        else b -= step;
      }
    }
    const double loss = detail::ccs_loss(data, w, b);
    m.restart_losses.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_w = w;
      best_b = b;
    }
  }

  // A pair predicts "affirmative side true" when (p+ + 1 - p-) / 2 > 0.5.
  auto pair_accuracy = [&](std::span<const double> w, double b) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double pp = sigmoid(dot(data.plus.row(i), w) + b);
      const double pm = sigmoid(dot(data.minus.row(i), w) + b);
      hit += ((pp + 1.0 - pm) * 0.5 > 0.5) == pairs[i].plus_label;
    }
    return static_cast<double>(hit) / static_cast<double>(pairs.size());
  };
  double acc = pair_accuracy(best_w, best_b);
  if (acc < 0.5) {
    for (auto& v : best_w) v = -v;
    best_b = -best_b;
    acc = pair_accuracy(best_w, best_b);
  }

  m.final_loss = best_loss;
  m.initial_loss = m.restart_losses.front();
  m.scale = norm2(best_w);
  m.direction = detail::unit(best_w);
  m.bias = best_b;
  // Single-statement prediction standardizes with the midpoint of the two side
  // statistics; training used each side's own statistics.
  m.feature_mean.resize(d);
  m.feature_std.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    m.feature_mean[j] = 0.5 * (s_plus.mean[j] + s_minus.mean[j]);
    m.feature_std[j] = 0.5 * (s_plus.std[j] + s_minus.std[j]);
  }
  m.train_accuracy = acc;
  return m;
}

/// CCS loss of a fitted model re-evaluated on pairs (per-side standardization).
inline double ccs_pair_loss(const ProbeModel& m, std::span<const ContrastPair> pairs) {
  const std::size_t d = m.dim();
  MatrixD plus(pairs.size(), d), minus(pairs.size(), d);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::copy(pairs[i].a_plus.begin(), pairs[i].a_plus.end(), plus.row(i).begin());
    std::copy(pairs[i].a_minus.begin(), pairs[i].a_minus.end(), minus.row(i).begin());
  }
  const detail::CcsData data{detail::Standardizer::fit(plus).apply(plus), detail::Standardizer::fit(minus).apply(minus)};
  std::vector<double> w(m.direction);
  for (auto& v : w) v *= m.scale;
  return detail::ccs_loss(data, w, m.bias);
}

/// Direction expressed in raw activation coordinates (undoes standardization).
inline std::vector<double> raw_direction(const ProbeModel& m) {
  std::vector<double> v(m.direction.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = m.direction[j] / m.feature_std[j];
  return detail::unit(std::move(v));
}

template <typename T>
ProbeModel train_ttpd(const Matrix<T>& acts, std::span<const std::uint8_t> labels, std::span<const Polarity> polarity,
                      std::span<const std::string> topics, const TtpdConfig& cfg = {}) {
  detail::check_labels(labels, acts.rows());
  require(polarity.size() == acts.rows(), ErrorCode::ShapeError, "polarity count differs from row count");
  std::vector<std::uint8_t> pol(polarity.size());
  std::size_t negated = 0;
  for (std::size_t i = 0; i < pol.size(); ++i) negated += (pol[i] = polarity[i] == Polarity::negated);
  require(negated > 0 && negated < pol.size(), ErrorCode::InsufficientPolarity,
          "TTPD needs both affirmative and negated statements");

  const MatrixD centered = center_by_topic(acts, topics);
  const ProbeModel truth = train_lr(centered, labels, cfg.lr);
  const ProbeModel polar = train_lr(centered, pol, cfg.lr);

  ProbeModel m;
  m.kind = ProbeKind::TTPD;
  m.direction = raw_direction(truth);
  m.polarity_direction = raw_direction(polar);

  MatrixD proj(centered.rows(), 2);
  for (std::size_t i = 0; i < centered.rows(); ++i) {
    proj(i, 0) = dot(centered.row(i), m.direction);
    proj(i, 1) = dot(centered.row(i), m.polarity_direction);
  }
  const ProbeModel head = train_lr(proj, labels, cfg.lr);
  for (int k = 0; k < 2; ++k) m.head[k] = head.scale * head.direction[k] / head.feature_std[k];
  m.head[2] = head.bias - m.head[0] * head.feature_mean[0] - m.head[1] * head.feature_mean[1];

  // Rows outside any known topic are centered on the training grand mean.
  m.feature_mean.assign(acts.cols(), 0.0);
  for (std::size_t i = 0; i < acts.rows(); ++i)
    for (std::size_t j = 0; j < acts.cols(); ++j) m.feature_mean[j] += static_cast<double>(acts(i, j));
  for (auto& v : m.feature_mean) v /= static_cast<double>(acts.rows());
  m.feature_std.assign(acts.cols(), 1.0);
  m.initial_loss = head.initial_loss;
  m.final_loss = head.final_loss;
  m.train_accuracy = predict_centered(m, acts, topics).accuracy(labels);
  return m;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json probe_to_json(const ProbeModel& m) {
  nlohmann::json j{{"kind", m.kind},
                   {"direction", m.direction},
                   {"scale", m.scale},
                   {"bias", m.bias},
                   {"feature_mean", m.feature_mean},
                   {"feature_std", m.feature_std},
                   {"train_accuracy", m.train_accuracy}};
  if (m.kind == ProbeKind::TTPD) {
    j["polarity_direction"] = m.polarity_direction;
    j["head"] = m.head;
  }
  return j;
}

inline ProbeModel probe_from_json(const nlohmann::json& j) {
  try {
    ProbeModel m;
    m.kind = j.at("kind").get<ProbeKind>();
    m.direction = j.at("direction").get<std::vector<double>>();
    m.scale = j.at("scale").get<double>();
    m.bias = j.at("bias").get<double>();
    m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    m.feature_std = j.at("feature_std").get<std::vector<double>>();
    m.train_accuracy = j.value("train_accuracy", 0.0);
    if (m.kind == ProbeKind::TTPD) {
      m.polarity_direction = j.at("polarity_direction").get<std::vector<double>>();
      m.head = j.at("head").get<std::array<double, 3>>();
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::SchemaError, std::string("probe model: ") + ex.what());
  }
}

/// Probe vectors as a .tpl archive; scalars live in the JSON head written alongside.
inline Archive probe_to_archive(const ProbeModel& m) {
  auto vec = [](std::string name, const std::vector<double>& v) {
    std::vector<float> f(v.begin(), v.end());
    return make_record(std::move(name), f);
  };
  Archive a;
  a.manifest.model_id = "probe." + probe_name(m.kind);
  a.manifest.num_layers = 1;
  a.records.push_back(vec("probe.direction", m.direction));
  if (m.kind == ProbeKind::TTPD) a.records.push_back(vec("probe.polarity_direction", m.polarity_direction));
  a.records.push_back(vec("probe.feature_mean", m.feature_mean));
  a.records.push_back(vec("probe.feature_std", m.feature_std));
  for (const auto& r : a.records) a.manifest.entries.push_back({r.name, TensorRole::weight, std::nullopt});
  return a;
}

// ---------------------------------------------------------------------------
// Hold-one-topic-out evaluation

struct EvalRow {
  std::string method;  // pruning method that produced the activations
  ProbeKind probe = ProbeKind::LR;
  std::string topic;   // held-out topic
  std::uint32_t layer = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct TopicSummary {
  std::string topic;
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const TopicSummary&, const TopicSummary&) = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<TopicSummary> topics;
  TopicSummary pooled{"average", 0.0, 0.0};  // per-seed mean over topics, then mean/std over seeds

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct HoldoutConfig {
  std::uint32_t seeds = 5;
  std::uint64_t base_seed = 0;
  std::string method = "dense";
  LrConfig lr{};
  CcsConfig ccs{};
};

inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

/// Pairs affirmative and negated rows that share an id.
inline std::vector<ContrastPair> contrast_pairs(const ActivationDataset& ds, std::size_t layer) {
  require(!ds.ids.empty(), ErrorCode::InsufficientPairs, "statement ids are required to form contrast pairs");
  std::map<std::string, std::size_t> neg;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.polarity[i] == Polarity::negated) neg.emplace(ds.topics[i] + "\x1f" + ds.ids[i], i);
  std::vector<ContrastPair> out;
  const auto& acts = ds.layers.at(layer);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (ds.polarity[i] != Polarity::affirmative) continue;
    auto it = neg.find(ds.topics[i] + "\x1f" + ds.ids[i]);
    if (it == neg.end()) continue;
    ContrastPair p;
    p.a_plus.assign(acts.row(i).begin(), acts.row(i).end());
    p.a_minus.assign(acts.row(it->second).begin(), acts.row(it->second).end());
    p.plus_label = ds.labels[i] != 0;
    p.id = ds.ids[i];
    out.push_back(std::move(p));
  }
  return out;
}

namespace detail {

// Equal count per (topic, label) cell across training topics, sampled without
// replacement. Negations follow their affirmative's selection when ids pair up.
inline std::vector<std::size_t> balanced_subsample(const ActivationDataset& ds, const std::vector<std::string>& train_topics,
                                                   CounterRng& rng) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (std::find(train_topics.begin(), train_topics.end(), ds.topics[i]) != train_topics.end())
      cells[{ds.topics[i], ds.labels[i] != 0}].push_back(i);
  std::size_t per_cell = SIZE_MAX;
  for (const auto& t : train_topics)
    for (int lab = 0; lab < 2; ++lab) {
      auto it = cells.find({t, lab});
      per_cell = std::min(per_cell, it == cells.end() ? std::size_t{0} : it->second.size());
    }
  std::vector<std::size_t> out;
  for (auto& [key, idx] : cells) {
    rng.shuffle(std::span<std::size_t>(idx));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(per_cell, idx.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Trains one probe of `kind` on the given rows of `ds` at `layer`.
inline ProbeModel train_probe(ProbeKind kind, const ActivationDataset& ds, std::size_t layer, const LrConfig& lr_cfg,
                              const CcsConfig& ccs_cfg) {
  switch (kind) {
    case ProbeKind::LR: return train_lr(ds.layers[layer], ds.labels, lr_cfg);
    case ProbeKind::MM: return train_mm(ds.layers[layer], ds.labels);
    case ProbeKind::CCS: {
      const auto pairs = contrast_pairs(ds, layer);
      return train_ccs(pairs, ccs_cfg);
    }
    case ProbeKind::TTPD:
    default: return train_ttpd(ds.layers[layer], ds.labels, ds.polarity, ds.topics, TtpdConfig{lr_cfg});
  }
}

inline Prediction probe_predict(const ProbeModel& m, const ActivationDataset& ds, std::size_t layer) {
  if (m.kind == ProbeKind::TTPD) return predict_centered(m, ds.layers[layer], ds.topics);
  return predict(m, ds.layers[layer]);
}

inline EvalReport holdout_eval(const ActivationDataset& ds, ProbeKind kind, std::uint32_t layer, const HoldoutConfig& cfg = {}) {
  ds.validate();
  require(layer < ds.num_layers(), ErrorCode::LayerError,
          "layer " + std::to_string(layer) + " not present (dataset has " + std::to_string(ds.num_layers()) + ")");
  const auto topics = ds.topic_names();
  require(topics.size() >= 2, ErrorCode::InsufficientSamples, "hold-out evaluation needs at least 2 topics");
  require(cfg.seeds >= 1, ErrorCode::ConfigError, "seeds must be >= 1");

  EvalReport report;
  std::vector<std::vector<double>> acc(topics.size());
  for (std::size_t t = 0; t < topics.size(); ++t) {
    std::vector<std::string> train_topics;
    for (const auto& o : topics)
      if (o != topics[t]) train_topics.push_back(o);
    const ActivationDataset test = ds.only_topic(topics[t]);
    for (std::uint32_t s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = cfg.base_seed + s;
      CounterRng rng(seed, 0x686f6c646f7574ULL + t);
      const ActivationDataset train = ds.subset(detail::balanced_subsample(ds, train_topics, rng));
      LrConfig lr_cfg = cfg.lr;
      lr_cfg.seed = seed;
      CcsConfig ccs_cfg = cfg.ccs;
      ccs_cfg.seed = seed;
      const ProbeModel m = train_probe(kind, train, layer, lr_cfg, ccs_cfg);
      const double a = probe_predict(m, test, layer).accuracy(test.labels);
      acc[t].push_back(a);
      report.rows.push_back({cfg.method, kind, topics[t], layer, seed, a});
    }
    auto [mean, sd] = mean_std(acc[t]);
    report.topics.push_back({topics[t], mean, sd});
  }
  std::vector<double> per_seed(cfg.seeds, 0.0);
  for (std::uint32_t s = 0; s < cfg.seeds; ++s) {
    for (const auto& a : acc) per_seed[s] += a[s];
    per_seed[s] /= static_cast<double>(acc.size());
  }
  auto [mean, sd] = mean_std(per_seed);
  report.pooled = {"average", mean, sd};
  return report;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : r.rows)
    rows.push_back({{"method", x.method}, {"probe", x.probe}, {"topic", x.topic}, {"layer", x.layer}, {"seed", x.seed},
                    {"accuracy", x.accuracy}});
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& t : r.topics) topics.push_back({{"topic", t.topic}, {"mean", t.mean}, {"std", t.std}});
  return {{"rows", rows}, {"topics", topics}, {"pooled", {{"topic", r.pooled.topic}, {"mean", r.pooled.mean}, {"std", r.pooled.std}}}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    for (const auto& x : j.at("rows"))
      r.rows.push_back({x.at("method").get<std::string>(), x.at("probe").get<ProbeKind>(), x.at("topic").get<std::string>(),
                        x.at("layer").get<std::uint32_t>(), x.at("seed").get<std::uint64_t>(), x.at("accuracy").get<double>()});
    for (const auto& t : j.at("topics"))
      r.topics.push_back({t.at("topic").get<std::string>(), t.at("mean").get<double>(), t.at("std").get<double>()});
    const auto& p = j.at("pooled");
    r.pooled = {p.at("topic").get<std::string>(), p.at("mean").get<double>(), p.at("std").get<double>()};
    return r;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::SchemaError, std::string("eval report: ") + ex.what());
  }
}

inline constexpr const char* kEvalCsvHeader = "method,probe,topic,layer,seed,accuracy";

}  // namespace tplo
