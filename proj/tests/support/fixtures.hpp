#pragma once

// Synthetic activation sets with known structure.

#include <cstdint>
#include <string>
#include <vector>

#include "tplo/dataset.hpp"
#include "tplo/matrix.hpp"
#include "tplo/rng.hpp"

namespace fixture {

using tplo::ActivationDataset;
using tplo::MatrixF;
using tplo::Polarity;

/// Affirmative/negated generalization set. Axis 0 carries truth times polarity
/// (strong, flips under negation), axis 1 carries polarity, axis 2 carries truth
/// regardless of polarity (class gap of 4 noise sd). Every topic also gets a
/// random offset on all axes.
struct PolarityFixture {
  ActivationDataset train;          // training topics, both polarities
  ActivationDataset affirmative;    // affirmative rows of `train`
  ActivationDataset test_negated;   // held-out topic, negated statements only
};

inline PolarityFixture polarity_fixture(std::uint64_t seed, std::size_t d = 8, std::size_t per_topic = 200) {
  tplo::CounterRng rng(seed, 7);
  PolarityFixture f;
  auto make = [&](const std::string& topic, bool with_affirmative, bool with_negated) {
    std::vector<double> offset(d);
    for (auto& o : offset) o = rng.normal();
    ActivationDataset ds;
    std::vector<float> rows;
    for (std::size_t i = 0; i < per_topic; ++i) {
      for (int pol = 0; pol < 2; ++pol) {
        if ((pol == 0 && !with_affirmative) || (pol == 1 && !with_negated)) continue;
        const bool label = i % 2 == 0;
        const double t = label ? 1.0 : -1.0, p = pol == 0 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < d; ++j) {
          double v = offset[j] + rng.normal();
          if (j == 0) v += 3.0 * t * p;
          if (j == 1) v += 2.0 * p;
          if (j == 2) v += 2.0 * t;
          rows.push_back(static_cast<float>(v));
        }
        ds.labels.push_back(label);
        ds.topics.push_back(topic);
        ds.polarity.push_back(pol == 0 ? Polarity::affirmative : Polarity::negated);
        ds.ids.push_back(topic + "-" + std::to_string(i));
      }
    }
    ds.layers.push_back(MatrixF(ds.labels.size(), d, rows));
    return ds;
  };
  auto append = [](ActivationDataset& into, const ActivationDataset& from) {
    if (into.layers.empty()) {
      into = from;
      return;
    }
    auto& a = into.layers[0].data();
    a.insert(a.end(), from.layers[0].data().begin(), from.layers[0].data().end());
    into.layers[0] = MatrixF(into.labels.size() + from.labels.size(), from.dim(), a);
    into.labels.insert(into.labels.end(), from.labels.begin(), from.labels.end());
    into.topics.insert(into.topics.end(), from.topics.begin(), from.topics.end());
    into.polarity.insert(into.polarity.end(), from.polarity.begin(), from.polarity.end());
    into.ids.insert(into.ids.end(), from.ids.begin(), from.ids.end());
  };
  for (const char* t : {"alpha", "beta", "gamma"}) append(f.train, make(t, true, true));
  f.test_negated = make("delta", false, true);
  std::vector<std::size_t> aff;
  for (std::size_t i = 0; i < f.train.rows(); ++i)
    if (f.train.polarity[i] == Polarity::affirmative) aff.push_back(i);
  f.affirmative = f.train.subset(aff);
  return f;
}

/// Two-class Gaussian blobs: class means +-gap/2 on every axis of `signal_dims`,
/// unit noise elsewhere.
inline ActivationDataset blobs(std::uint64_t seed, std::size_t n, std::size_t d, double gap, std::size_t signal_dims,
                               const std::vector<std::string>& topics = {"t0", "t1"}, bool negations = false) {
  tplo::CounterRng rng(seed, 11);
  ActivationDataset ds;
  std::vector<float> rows;
  for (const auto& topic : topics)
    for (std::size_t i = 0; i < n; ++i)
      for (int pol = 0; pol < (negations ? 2 : 1); ++pol) {
        const bool label = (i % 2 == 0) != (pol == 1);
        for (std::size_t j = 0; j < d; ++j)
          rows.push_back(static_cast<float>(rng.normal() + (j < signal_dims ? (label ? 0.5 : -0.5) * gap : 0.0)));
        ds.labels.push_back(label);
        ds.topics.push_back(topic);
        ds.polarity.push_back(pol == 0 ? Polarity::affirmative : Polarity::negated);
        ds.ids.push_back(topic + "-" + std::to_string(i));
      }
  ds.layers.push_back(MatrixF(ds.labels.size(), d, rows));
  return ds;
}

}  // namespace fixture
