#pragma once

// Slow, literal reimplementations used as references. None of these call into
// the library beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "tplo/matrix.hpp"
#include "tplo/metrics.hpp"
#include "tplo/rng.hpp"

namespace oracle {

using tplo::MatrixD;
using tplo::MatrixF;

inline MatrixF wanda(const MatrixF& w, const std::vector<float>& norms) {
  MatrixF out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = norms[j] * std::fabs(w(i, j));
  return out;
}

inline double outlier_ratio(const MatrixF& s, double m) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) total += s(i, j);
  const double mean = total / static_cast<double>(s.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j)
      if (s(i, j) > m * mean) ++count;
  return static_cast<double>(count) / static_cast<double>(s.size());
}

/// Per dimension: between / (within + 1e-12), with the grand mean taken over all rows.
inline std::vector<double> variance_ratio(const MatrixD& t, const MatrixD& f) {
  const std::size_t d = t.cols();
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    double st = 0, sf = 0;
    for (std::size_t i = 0; i < t.rows(); ++i) st += t(i, j);
    for (std::size_t i = 0; i < f.rows(); ++i) sf += f(i, j);
    const double mt = st / t.rows(), mf = sf / f.rows();
    const double mu = (st + sf) / (t.rows() + f.rows());
    double within = 0;
    for (std::size_t i = 0; i < t.rows(); ++i) within += (t(i, j) - mt) * (t(i, j) - mt);
    for (std::size_t i = 0; i < f.rows(); ++i) within += (f(i, j) - mf) * (f(i, j) - mf);
    const double between = t.rows() * (mt - mu) * (mt - mu) + f.rows() * (mf - mu) * (mf - mu);
    out[j] = between / (within + 1e-12);
  }
  return out;
}

/// Keep-mask by sorting (score, index) pairs of each group and cutting the lowest k.
inline tplo::Matrix<std::uint8_t> sort_and_cut(const MatrixF& s, double sparsity, bool per_row) {
  tplo::Matrix<std::uint8_t> keep(s.rows(), s.cols(), 1);
  auto cut = [&](std::vector<std::pair<float, std::size_t>> group) {
    std::sort(group.begin(), group.end());
    const auto k = static_cast<std::size_t>(std::floor(sparsity * group.size() + 1e-9));
    for (std::size_t i = 0; i < k; ++i) keep.data()[group[i].second] = 0;
  };
  if (per_row) {
    for (std::size_t i = 0; i < s.rows(); ++i) {
      std::vector<std::pair<float, std::size_t>> g;
      for (std::size_t j = 0; j < s.cols(); ++j) g.push_back({s(i, j), i * s.cols() + j});
      cut(g);
    }
  } else {
    std::vector<std::pair<float, std::size_t>> g;
    for (std::size_t k = 0; k < s.size(); ++k) g.push_back({s.data()[k], k});
    cut(g);
  }
  return keep;
}

struct Mc {
  double mc1 = 0, mc2 = 0, mc3 = 0;
};

/// Direct reading of the three definitions with plain probabilities.
inline Mc mc_scores(const std::vector<tplo::MCInstance>& qs) {
  Mc s;
  for (const auto& q : qs) {
    const auto& c = q.candidates;
    bool best_wins = true;
    for (std::size_t a = 0; a < c.size(); ++a)
      if (c[a].is_best)
        for (std::size_t b = 0; b < c.size(); ++b)
          if (b != a && !(c[a].log_prob > c[b].log_prob)) best_wins = false;
    s.mc1 += best_wins;

    // Summing in sorted order makes equal multisets give bit-equal masses.
    std::vector<double> ps, pis;
    double z = 0;
    for (const auto& x : c) z += std::exp(x.log_prob);
    for (const auto& x : c) (x.is_correct ? ps : pis).push_back(std::exp(x.log_prob) / z);
    std::sort(ps.begin(), ps.end());
    std::sort(pis.begin(), pis.end());
    const double pc = std::accumulate(ps.begin(), ps.end(), 0.0), pi = std::accumulate(pis.begin(), pis.end(), 0.0);
    s.mc2 += pc > pi;

    bool all_above = true;
    for (const auto& x : c)
      for (const auto& y : c)
        if (x.is_correct && !y.is_correct && !(x.log_prob > y.log_prob)) all_above = false;
    s.mc3 += all_above;
  }
  s.mc1 /= qs.size();
  s.mc2 /= qs.size();
  s.mc3 /= qs.size();
  return s;
}

/// The prefix-replacement procedure carried out in density space, step by step.
inline std::vector<double> tplo_density_space(const std::vector<double>& swl, const std::vector<double>& owl, std::size_t k,
                                              double s) {
  std::vector<double> d(swl.size());
  for (std::size_t l = 0; l < d.size(); ++l) d[l] = 1.0 - (l < k ? owl[l] : swl[l]);
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
  std::vector<double> out(d.size());
  for (std::size_t l = 0; l < d.size(); ++l) out[l] = 1.0 - (d[l] + ((1.0 - s) - mean));
  return out;
}

}  // namespace oracle
