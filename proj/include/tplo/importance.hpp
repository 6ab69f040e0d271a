#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tplo/error.hpp"
#include "tplo/matrix.hpp"

namespace tplo {

/// Per-weight importance |W_ij| * ||X_j||_2 for one weight matrix.
struct ImportanceMatrix {
  MatrixF scores;
  std::uint32_t layer_index = 0;
};

enum class MaskGroup { per_row, per_matrix };

struct PruneMask {
  Matrix<std::uint8_t> keep;
  MaskGroup group = MaskGroup::per_row;
  double achieved_sparsity = 0.0;
};

inline constexpr double kDefaultOutlierFactor = 5.0;

/// Number of entries dropped from a group of `group_size` at `sparsity`.
/// The 1e-9 slack keeps values such as 0.35 * 20 from flooring to 6.
inline std::size_t pruned_count(double sparsity, std::size_t group_size) {
  return static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(group_size) + 1e-9));
}

/// L2 norm of every input feature over all calibration tokens (rows of X).
template <typename T>
std::vector<float> column_norms(const Matrix<T>& calib) {
  require(calib.rows() >= 1 && calib.cols() >= 1, ErrorCode::EmptyInput, "column_norms needs at least one token");
  std::vector<double> acc(calib.cols(), 0.0);
  for (std::size_t t = 0; t < calib.rows(); ++t) {
    auto r = calib.row(t);
    for (std::size_t j = 0; j < r.size(); ++j) acc[j] += static_cast<double>(r[j]) * static_cast<double>(r[j]);
  }
  std::vector<float> out(acc.size());
  for (std::size_t j = 0; j < acc.size(); ++j) out[j] = static_cast<float>(std::sqrt(acc[j]));
  return out;
}

/// Streaming accumulator for column norms when activations arrive in chunks.
class ColumnNormAccumulator {
 public:
  explicit ColumnNormAccumulator(std::size_t cols) : sq_(cols, 0.0) {}

  void add(std::span<const float> token) {
    for (std::size_t j = 0; j < sq_.size(); ++j) sq_[j] += static_cast<double>(token[j]) * static_cast<double>(token[j]);
    ++tokens_;
  }

  std::vector<float> norms() const {
    require(tokens_ >= 1, ErrorCode::EmptyInput, "column_norms needs at least one token");
    std::vector<float> out(sq_.size());
    for (std::size_t j = 0; j < sq_.size(); ++j) out[j] = static_cast<float>(std::sqrt(sq_[j]));
    return out;
  }

  /// Adds another accumulator's sums. Merging partial results in a fixed order
  /// keeps the outcome independent of how the tokens were split.
  void merge(const ColumnNormAccumulator& other) {
    require(other.sq_.size() == sq_.size(), ErrorCode::ShapeError, "column count mismatch in merge");
    for (std::size_t j = 0; j < sq_.size(); ++j) sq_[j] += other.sq_[j];
    tokens_ += other.tokens_;
  }

  std::size_t tokens() const noexcept { return tokens_; }

 private:
  std::vector<double> sq_;
  std::size_t tokens_ = 0;
};

inline ImportanceMatrix wanda_scores(const MatrixF& w, std::span<const float> x_norms, std::uint32_t layer_index = 0) {
  require(x_norms.size() == w.cols(), ErrorCode::ShapeError,
          "x_norms has " + std::to_string(x_norms.size()) + " entries, weight has " + std::to_string(w.cols()) + " columns");
  ImportanceMatrix out{MatrixF(w.rows(), w.cols()), layer_index};
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      require(x_norms[j] >= 0.0f, ErrorCode::ShapeError, "negative column norm");
      out.scores(i, j) = x_norms[j] * std::fabs(w(i, j));
    }
  return out;
}

/// Fraction of scores strictly above m_factor times the matrix mean. An all-zero
/// matrix has no outliers and yields 0.
inline double outlier_ratio(const MatrixF& scores, double m_factor = kDefaultOutlierFactor) {
  require(m_factor > 0.0, ErrorCode::RejectedValue, "m_factor must be positive");
  require(!scores.empty(), ErrorCode::EmptyInput, "outlier_ratio on empty scores");
  double sum = 0.0;
  for (float s : scores.data()) sum += s;
  const double threshold = m_factor * (sum / static_cast<double>(scores.size()));
  std::size_t n = 0;
  for (float s : scores.data())
    if (static_cast<double>(s) > threshold) ++n;
  return static_cast<double>(n) / static_cast<double>(scores.size());
}

inline double outlier_ratio(const ImportanceMatrix& im, double m_factor = kDefaultOutlierFactor) {
  return outlier_ratio(im.scores, m_factor);
}

namespace detail {

// Drops the `k` lowest (score, index) entries of one group; stable, so equal scores
// drop the lower index first.
inline void drop_lowest(std::span<const float> scores, std::span<std::uint8_t> keep, std::size_t k,
                        std::vector<std::size_t>& order) {
  order.resize(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::fill(keep.begin(), keep.end(), std::uint8_t{1});
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = 0;
}

}  // namespace detail

inline PruneMask build_mask(const MatrixF& scores, double sparsity, MaskGroup group = MaskGroup::per_row) {
  require(sparsity >= 0.0 && sparsity < 1.0, ErrorCode::InvalidSparsity,
          "sparsity must be in [0,1), got " + std::to_string(sparsity));
  PruneMask mask{Matrix<std::uint8_t>(scores.rows(), scores.cols(), 1), group, 0.0};
  std::vector<std::size_t> order;
  if (group == MaskGroup::per_row) {
    const std::size_t k = pruned_count(sparsity, scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) detail::drop_lowest(scores.row(i), mask.keep.row(i), k, order);
  } else {
    const std::size_t k = pruned_count(sparsity, scores.size());
    detail::drop_lowest(scores.data(), mask.keep.data(), k, order);
  }
  std::size_t kept = 0;
  for (auto v : mask.keep.data()) kept += v;
  mask.achieved_sparsity = scores.empty() ? 0.0 : 1.0 - static_cast<double>(kept) / static_cast<double>(scores.size());
  return mask;
}

inline PruneMask build_mask(const ImportanceMatrix& im, double sparsity, MaskGroup group = MaskGroup::per_row) {
  return build_mask(im.scores, sparsity, group);
}

inline MatrixF apply_mask(const MatrixF& w, const PruneMask& mask) {
  require(w.rows() == mask.keep.rows() && w.cols() == mask.keep.cols(), ErrorCode::ShapeError,
          "mask shape does not match weight shape");
  MatrixF out = w;
  auto& d = out.data();
  const auto& k = mask.keep.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!k[i]) d[i] = 0.0f;
  return out;
}

/// Mask as a 0/1 float matrix, the serialized form `mask.layer{l}.{matrix}`.
inline MatrixF mask_as_floats(const PruneMask& mask) {
  MatrixF out(mask.keep.rows(), mask.keep.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = mask.keep.data()[i] ? 1.0f : 0.0f;
  return out;
}

inline PruneMask mask_from_floats(const MatrixF& m, MaskGroup group = MaskGroup::per_row) {
  PruneMask mask{Matrix<std::uint8_t>(m.rows(), m.cols(), 1), group, 0.0};
  std::size_t kept = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const float v = m.data()[i];
    require(v == 0.0f || v == 1.0f, ErrorCode::RejectedValue, "mask tensor must contain only 0 and 1");
    mask.keep.data()[i] = v == 1.0f;
    kept += mask.keep.data()[i];
  }
  mask.achieved_sparsity = m.empty() ? 0.0 : 1.0 - static_cast<double>(kept) / static_cast<double>(m.size());
  return mask;
}

}  // namespace tplo
