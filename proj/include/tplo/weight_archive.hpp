#pragma once

// Wanda scoring on exported weight archives. Every prunable matrix is a `weight`
// entry with a layer_index, paired with a `col_norms` entry named
// "<weight>.col_norms" holding the calibration input norms of its columns.

#include <map>
#include <string>
#include <vector>

#include "tplo/allocation.hpp"
#include "tplo/importance.hpp"
#include "tplo/tensorio.hpp"

namespace tplo {

inline std::string col_norms_name(const std::string& weight_name) { return weight_name + ".col_norms"; }

struct LayerWeight {
  std::uint32_t layer = 0;
  const TensorRecord* weight = nullptr;
  const TensorRecord* norms = nullptr;
};

/// Prunable matrices of an archive in manifest order. Every layer in
/// [0, num_layers) must own at least one.
inline std::vector<LayerWeight> prunable_weights(const Archive& a) {
  std::vector<LayerWeight> out;
  std::vector<bool> seen(a.manifest.num_layers, false);
  for (const auto& e : a.manifest.entries) {
    if (e.role != TensorRole::weight || !e.layer_index) continue;
    const auto* norms = a.find(col_norms_name(e.tensor_name));
    require(norms != nullptr, ErrorCode::ManifestError, "weight '" + e.tensor_name + "' has no column norms");
    out.push_back({*e.layer_index, &a.at(e.tensor_name), norms});
    seen[*e.layer_index] = true;
  }
  for (std::size_t l = 0; l < seen.size(); ++l)
    require(seen[l], ErrorCode::ManifestError, "layer " + std::to_string(l) + " has no prunable weights");
  return out;
}

/// Per-layer outlier ratio, pooled over the layer's matrices weighted by size.
inline std::vector<double> archive_outlier_ratios(const Archive& a, double m_factor = kDefaultOutlierFactor) {
  const auto ws = prunable_weights(a);
  std::vector<double> hit(a.manifest.num_layers, 0.0), total(a.manifest.num_layers, 0.0);
  for (const auto& w : ws) {
    const auto scores = wanda_scores(record_matrix(*w.weight), w.norms->data, w.layer);
    const auto n = static_cast<double>(scores.scores.size());
    hit[w.layer] += outlier_ratio(scores, m_factor) * n;
    total[w.layer] += n;
  }
  for (std::size_t l = 0; l < hit.size(); ++l) hit[l] /= total[l];
  return hit;
}

/// Applies one-shot Wanda masks at each layer's profile sparsity. Non-weight
/// records are copied unchanged. `achieved`, when given, receives each layer's
/// masked fraction pooled over its matrices.
inline Archive prune_archive(const Archive& a, const SparsityProfile& profile, MaskGroup group = MaskGroup::per_row,
                             std::vector<double>* achieved = nullptr) {
  require(profile.layers() == a.manifest.num_layers, ErrorCode::ProfileMismatch,
          "profile has " + std::to_string(profile.layers()) + " layers, archive has " +
              std::to_string(a.manifest.num_layers));
  std::map<std::string, MatrixF> pruned;
  std::vector<double> masked(a.manifest.num_layers, 0.0), total(a.manifest.num_layers, 0.0);
  for (const auto& w : prunable_weights(a)) {
    const double s = profile.sparsity[w.layer];
    const auto n = static_cast<double>(w.weight->data.size());
    total[w.layer] += n;
    if (s <= 0.0) continue;
    const auto wm = record_matrix(*w.weight);
    const auto mask = build_mask(wanda_scores(wm, w.norms->data, w.layer), s, group);
    masked[w.layer] += mask.achieved_sparsity * n;
    pruned.emplace(w.weight->name, apply_mask(wm, mask));
  }
  if (achieved) {
    for (std::size_t l = 0; l < masked.size(); ++l) masked[l] /= total[l];
    *achieved = std::move(masked);
  }
  Archive out = a;
  for (auto& r : out.records)
    if (auto it = pruned.find(r.name); it != pruned.end()) r.data = it->second.data();
  return out;
}

}  // namespace tplo
