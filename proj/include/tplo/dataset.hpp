#pragma once

// Labeled per-layer activations for true/false statements, and their on-disk form:
// a .tpl archive holding `acts.layer{l}` (n x d) plus a JSONL sidecar with one
// {row, id, topic, label, polarity} object per statement row.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tplo/error.hpp"
#include "tplo/matrix.hpp"
#include "tplo/tensorio.hpp"

namespace tplo {

enum class Polarity : std::uint8_t { affirmative, negated };

NLOHMANN_JSON_SERIALIZE_ENUM(Polarity, {{Polarity::affirmative, "affirmative"}, {Polarity::negated, "negated"}})

struct ActivationDataset {
  std::vector<MatrixF> layers;  // one (n x d) matrix per layer
  std::vector<std::uint8_t> labels;  // 1 = true statement
  std::vector<std::string> topics;
  std::vector<Polarity> polarity;
  std::vector<std::string> ids;

  std::size_t num_layers() const noexcept { return layers.size(); }
  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return layers.empty() ? 0 : layers.front().cols(); }

  void validate() const {
    require(!layers.empty(), ErrorCode::EmptyInput, "activation dataset has no layers");
    const std::size_t n = labels.size();
    require(topics.size() == n && polarity.size() == n, ErrorCode::ShapeError, "label/topic/polarity arrays misaligned");
    require(ids.empty() || ids.size() == n, ErrorCode::ShapeError, "id array misaligned");
    for (const auto& m : layers) {
      require(m.rows() == n, ErrorCode::ShapeError, "layer row count differs from label count");
      require(m.cols() == layers.front().cols(), ErrorCode::ShapeError, "layer widths differ");
    }
  }

  /// Rows selected by index, all layers kept.
  ActivationDataset subset(const std::vector<std::size_t>& idx) const {
    ActivationDataset out;
    for (const auto& m : layers) out.layers.push_back(select_rows(m, idx));
    for (auto i : idx) {
      out.labels.push_back(labels[i]);
      out.topics.push_back(topics[i]);
      out.polarity.push_back(polarity[i]);
      if (!ids.empty()) out.ids.push_back(ids[i]);
    }
    return out;
  }

  ActivationDataset only_topic(const std::string& topic) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < topics.size(); ++i)
      if (topics[i] == topic) idx.push_back(i);
    return subset(idx);
  }

  std::vector<std::string> topic_names() const {
    std::vector<std::string> out;
    for (const auto& t : topics)
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    return out;
  }
};

inline std::string activation_tensor_name(std::size_t layer) { return "acts.layer" + std::to_string(layer); }

inline std::filesystem::path sidecar_path(const std::filesystem::path& archive) {
  auto p = archive;
  p += ".labels.jsonl";
  return p;
}

inline Archive activations_to_archive(const ActivationDataset& ds, const std::string& model_id) {
  ds.validate();
  Archive a;
  a.manifest.model_id = model_id;
  a.manifest.num_layers = static_cast<std::uint32_t>(ds.num_layers());
  for (std::size_t l = 0; l < ds.num_layers(); ++l) {
    a.records.push_back(make_record(activation_tensor_name(l), ds.layers[l]));
    a.manifest.entries.push_back({activation_tensor_name(l), TensorRole::activations, static_cast<std::uint32_t>(l)});
  }
  std::vector<float> lab(ds.labels.begin(), ds.labels.end());
  a.records.push_back(make_record("labels", lab));
  a.manifest.entries.push_back({"labels", TensorRole::labels_aux, std::nullopt});
  return a;
}

inline void write_sidecar(const std::filesystem::path& path, const ActivationDataset& ds) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorCode::IOError, "cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    nlohmann::json j{{"row", i},
                     {"id", ds.ids.empty() ? std::to_string(i) : ds.ids[i]},
                     {"topic", ds.topics[i]},
                     {"label", ds.labels[i] != 0},
                     {"polarity", ds.polarity[i]}};
    f << j.dump() << '\n';
  }
}

inline void save_activations(const std::filesystem::path& path, const ActivationDataset& ds, const std::string& model_id) {
  save_archive(path, activations_to_archive(ds, model_id));
  write_sidecar(sidecar_path(path), ds);
}

/// Loads activations for every layer listed in the manifest with role `activations`.
inline ActivationDataset load_activations(const std::filesystem::path& path,
                                          std::optional<std::filesystem::path> sidecar = std::nullopt) {
  const Archive a = load_archive(path);
  ActivationDataset ds;
  std::vector<std::pair<std::uint32_t, const TensorRecord*>> layer_recs;
  for (const auto& e : a.manifest.entries)
    if (e.role == TensorRole::activations) {
      require(e.layer_index.has_value(), ErrorCode::ManifestError, "activation entry without layer_index");
      layer_recs.emplace_back(*e.layer_index, &a.at(e.tensor_name));
    }
  require(!layer_recs.empty(), ErrorCode::ManifestError, "archive has no activation tensors");
  std::sort(layer_recs.begin(), layer_recs.end(), [](auto& x, auto& y) { return x.first < y.first; });
  for (std::size_t i = 0; i < layer_recs.size(); ++i)
    require(layer_recs[i].first == i, ErrorCode::ManifestError, "activation layers are not contiguous from 0");
  for (auto& [l, r] : layer_recs) ds.layers.push_back(record_matrix(*r));

  const auto side = sidecar.value_or(sidecar_path(path));
  std::ifstream f(side);
  if (!f) fail(ErrorCode::IOError, "cannot open sidecar '" + side.string() + "'");
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaError, "malformed sidecar line: " + line);
    try {
      ds.ids.push_back(j.value("id", std::to_string(ds.ids.size())));
      ds.topics.push_back(j.at("topic").get<std::string>());
      ds.labels.push_back(j.at("label").get<bool>() ? 1 : 0);
      ds.polarity.push_back(j.value("polarity", Polarity::affirmative));
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::SchemaError, std::string("sidecar row: ") + ex.what());
    }
  }
  ds.validate();
  return ds;
}

}  // namespace tplo
