#pragma once

// Binary tensor archive (.tpl).
//
// Layout, all integers little-endian:
//   "TPL1" | u16 version=1 | record* | manifest JSON bytes | u64 manifest length
// record:
//   u32 name length | name bytes | u8 dtype (0 = F32) | u8 ndim | ndim x u64 dims | f32 payload
// The manifest is canonical JSON (sorted keys, no whitespace).

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "tplo/error.hpp"
#include "tplo/matrix.hpp"

namespace tplo {

static_assert(std::endian::native == std::endian::little, "tensorio assumes a little-endian host");

enum class DType : std::uint8_t { F32 = 0 };

struct TensorRecord {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  friend bool operator==(const TensorRecord& a, const TensorRecord& b) {
    // Bitwise payload comparison so -0.0 and 0.0 are distinguished.
    return a.name == b.name && a.dtype == b.dtype && a.shape == b.shape && a.data.size() == b.data.size() &&
           (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
  }
};

inline TensorRecord make_record(std::string name, const MatrixF& m) {
  return TensorRecord{std::move(name), DType::F32, {m.rows(), m.cols()}, m.data()};
}

inline TensorRecord make_record(std::string name, std::span<const float> v) {
  return TensorRecord{std::move(name), DType::F32, {v.size()}, {v.begin(), v.end()}};
}

/// Interprets a rank-1 or rank-2 record as a matrix (rank-1 becomes a single row).
inline MatrixF record_matrix(const TensorRecord& r) {
  if (r.shape.size() == 1) return MatrixF(1, r.shape[0], r.data);
  require(r.shape.size() == 2, ErrorCode::ShapeError, "tensor '" + r.name + "' is not rank 2");
  return MatrixF(r.shape[0], r.shape[1], r.data);
}

enum class TensorRole { weight, col_norms, activations, labels_aux };

NLOHMANN_JSON_SERIALIZE_ENUM(TensorRole, {{TensorRole::weight, "weight"},
                                          {TensorRole::col_norms, "col_norms"},
                                          {TensorRole::activations, "activations"},
                                          {TensorRole::labels_aux, "labels_aux"}})

struct ManifestEntry {
  std::string tensor_name;
  TensorRole role = TensorRole::weight;
  std::optional<std::uint32_t> layer_index;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct ArchiveManifest {
  std::string model_id;
  std::uint32_t num_layers = 0;
  std::vector<ManifestEntry> entries;

  friend bool operator==(const ArchiveManifest&, const ArchiveManifest&) = default;
};

inline nlohmann::json manifest_to_json(const ArchiveManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json j{{"tensor_name", e.tensor_name}, {"role", e.role}};
    if (e.layer_index) j["layer_index"] = *e.layer_index;
    entries.push_back(std::move(j));
  }
  return {{"model_id", m.model_id}, {"num_layers", m.num_layers}, {"entries", std::move(entries)}};
}

inline ArchiveManifest manifest_from_json(const nlohmann::json& j) {
  try {
    ArchiveManifest m;
    m.model_id = j.at("model_id").get<std::string>();
    m.num_layers = j.at("num_layers").get<std::uint32_t>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.tensor_name = e.at("tensor_name").get<std::string>();
      me.role = e.at("role").get<TensorRole>();
      if (e.contains("layer_index")) me.layer_index = e.at("layer_index").get<std::uint32_t>();
      m.entries.push_back(std::move(me));
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::ManifestError, std::string("malformed manifest: ") + ex.what());
  }
}

struct Archive {
  std::vector<TensorRecord> records;
  ArchiveManifest manifest;

  const TensorRecord* find(std::string_view name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }

  const TensorRecord& at(std::string_view name) const {
    const auto* r = find(name);
    if (!r) fail(ErrorCode::ManifestError, "archive has no tensor '" + std::string(name) + "'");
    return *r;
  }

  friend bool operator==(const Archive&, const Archive&) = default;
};

namespace detail {

inline void validate_records(std::span<const TensorRecord> records) {
  std::unordered_set<std::string> names;
  for (const auto& r : records) {
    require(!r.name.empty(), ErrorCode::RejectedValue, "tensor name must be non-empty");
    require(r.dtype == DType::F32, ErrorCode::RejectedValue, "unsupported dtype for '" + r.name + "'");
    require(r.shape.size() <= 255, ErrorCode::RejectedValue, "too many dims for '" + r.name + "'");
    require(r.element_count() == r.data.size(), ErrorCode::RejectedValue,
            "tensor '" + r.name + "' has " + std::to_string(r.data.size()) + " values for shape product " +
                std::to_string(r.element_count()));
    for (float v : r.data)
      require(std::isfinite(v), ErrorCode::RejectedValue, "tensor '" + r.name + "' contains a non-finite value");
    require(names.insert(r.name).second, ErrorCode::DuplicateName, "duplicate tensor name '" + r.name + "'");
  }
}

inline void validate_manifest(const ArchiveManifest& m, std::span<const TensorRecord> records) {
  std::unordered_set<std::string_view> names;
  for (const auto& r : records) names.insert(r.name);
  for (const auto& e : m.entries) {
    require(names.contains(e.tensor_name), ErrorCode::ManifestError,
            "manifest references missing tensor '" + e.tensor_name + "'");
    if (e.layer_index)
      require(*e.layer_index < m.num_layers, ErrorCode::ManifestError,
              "layer_index out of range for '" + e.tensor_name + "'");
  }
}

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

class Cursor {
 public:
  Cursor(std::span<const std::uint8_t> bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) fail(ErrorCode::TruncationError, "archive truncated or corrupt: read past end of record section");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr char kArchiveMagic[4] = {'T', 'P', 'L', '1'};
inline constexpr std::uint16_t kArchiveVersion = 1;

/// Serializes records and manifest. Validation happens before any byte is produced.
inline std::vector<std::uint8_t> write_archive(std::span<const TensorRecord> records, const ArchiveManifest& manifest) {
  detail::validate_records(records);
  detail::validate_manifest(manifest, records);

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kArchiveMagic, kArchiveMagic + 4);
  detail::put<std::uint16_t>(out, kArchiveVersion);
  for (const auto& r : records) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(r.shape.size()));
    for (auto d : r.shape) detail::put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(r.data.data());
    out.insert(out.end(), p, p + r.data.size() * sizeof(float));
  }
  const std::string json = manifest_to_json(manifest).dump();
  out.insert(out.end(), json.begin(), json.end());
  detail::put<std::uint64_t>(out, json.size());
  return out;
}

inline std::vector<std::uint8_t> write_archive(const Archive& a) { return write_archive(a.records, a.manifest); }

inline Archive read_archive(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 6;
  const std::size_t magic_len = std::min<std::size_t>(bytes.size(), 4);
  if (std::memcmp(bytes.data(), kArchiveMagic, magic_len) != 0) fail(ErrorCode::FormatError, "bad magic");
  if (bytes.size() < kHeader + 8) fail(ErrorCode::TruncationError, "archive shorter than header and footer");

  std::uint16_t version;
  std::memcpy(&version, bytes.data() + 4, 2);
  require(version == kArchiveVersion, ErrorCode::FormatError, "unsupported archive version " + std::to_string(version));

  std::uint64_t manifest_len;
  std::memcpy(&manifest_len, bytes.data() + bytes.size() - 8, 8);
  if (manifest_len > bytes.size() - kHeader - 8)
    fail(ErrorCode::TruncationError, "archive truncated or corrupt: manifest length exceeds stream");
  const std::size_t manifest_begin = bytes.size() - 8 - manifest_len;

  Archive a;
  detail::Cursor cur(bytes, manifest_begin);
  cur.seek(kHeader);
  std::unordered_set<std::string> names;
  while (cur.pos() < manifest_begin) {
    TensorRecord r;
    auto name_len = cur.get<std::uint32_t>();
    auto name = cur.take(name_len);
    r.name.assign(name.begin(), name.end());
    auto dtype = cur.get<std::uint8_t>();
    if (dtype != 0) fail(ErrorCode::FormatError, "unknown dtype code " + std::to_string(dtype));
    auto ndim = cur.get<std::uint8_t>();
    std::uint64_t count = 1;
    for (int i = 0; i < ndim; ++i) {
      r.shape.push_back(cur.get<std::uint64_t>());
      if (r.shape.back() != 0 && count > (UINT64_MAX / sizeof(float)) / r.shape.back())
        fail(ErrorCode::TruncationError, "archive truncated or corrupt: implausible shape");
      count *= r.shape.back();
    }
    if (count > (manifest_begin - cur.pos()) / sizeof(float))
      fail(ErrorCode::TruncationError, "archive truncated or corrupt: payload of '" + r.name + "' runs past the end");
    auto payload = cur.take(count * sizeof(float));
    r.data.resize(count);
    if (count) std::memcpy(r.data.data(), payload.data(), payload.size());
    for (float v : r.data)
      if (!std::isfinite(v)) fail(ErrorCode::FormatError, "non-finite value in '" + r.name + "'");
    if (r.name.empty() || !names.insert(r.name).second)
      fail(ErrorCode::FormatError, "empty or duplicate tensor name in archive");
    a.records.push_back(std::move(r));
  }

  auto json_bytes = bytes.subspan(manifest_begin, manifest_len);
  nlohmann::json j = nlohmann::json::parse(json_bytes.begin(), json_bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    fail(ErrorCode::TruncationError, "archive truncated or corrupt: manifest section is not valid JSON");
  a.manifest = manifest_from_json(j);
  detail::validate_manifest(a.manifest, a.records);
  return a;
}

inline void save_archive(const std::filesystem::path& path, const Archive& a) {
  auto bytes = write_archive(a);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::IOError, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::IOError, "write failed for '" + path.string() + "'");
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::IOError, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Archive load_archive(const std::filesystem::path& path) { return read_archive(read_file_bytes(path)); }

}  // namespace tplo
