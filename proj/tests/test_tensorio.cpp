#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "tplo/dataset.hpp"
#include "tplo/rng.hpp"
#include "tplo/tensorio.hpp"

using namespace tplo;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::UsageError;
}

Archive sample_archive() {
  Archive a;
  a.records.push_back(make_record("w.layer0.q", MatrixF{{1, 2, 3}, {4, 5, 6}}));
  a.records.push_back(make_record("norms", std::vector<float>{0.5f, -0.0f, 2.0f}));
  a.manifest = {"toy", 2, {{"w.layer0.q", TensorRole::weight, 0}, {"norms", TensorRole::col_norms, std::nullopt}}};
  return a;
}

std::vector<TensorRecord> random_records(CounterRng& rng) {
  std::vector<TensorRecord> recs;
  const auto n = 1 + rng.below(4);
  for (std::uint64_t r = 0; r < n; ++r) {
    TensorRecord t;
    t.name = "t" + std::to_string(r);
    const auto ndim = rng.below(5);
    std::uint64_t count = 1;
    for (std::uint64_t k = 0; k < ndim; ++k) {
      t.shape.push_back(rng.below(9));
      count *= t.shape.back();
    }
    for (std::uint64_t i = 0; i < count; ++i) t.data.push_back(static_cast<float>(rng.normal()));
    recs.push_back(std::move(t));
  }
  return recs;
}

}  // namespace

TEST(TensorIo, SingleRecordRoundTrips) {
  std::vector<TensorRecord> recs{{"w", DType::F32, {1}, {0.0f}}};
  const auto bytes = write_archive(recs, {});
  const auto back = read_archive(bytes);
  ASSERT_EQ(back.records.size(), 1u);
  EXPECT_EQ(back.records[0], recs[0]);
}

TEST(TensorIo, LayoutMatchesDocumentedBytes) {
  std::vector<TensorRecord> recs{{"w", DType::F32, {1}, {1.0f}}};
  const auto bytes = write_archive(recs, {});
  const std::vector<std::uint8_t> head{'T', 'P', 'L', '1', 1, 0,  // magic, version 1 LE
                                       1, 0, 0, 0, 'w',           // name length, name
                                       0, 1,                      // dtype F32, ndim
                                       1, 0, 0, 0, 0, 0, 0, 0,    // dim 0
                                       0x00, 0x00, 0x80, 0x3f};   // 1.0f LE
  ASSERT_GT(bytes.size(), head.size() + 8);
  EXPECT_TRUE(std::equal(head.begin(), head.end(), bytes.begin()));
  const std::string json(bytes.begin() + static_cast<std::ptrdiff_t>(head.size()), bytes.end() - 8);
  EXPECT_EQ(json, R"({"entries":[],"model_id":"","num_layers":0})");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  EXPECT_EQ(len, json.size());
}

TEST(TensorIo, WriteIsDeterministic) {
  const auto a = sample_archive();
  EXPECT_EQ(write_archive(a), write_archive(a));
}

TEST(TensorIo, RoundTripPreservesRecordsAndManifest) {
  const auto a = sample_archive();
  const auto back = read_archive(write_archive(a));
  EXPECT_EQ(back.records, a.records);
  EXPECT_EQ(back.manifest, a.manifest);
  EXPECT_TRUE(std::signbit(back.at("norms").data[1]));
}

TEST(TensorIo, RandomRoundTrips) {
  CounterRng rng(42, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto recs = random_records(rng);
    const auto back = read_archive(write_archive(recs, {}));
    ASSERT_EQ(back.records, recs) << "trial " << trial;
  }
}

TEST(TensorIo, LargeRecordRoundTrips) {
  CounterRng rng(3, 0);
  TensorRecord t{"big", DType::F32, {10, 100, 100}, {}};
  for (int i = 0; i < 100000; ++i) t.data.push_back(static_cast<float>(rng.normal()));
  const std::vector<TensorRecord> recs{t};
  EXPECT_EQ(read_archive(write_archive(recs, {})).records, recs);
}

TEST(TensorIo, ShapeMismatchRejectedBeforeWriting) {
  std::vector<TensorRecord> recs{{"w", DType::F32, {2, 3}, {1, 2, 3, 4, 5}}};
  EXPECT_EQ(code_of([&] { write_archive(recs, {}); }), ErrorCode::RejectedValue);
}

TEST(TensorIo, NonFiniteRejected) {
  std::vector<TensorRecord> recs{{"w", DType::F32, {2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}}};
  EXPECT_EQ(code_of([&] { write_archive(recs, {}); }), ErrorCode::RejectedValue);
  recs[0].data[1] = std::numeric_limits<float>::infinity();
  EXPECT_EQ(code_of([&] { write_archive(recs, {}); }), ErrorCode::RejectedValue);
}

TEST(TensorIo, DuplicateNameRejected) {
  std::vector<TensorRecord> recs{{"w", DType::F32, {1}, {1}}, {"w", DType::F32, {1}, {2}}};
  EXPECT_EQ(code_of([&] { write_archive(recs, {}); }), ErrorCode::DuplicateName);
}

TEST(TensorIo, BadMagicIsFormatError) {
  auto bytes = write_archive(sample_archive());
  std::copy_n("XXXX", 4, bytes.begin());
  EXPECT_EQ(code_of([&] { read_archive(bytes); }), ErrorCode::FormatError);
}

TEST(TensorIo, OneByteShortIsTruncationError) {
  auto bytes = write_archive(sample_archive());
  bytes.pop_back();
  EXPECT_EQ(code_of([&] { read_archive(bytes); }), ErrorCode::TruncationError);
}

TEST(TensorIo, MidPayloadTruncationIsTruncationError) {
  const auto a = sample_archive();
  const auto bytes = write_archive(a);
  // Drop one byte from inside the first payload; the footer stays intact.
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 30);
  cut.insert(cut.end(), bytes.begin() + 31, bytes.end());
  EXPECT_EQ(code_of([&] { read_archive(cut); }), ErrorCode::TruncationError);
}

TEST(TensorIo, EveryTruncationIsRejected) {
  const auto bytes = write_archive(sample_archive());
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::span<const std::uint8_t> prefix(bytes.data(), n);
    EXPECT_THROW(read_archive(prefix), Error) << "prefix length " << n;
  }
}

TEST(TensorIo, ManifestMissingTensorIsManifestError) {
  auto a = sample_archive();
  a.manifest.entries.push_back({"absent", TensorRole::weight, 1});
  EXPECT_EQ(code_of([&] { write_archive(a); }), ErrorCode::ManifestError);

  // Same manifest smuggled past the writer: the reader must catch it too.
  auto good = sample_archive();
  auto bytes = write_archive(good);
  const std::string old_json = manifest_to_json(good.manifest).dump();
  const std::string new_json = manifest_to_json(a.manifest).dump();
  bytes.resize(bytes.size() - 8 - old_json.size());
  bytes.insert(bytes.end(), new_json.begin(), new_json.end());
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(new_json.size() >> (8 * i)));
  EXPECT_EQ(code_of([&] { read_archive(bytes); }), ErrorCode::ManifestError);
}

TEST(TensorIo, LayerIndexOutOfRangeIsManifestError) {
  auto a = sample_archive();
  a.manifest.entries[0].layer_index = 2;
  EXPECT_EQ(code_of([&] { write_archive(a); }), ErrorCode::ManifestError);
}

TEST(TensorIo, ManifestJsonIsCanonical) {
  const auto j = manifest_to_json(sample_archive().manifest).dump();
  EXPECT_EQ(j.find(' '), std::string::npos);
  EXPECT_LT(j.find("\"entries\""), j.find("\"model_id\""));
  EXPECT_LT(j.find("\"model_id\""), j.find("\"num_layers\""));
}

TEST(TensorIo, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "tplo_tensorio_test.tpl";
  save_archive(path, sample_archive());
  const auto back = load_archive(path);
  EXPECT_EQ(back.records, sample_archive().records);
  std::filesystem::remove(path);
}

TEST(TensorIo, ActivationDatasetRoundTrip) {
  ActivationDataset ds;
  ds.layers = {MatrixF{{1, 2}, {3, 4}, {5, 6}}, MatrixF{{0, 1}, {1, 0}, {2, 2}}};
  ds.labels = {1, 0, 1};
  ds.topics = {"cities", "cities", "facts"};
  ds.polarity = {Polarity::affirmative, Polarity::negated, Polarity::affirmative};
  ds.ids = {"a", "a", "b"};
  const auto path = std::filesystem::temp_directory_path() / "tplo_acts_test.tpl";
  save_activations(path, ds, "toy");
  const auto back = load_activations(path);
  EXPECT_EQ(back.layers, ds.layers);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.topics, ds.topics);
  EXPECT_EQ(back.polarity, ds.polarity);
  EXPECT_EQ(back.ids, ds.ids);
  std::filesystem::remove(path);
  std::filesystem::remove(sidecar_path(path));
}
