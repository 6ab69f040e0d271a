#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tplo/corpus.hpp"

using namespace tplo;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::UsageError;
}

std::vector<Statement> jsonl(const std::string& text) {
  std::istringstream in(text);
  return parse_statements_jsonl(in);
}

std::vector<Statement> csv(const std::string& text) {
  std::istringstream in(text);
  return parse_statements_csv(in);
}

Statement st(std::string topic, std::string text, bool label, std::string id = "1") {
  return {std::move(id), std::move(topic), std::move(text), label, Polarity::affirmative, std::nullopt};
}

std::vector<std::uint32_t> ramp(std::size_t n, std::uint32_t base = 0) {
  std::vector<std::uint32_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = base + static_cast<std::uint32_t>(i);
  return v;
}

}  // namespace

TEST(Statements, FixtureRowJsonl) {
  const auto s = jsonl(R"({"id":"c1","topic":"cities","text":"The city of Bhopal is in India.","label":true})" "\n");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].topic, "cities");
  EXPECT_EQ(s[0].text, "The city of Bhopal is in India.");
  EXPECT_TRUE(s[0].label);
  EXPECT_EQ(s[0].polarity, Polarity::affirmative);
}

TEST(Statements, FixtureRowCsv) {
  const auto s = csv("id,topic,text,label\nc1,cities,The city of Bhopal is in India.,1\n");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], st("cities", "The city of Bhopal is in India.", true, "c1"));
}

TEST(Statements, EmptyInputsGiveEmptyLists) {
  EXPECT_TRUE(jsonl("").empty());
  EXPECT_TRUE(jsonl("\n  \n").empty());
  EXPECT_TRUE(csv("").empty());
  EXPECT_TRUE(csv("id,topic,text,label\n").empty());
}

TEST(Statements, MissingLabelIsSchemaError) {
  EXPECT_EQ(code_of([] { jsonl(R"({"id":"c1","topic":"cities","text":"x."})"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { csv("id,topic,text,label\nc1,cities,x.,\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { csv("id,topic,text\nc1,cities,x.\n"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { jsonl("{not json"); }), ErrorCode::SchemaError);
  EXPECT_EQ(code_of([] { jsonl(R"({"id":"c1","topic":"cities","text":"x.","label":"maybe"})"); }), ErrorCode::SchemaError);
}

TEST(Statements, DuplicateIdAndPolarity) {
  const std::string row = R"({"id":"c1","topic":"cities","text":"x.","label":true})" "\n";
  EXPECT_EQ(code_of([&] { jsonl(row + row); }), ErrorCode::DuplicateStatement);
  const auto ok = jsonl(row + R"({"id":"c1","topic":"cities","text":"y.","label":false,"polarity":"negated"})");
  EXPECT_EQ(ok.size(), 2u);
}

TEST(Statements, CsvQuotingAndOptionalColumns) {
  const auto s = csv("id,topic,text,label,negation\r\n"
                     "f1,facts,\"Water, at sea level, boils at 100 \"\"C\"\".\",true,\"Water does not boil at 100 C.\"\r\n"
                     "f2,facts,\"Line one\nline two.\",false,\r\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].text, "Water, at sea level, boils at 100 \"C\".");
  EXPECT_EQ(s[0].negation, std::optional<std::string>("Water does not boil at 100 C."));
  EXPECT_EQ(s[1].text, "Line one\nline two.");
  EXPECT_FALSE(s[1].negation.has_value());
}

TEST(Statements, SaveLoadRoundTrip) {
  std::vector<Statement> in{st("cities", "The city of Paris is in France.", true, "a"),
                            st("facts", "Ice is hot.", false, "b")};
  in[1].negation = "Ice is not hot.";
  const auto path = fs::temp_directory_path() / "tplo_statements.jsonl";
  save_statements_jsonl(path, in);
  EXPECT_EQ(load_statements(path, StatementFormat::jsonl), in);
  fs::remove(path);
  EXPECT_EQ(code_of([&] { load_statements(path, StatementFormat::jsonl); }), ErrorCode::IOError);
}

TEST(Negation, SpanishWordStraightQuotes) {
  const auto n = negate(st("sp_en_trans", "The Spanish word 'dos' means 'enemy'.", false));
  EXPECT_EQ(n.text, "The Spanish word 'dos' does not mean 'enemy'.");
  EXPECT_TRUE(n.label);
  EXPECT_EQ(n.polarity, Polarity::negated);
  EXPECT_EQ(n.id, "1");
}

TEST(Negation, SpanishWordCurlyQuotes) {
  const auto n = negate(st("sp_en_trans", "The Spanish word ‘dos’ means ‘enemy’.", false));
  EXPECT_EQ(n.text, "The Spanish word ‘dos’ does not mean ‘enemy’.");
}

TEST(Negation, EveryTemplate) {
  EXPECT_EQ(negate(st("cities", "The city of Bhopal is in India.", true)).text, "The city of Bhopal is not in India.");
  EXPECT_EQ(negate(st("element_symb", "Gold has the symbol Au.", true)).text, "Gold does not have the symbol Au.");
  EXPECT_EQ(negate(st("animal_class", "The whale is a mammal.", true)).text, "The whale is not a mammal.");
  EXPECT_EQ(negate(st("animal_class", "The ostrich is an animal.", true)).text, "The ostrich is not an animal.");
  EXPECT_EQ(negate(st("inventors", "Nikola Tesla lived in the U.S.", true)).text, "Nikola Tesla did not live in the U.S.");
}

TEST(Negation, DoubleNegationAndMissingTemplates) {
  const auto once = negate(st("cities", "The city of Bhopal is in India.", true));
  EXPECT_EQ(code_of([&] { negate(once); }), ErrorCode::TemplateError);
  EXPECT_EQ(code_of([] { negate(st("cities", "Bhopal is a city.", true)); }), ErrorCode::TemplateError);
  EXPECT_EQ(code_of([] { negate(st("facts", "The sun is a star.", true)); }), ErrorCode::TemplateError);
  auto fact = st("facts", "The sun is a star.", true);
  fact.negation = "The sun is not a star.";
  EXPECT_EQ(negate(fact).text, "The sun is not a star.");
  EXPECT_FALSE(negate(fact).label);
}

TEST(Negation, WithNegationsPairsIds) {
  const auto all = with_negations({st("cities", "The city of Rome is in Italy.", true, "r"),
                                   st("cities", "The city of Rome is in Peru.", false, "p")});
  ASSERT_EQ(all.size(), 4u);
  std::set<std::pair<std::string, Polarity>> keys;
  for (const auto& s : all) keys.insert({s.id, s.polarity});
  EXPECT_EQ(keys.size(), 4u);
}

TEST(Tokenizer, FitEncodeAndFallback) {
  const auto tok = ToyTokenizer::fit({"the cat sat", "the dog sat", "the end"}, 258);
  EXPECT_EQ(tok.words(), (std::vector<std::string>{"the", "sat"}));
  EXPECT_EQ(tok.vocab_size(), 258u);
  EXPECT_EQ(tok.encode("the  cat\n"), (std::vector<std::uint32_t>{256, 'c', 'a', 't'}));
  EXPECT_EQ(code_of([] { ToyTokenizer::fit({}, 100); }), ErrorCode::ConfigError);
}

TEST(Calibration, DefaultShapes) {
  const auto a = ramp(128 * 2048 + 100), b = ramp(64 * 2048, 1u << 20);
  const auto c4_only = build_calibration({128, 0, 2048, 1}, a, {});
  EXPECT_EQ(c4_only.samples.size(), 128u);
  EXPECT_EQ(c4_only.count('a'), 128u);
  for (const auto& s : c4_only.samples) EXPECT_EQ(s.size(), 2048u);

  const auto mixed = build_calibration({64, 64, 2048, 1}, a, b);
  EXPECT_EQ(mixed.samples.size(), 128u);
  EXPECT_EQ(mixed.count('a'), 64u);
  EXPECT_EQ(mixed.count('b'), 64u);
}

TEST(Calibration, WindowsAreContiguousDisjointAndTraceable) {
  const auto a = ramp(1000), b = ramp(500, 5000);
  const CalibrationSpec spec{6, 3, 64, 9};
  const auto set = build_calibration(spec, a, b);
  ASSERT_EQ(set.samples.size(), 9u);
  std::vector<std::pair<std::size_t, std::size_t>> spans_a;
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& p = set.provenance[i];
    const auto& src = p.source == 'a' ? a : b;
    EXPECT_TRUE(std::equal(set.samples[i].begin(), set.samples[i].end(), src.begin() + static_cast<std::ptrdiff_t>(p.offset)));
    if (p.source == 'a') spans_a.push_back({p.offset, p.offset + 64});
  }
  std::sort(spans_a.begin(), spans_a.end());
  for (std::size_t i = 1; i < spans_a.size(); ++i) EXPECT_LE(spans_a[i - 1].second, spans_a[i].first);

  const auto again = build_calibration(spec, a, b);
  EXPECT_EQ(again.samples, set.samples);
  EXPECT_EQ(again.provenance, set.provenance);
  auto other = spec;
  other.seed = 10;
  EXPECT_NE(build_calibration(other, a, b).provenance, set.provenance);
  EXPECT_EQ(calibration_manifest(spec, set).at("samples").size(), 9u);
}

TEST(Calibration, Errors) {
  const auto a = ramp(100);
  EXPECT_EQ(code_of([&] { build_calibration({0, 0, 16, 0}, a, a); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { build_calibration({7, 0, 16, 0}, a, a); }), ErrorCode::SourceExhausted);
  EXPECT_EQ(code_of([&] { build_calibration({1, 1, 16, 0}, a, {}); }), ErrorCode::SourceExhausted);
  EXPECT_EQ(build_calibration({6, 0, 16, 0}, a, {}).samples.size(), 6u);
}

TEST(Sources, TokenIdsAndText) {
  const auto dir = fs::temp_directory_path();
  std::ofstream(dir / "tplo_ids.txt") << "1 2\n3\t40\n";
  EXPECT_EQ(read_token_ids(dir / "tplo_ids.txt"), (std::vector<std::uint32_t>{1, 2, 3, 40}));
  std::ofstream(dir / "tplo_ids.txt") << "1 x 3\n";
  EXPECT_EQ(code_of([&] { read_token_ids(dir / "tplo_ids.txt"); }), ErrorCode::SchemaError);

  std::ofstream(dir / "tplo_docs.jsonl") << R"({"text":"a b"})" << "\n" << R"({"text":"b c"})" << "\n";
  const auto tok = ToyTokenizer::fit({"a b", "b c"}, 257);
  EXPECT_EQ(read_token_stream(dir / "tplo_docs.jsonl", SourceFormat::jsonl, &tok),
            (std::vector<std::uint32_t>{'a', 256, 256, 'c'}));
  fs::remove(dir / "tplo_ids.txt");
  fs::remove(dir / "tplo_docs.jsonl");
}
