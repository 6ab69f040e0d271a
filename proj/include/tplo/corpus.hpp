#pragma once

// True/false statement files, template negation, calibration-set construction
// and a whitespace tokenizer with byte fallback for desk-scale text sources.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tplo/dataset.hpp"
#include "tplo/error.hpp"
#include "tplo/rng.hpp"

namespace tplo {

struct Statement {
  std::string id;
  std::string topic;
  std::string text;
  bool label = false;
  Polarity polarity = Polarity::affirmative;
  std::optional<std::string> negation;  // hand-written negated text, for free-form topics

  bool operator==(const Statement&) const = default;
};

enum class StatementFormat { jsonl, csv };

inline nlohmann::json statement_to_json(const Statement& s) {
  nlohmann::json j{{"id", s.id}, {"topic", s.topic}, {"text", s.text}, {"label", s.label}, {"polarity", s.polarity}};
  if (s.negation) j["negation"] = *s.negation;
  return j;
}

namespace detail {

inline bool parse_bool_field(std::string v, const std::string& where) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "t") return true;
  if (v == "false" || v == "0" || v == "f") return false;
  fail(ErrorCode::SchemaError, where + ": label '" + v + "' is not a boolean");
}

inline Polarity parse_polarity_field(const std::string& v, const std::string& where) {
  if (v.empty() || v == "affirmative") return Polarity::affirmative;
  if (v == "negated") return Polarity::negated;
  fail(ErrorCode::SchemaError, where + ": unknown polarity '" + v + "'");
}

inline Statement statement_from_json_row(const nlohmann::json& j, const std::string& where) {
  require(j.is_object(), ErrorCode::SchemaError, where + ": expected a JSON object");
  auto str = [&](const char* key) -> std::string {
    require(j.contains(key), ErrorCode::SchemaError, where + ": missing field '" + key + "'");
    if (j[key].is_number_integer()) return std::to_string(j[key].get<long long>());
    require(j[key].is_string(), ErrorCode::SchemaError, where + ": field '" + key + "' must be a string");
    return j[key].get<std::string>();
  };
  Statement s;
  s.id = str("id");
  s.topic = str("topic");
  s.text = str("text");
  require(j.contains("label"), ErrorCode::SchemaError, where + ": missing field 'label'");
  const auto& lab = j["label"];
  if (lab.is_boolean())
    s.label = lab.get<bool>();
  else if (lab.is_number_integer())
    s.label = parse_bool_field(std::to_string(lab.get<long long>()), where);
  else if (lab.is_string())
    s.label = parse_bool_field(lab.get<std::string>(), where);
  else
    fail(ErrorCode::SchemaError, where + ": label must be boolean");
  if (j.contains("polarity")) {
    require(j["polarity"].is_string(), ErrorCode::SchemaError, where + ": polarity must be a string");
    s.polarity = parse_polarity_field(j["polarity"].get<std::string>(), where);
  }
  if (j.contains("negation") && !j["negation"].is_null()) {
    require(j["negation"].is_string(), ErrorCode::SchemaError, where + ": negation must be a string");
    s.negation = j["negation"].get<std::string>();
  }
  return s;
}

/// One CSV record per call (RFC 4180 quoting, embedded newlines allowed).
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  require(!quoted, ErrorCode::SchemaError, "unterminated quoted CSV field");
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

inline std::vector<Statement> finalize_statements(std::vector<Statement> out) {
  std::map<std::pair<std::string, Polarity>, bool> seen;
  for (const auto& s : out) {
    require(!s.text.empty(), ErrorCode::SchemaError, "statement '" + s.id + "' has empty text");
    require(seen.emplace(std::pair{s.id, s.polarity}, true).second, ErrorCode::DuplicateStatement,
            "duplicate statement id '" + s.id + "' with the same polarity");
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Statement& a, const Statement& b) { return std::tie(a.topic, a.id) < std::tie(b.topic, b.id); });
  return out;
}

}  // namespace detail

inline std::vector<Statement> parse_statements_jsonl(std::istream& in, const std::string& name = "<stream>") {
  std::vector<Statement> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      fail(ErrorCode::SchemaError, where + ": " + ex.what());
    }
    out.push_back(detail::statement_from_json_row(j, where));
  }
  return detail::finalize_statements(std::move(out));
}

inline std::vector<Statement> parse_statements_csv(std::istream& in, const std::string& name = "<stream>") {
  std::vector<std::string> header, row;
  if (!detail::read_csv_record(in, header)) return {};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* key : {"id", "topic", "text", "label"})
    require(col.count(key) > 0, ErrorCode::SchemaError, name + ": missing column '" + key + "'");

  std::vector<Statement> out;
  for (std::size_t rec = 2; detail::read_csv_record(in, row); ++rec) {
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string where = name + ":record " + std::to_string(rec);
    auto get = [&](const std::string& key) -> std::optional<std::string> {
      auto it = col.find(key);
      if (it == col.end() || it->second >= row.size()) return std::nullopt;
      return row[it->second];
    };
    Statement s;
    for (const char* key : {"id", "topic", "text", "label"}) {
      const auto v = get(key);
      require(v.has_value() && (!v->empty() || std::string(key) == "text"), ErrorCode::SchemaError,
              where + ": missing field '" + key + "'");
    }
    s.id = *get("id");
    s.topic = *get("topic");
    s.text = *get("text");
    s.label = detail::parse_bool_field(*get("label"), where);
    if (auto p = get("polarity")) s.polarity = detail::parse_polarity_field(*p, where);
    if (auto n = get("negation"); n && !n->empty()) s.negation = *n;
    out.push_back(std::move(s));
  }
  return detail::finalize_statements(std::move(out));
}

inline std::vector<Statement> load_statements(const std::filesystem::path& path, StatementFormat format) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IOError, "cannot open " + path.string());
  return format == StatementFormat::jsonl ? parse_statements_jsonl(in, path.string())
                                          : parse_statements_csv(in, path.string());
}

inline void save_statements_jsonl(const std::filesystem::path& path, const std::vector<Statement>& statements) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IOError, "cannot write " + path.string());
  for (const auto& s : statements) out << statement_to_json(s).dump() << '\n';
  require(out.good(), ErrorCode::IOError, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Negation

/// A per-topic negation template. `pattern` must match the whole affirmative
/// text; `replacement` uses ECMAScript `$n` group references.
struct NegationRule {
  std::string topic;
  std::string pattern;
  std::string replacement;
};

/// Templates of the six true/false topic datasets. "facts" is free-form and has
/// no rule: its statements must carry a hand-written `negation`.
inline std::vector<NegationRule> default_negation_rules() {
  return {
      {"cities", R"(^The city of (.+) is in (.+)\.$)", "The city of $1 is not in $2."},
      {"sp_en_trans", R"(^The Spanish word (.+) means (.+)\.$)", "The Spanish word $1 does not mean $2."},
      {"element_symb", R"(^(.+) has the symbol (.+)\.$)", "$1 does not have the symbol $2."},
      {"animal_class", R"(^The (.+) is (an? .+)\.$)", "The $1 is not $2."},
      {"inventors", R"(^(.+) lived in (.+)\.$)", "$1 did not live in $2."},
  };
}

inline Statement negate(const Statement& st, const std::vector<NegationRule>& rules = default_negation_rules()) {
  require(st.polarity == Polarity::affirmative, ErrorCode::TemplateError,
          "statement '" + st.id + "' is already negated; double negation is not supported");
  Statement out = st;
  out.label = !st.label;
  out.polarity = Polarity::negated;
  out.negation.reset();
  if (st.negation) {
    require(!st.negation->empty(), ErrorCode::TemplateError, "statement '" + st.id + "' has an empty negation");
    out.text = *st.negation;
    return out;
  }
  for (const auto& r : rules) {
    if (r.topic != st.topic) continue;
    const std::regex re(r.pattern);
    if (!std::regex_match(st.text, re)) continue;
    out.text = std::regex_replace(st.text, re, r.replacement, std::regex_constants::format_first_only);
    return out;
  }
  fail(ErrorCode::TemplateError, "no negation template matches statement '" + st.id + "' of topic '" + st.topic + "'");
}

/// Affirmative statements followed by their negations (same ids).
inline std::vector<Statement> with_negations(const std::vector<Statement>& affirmative,
                                             const std::vector<NegationRule>& rules = default_negation_rules()) {
  std::vector<Statement> out;
  for (const auto& s : affirmative)
    if (s.polarity == Polarity::affirmative) out.push_back(s);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.push_back(negate(out[i], rules));
  return detail::finalize_statements(std::move(out));
}

// ---------------------------------------------------------------------------
// Tokenization

/// Whitespace tokenizer over a frequency-ranked word table. Ids 0..255 are raw
/// bytes; words in the table take ids from 256 upward; any other word is
/// spelled out byte by byte.
class ToyTokenizer {
 public:
  static constexpr std::uint32_t kByteTokens = 256;

  explicit ToyTokenizer(std::vector<std::string> words = {}) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], kByteTokens + static_cast<std::uint32_t>(i));
  }

  /// Keeps the `vocab - 256` most frequent words (ties broken lexicographically).
  static ToyTokenizer fit(const std::vector<std::string>& texts, std::uint32_t vocab) {
    require(vocab >= kByteTokens, ErrorCode::ConfigError, "tokenizer vocab must be >= 256");
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts)
      for (auto& w : split_words(t)) ++counts[w];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> words;
    for (const auto& [w, c] : ranked) {
      if (words.size() >= vocab - kByteTokens) break;
      words.push_back(w);
    }
    return ToyTokenizer(std::move(words));
  }

  std::uint32_t vocab_size() const { return kByteTokens + static_cast<std::uint32_t>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<std::uint32_t> encode(std::string_view text) const {
    std::vector<std::uint32_t> out;
    for (const auto& w : split_words(text)) {
      if (auto it = index_.find(w); it != index_.end()) {
        out.push_back(it->second);
      } else {
        for (unsigned char c : w) out.push_back(c);
      }
    }
    return out;
  }

  static std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      const std::size_t b = i;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      if (i > b) out.emplace_back(text.substr(b, i - b));
    }
    return out;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

enum class SourceFormat { token_ids, text, jsonl };

/// Documents of a text source: the whole file for `text`, the "text" field of each
/// line for `jsonl`.
inline std::vector<std::string> read_source_documents(const std::filesystem::path& path, SourceFormat format) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IOError, "cannot open " + path.string());
  std::vector<std::string> docs;
  if (format == SourceFormat::text) {
    std::stringstream ss;
    ss << in.rdbuf();
    docs.push_back(ss.str());
    return docs;
  }
  require(format == SourceFormat::jsonl, ErrorCode::ConfigError, "token-id sources have no documents");
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      docs.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::SchemaError, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return docs;
}

/// Whitespace-separated decimal token ids, as written by an external exporter.
inline std::vector<std::uint32_t> read_token_ids(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IOError, "cannot open " + path.string());
  std::vector<std::uint32_t> out;
  std::string tok;
  while (in >> tok) {
    require(!tok.empty() && std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }),
            ErrorCode::SchemaError, path.string() + ": '" + tok + "' is not a token id");
    const auto v = std::stoull(tok);
    require(v <= 0xffffffffULL, ErrorCode::SchemaError, path.string() + ": token id too large");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

/// Token stream of a source file. Text sources need a tokenizer.
inline std::vector<std::uint32_t> read_token_stream(const std::filesystem::path& path, SourceFormat format,
                                                    const ToyTokenizer* tokenizer = nullptr) {
  if (format == SourceFormat::token_ids) return read_token_ids(path);
  require(tokenizer != nullptr, ErrorCode::ConfigError, "text sources need a tokenizer");
  std::vector<std::uint32_t> out;
  for (const auto& doc : read_source_documents(path, format)) {
    const auto ids = tokenizer->encode(doc);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration sets

struct CalibrationSpec {
  std::uint32_t n_source_a = 64;
  std::uint32_t n_source_b = 64;
  std::uint32_t seq_len = 2048;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_source_a + n_source_b >= 1, ErrorCode::ConfigError, "calibration needs at least one sample");
    require(seq_len >= 8, ErrorCode::ConfigError, "calibration seq_len must be >= 8");
  }
};

struct SampleProvenance {
  char source = 'a';
  std::size_t offset = 0;  // first token of the window in its source stream

  bool operator==(const SampleProvenance&) const = default;
};

struct CalibrationSet {
  std::vector<std::vector<std::uint32_t>> samples;
  std::vector<SampleProvenance> provenance;

  std::size_t count(char source) const {
    return static_cast<std::size_t>(
        std::count_if(provenance.begin(), provenance.end(), [&](const auto& p) { return p.source == source; }));
  }
};

namespace detail {

/// `n` disjoint windows of length `len` at seeded positions, in stream order.
inline std::vector<std::size_t> window_offsets(std::size_t stream_len, std::size_t n, std::size_t len, CounterRng& rng,
                                               char source) {
  if (n == 0) return {};
  require(stream_len >= n * len, ErrorCode::SourceExhausted,
          std::string("source ") + source + " has " + std::to_string(stream_len) + " tokens, need " +
              std::to_string(n * len));
  // Scatter the slack tokens over the n + 1 gaps around the windows.
  const std::size_t slack = stream_len - n * len;
  std::vector<std::size_t> cuts(n);
  for (auto& c : cuts) c = static_cast<std::size_t>(rng.below(slack + 1));
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> offsets(n);
  for (std::size_t i = 0; i < n; ++i) offsets[i] = cuts[i] + i * len;
  return offsets;
}

}  // namespace detail

/// Seeded contiguous windows from two token streams, concatenated and shuffled.
inline CalibrationSet build_calibration(const CalibrationSpec& spec, std::span<const std::uint32_t> source_a,
                                        std::span<const std::uint32_t> source_b) {
  spec.validate();
  CounterRng rng_a(spec.seed, 0x63616c6962ULL), rng_b(spec.seed, 0x63616c6963ULL), rng_mix(spec.seed, 0x6d6978ULL);
  CalibrationSet set;
  auto take = [&](std::span<const std::uint32_t> src, std::uint32_t n, CounterRng& rng, char tag) {
    for (auto off : detail::window_offsets(src.size(), n, spec.seq_len, rng, tag)) {
      set.samples.emplace_back(src.begin() + static_cast<std::ptrdiff_t>(off),
                               src.begin() + static_cast<std::ptrdiff_t>(off + spec.seq_len));
      set.provenance.push_back({tag, off});
    }
  };
  take(source_a, spec.n_source_a, rng_a, 'a');
  take(source_b, spec.n_source_b, rng_b, 'b');

  std::vector<std::size_t> order(set.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng_mix.shuffle(std::span<std::size_t>(order));
  CalibrationSet out;
  for (auto i : order) {
    out.samples.push_back(std::move(set.samples[i]));
    out.provenance.push_back(set.provenance[i]);
  }
  return out;
}

inline nlohmann::json calibration_manifest(const CalibrationSpec& spec, const CalibrationSet& set) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& p : set.provenance) samples.push_back({{"source", std::string(1, p.source)}, {"offset", p.offset}});
  return {{"n_source_a", spec.n_source_a}, {"n_source_b", spec.n_source_b}, {"seq_len", spec.seq_len},
          {"seed", spec.seed},             {"samples", samples}};
}

}  // namespace tplo
