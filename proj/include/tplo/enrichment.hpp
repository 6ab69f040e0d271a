#pragma once

// Statement enrichment through an external text-generation client. Each item is
// retried with exponential backoff; an item that still fails is recorded in the
// failure list instead of aborting the run.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tplo/error.hpp"
#include "tplo/hash.hpp"

namespace tplo {

inline constexpr std::string_view kEnrichmentPromptHead = "Here lies the [statement]: \"";
inline constexpr std::string_view kEnrichmentPromptTail =
    "\". Refine this [statement] by building upon its ideas, preserving its core details and key elements, and "
    "enhancing its coherence and enriching its informational depth to justify those key elements. Moreover, the "
    "syntactic fluidity and grammatical style of the refined [statement] must cohere to that of the C4 dataset.";

inline std::string build_enrichment_prompt(std::string_view statement) {
  require(!statement.empty(), ErrorCode::EmptyInput, "cannot build a prompt for an empty statement");
  std::string out;
  out.reserve(kEnrichmentPromptHead.size() + statement.size() + kEnrichmentPromptTail.size());
  out.append(kEnrichmentPromptHead).append(statement).append(kEnrichmentPromptTail);
  return out;
}

/// Narrow contract for a text-generation backend. Implementations throw on
/// transport failure or timeout; the caller owns retries.
class TextClient {
 public:
  virtual ~TextClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

struct RetryPolicy {
  std::uint32_t max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

struct EnrichmentSource {
  std::string id;
  std::string text;
};

struct EnrichedStatement {
  std::string source_id;
  std::string prompt_sha256;
  std::string text;

  bool operator==(const EnrichedStatement&) const = default;
};

struct EnrichmentFailure {
  std::string source_id;
  std::uint32_t attempts = 0;
  std::string reason;
};

struct EnrichmentResult {
  std::vector<EnrichedStatement> enriched;  // input order, failures omitted
  std::vector<EnrichmentFailure> failures;  // input order
};

/// Builds one prompt per source and sends them with at most `max_in_flight`
/// concurrent client calls. Transport errors are retried; an empty response is
/// treated as malformed and not retried.
inline EnrichmentResult enrich_statements(const std::vector<EnrichmentSource>& sources, TextClient& client,
                                          const RetryPolicy& policy = {}, std::size_t max_in_flight = 4) {
  require(policy.max_attempts >= 1, ErrorCode::ConfigError, "max_attempts must be >= 1");
  require(max_in_flight >= 1, ErrorCode::ConfigError, "max_in_flight must be >= 1");

  std::vector<std::optional<EnrichedStatement>> done(sources.size());
  std::vector<std::optional<EnrichmentFailure>> failed(sources.size());

  auto run_one = [&](std::size_t i) {
    const auto& src = sources[i];
    std::string prompt;
    try {
      prompt = build_enrichment_prompt(src.text);
    } catch (const Error& e) {
      failed[i] = EnrichmentFailure{src.id, 0, e.what()};
      return;
    }
    auto backoff = policy.initial_backoff;
    std::string last_error;
    for (std::uint32_t attempt = 1; attempt <= policy.max_attempts; ++attempt) {
      try {
        std::string text = client.complete(prompt);
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
          failed[i] = EnrichmentFailure{src.id, attempt, "malformed response: empty text"};
          return;
        }
        done[i] = EnrichedStatement{src.id, sha256_hex(prompt), std::move(text)};
        return;
      } catch (const std::exception& e) {
        last_error = e.what();
      }
      if (attempt < policy.max_attempts) {
        if (policy.sleep) policy.sleep(backoff);
        backoff = std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(backoff.count()) * policy.multiplier));
      }
    }
    failed[i] = EnrichmentFailure{src.id, policy.max_attempts, "client failed after retries: " + last_error};
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sources.size(); i = next++) run_one(i);
  };
  const std::size_t threads = std::min(max_in_flight, sources.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EnrichmentResult r;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (done[i]) r.enriched.push_back(std::move(*done[i]));
    if (failed[i]) r.failures.push_back(std::move(*failed[i]));
  }
  return r;
}

inline nlohmann::json enriched_to_json(const EnrichedStatement& e) {
  return {{"source_id", e.source_id}, {"prompt_sha256", e.prompt_sha256}, {"text", e.text}};
}

inline nlohmann::json failure_to_json(const EnrichmentFailure& f) {
  return {{"source_id", f.source_id}, {"error", code_name(ErrorCode::ItemFailed)}, {"attempts", f.attempts},
          {"reason", f.reason}};
}

inline void write_enrichment_jsonl(const std::filesystem::path& path, const std::vector<EnrichedStatement>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IOError, "cannot write " + path.string());
  for (const auto& e : rows) out << enriched_to_json(e).dump() << '\n';
  require(out.good(), ErrorCode::IOError, "write failed: " + path.string());
}

/// Sources for enrichment: JSONL rows with at least {id, text}.
inline std::vector<EnrichmentSource> load_enrichment_sources(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IOError, "cannot open " + path.string());
  std::vector<EnrichmentSource> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& id = j.at("id");
      out.push_back({id.is_string() ? id.get<std::string>() : id.dump(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::SchemaError, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace tplo
