#pragma once

// TextClient over an OpenAI-style chat-completions endpoint. Configuration comes
// from the environment only:
//   TPLO_ENRICH_ENDPOINT  base URL, e.g. https://api.example.com
//   TPLO_ENRICH_API_KEY   bearer token (optional)
//   TPLO_ENRICH_MODEL     model name sent in the request body
//   TPLO_ENRICH_PATH      request path, default /v1/chat/completions

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "tplo/enrichment.hpp"
#include "tplo/error.hpp"

namespace tplo {

struct HttpClientConfig {
  std::string endpoint;
  std::string api_key;
  std::string model;
  std::string path = "/v1/chat/completions";
  std::chrono::seconds timeout{60};

  static HttpClientConfig from_env() {
    auto get = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? v : "";
    };
    HttpClientConfig c;
    c.endpoint = get("TPLO_ENRICH_ENDPOINT");
    c.api_key = get("TPLO_ENRICH_API_KEY");
    c.model = get("TPLO_ENRICH_MODEL");
    if (auto p = get("TPLO_ENRICH_PATH"); !p.empty()) c.path = p;
    require(!c.endpoint.empty(), ErrorCode::ConfigError, "TPLO_ENRICH_ENDPOINT is not set");
    require(!c.model.empty(), ErrorCode::ConfigError, "TPLO_ENRICH_MODEL is not set");
    return c;
  }
};

class HttpTextClient final : public TextClient {
 public:
  explicit HttpTextClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {}

  std::string complete(const std::string& prompt) override {
    // httplib clients are not thread-safe; one per call keeps workers independent.
    httplib::Client cli(cfg_.endpoint);
    cli.set_connection_timeout(cfg_.timeout);
    cli.set_read_timeout(cfg_.timeout);
    cli.set_write_timeout(cfg_.timeout);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    const nlohmann::json body{{"model", cfg_.model},
                              {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    auto res = cli.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("HTTP status " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      // An unreadable body yields empty text, which the caller records as malformed.
      return {};
    }
  }

 private:
  HttpClientConfig cfg_;
};

}  // namespace tplo
