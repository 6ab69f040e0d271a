#pragma once

// Synthetic true/false statements for the toy model, and the matching signal
// injection that gives its activations a planted truth direction.
//
// Vocabulary layout (top of the vocabulary is reserved):
//   [0, normal)                         ordinary tokens, split into per-topic pools
//   [normal, normal + m)                "true" marker tokens
//   [normal + m, normal + 2m)           "false" marker tokens
//   vocab - 2                           negation token
//   vocab - 1                           statement terminal token
// Hidden subspace: the last d_signal embedding dimensions. Ordinary tokens carry
// only faint values there while markers carry +-gap/2 per dimension. No block
// writes into it, so truth information lives in low-norm input columns.

#include <cstdint>
#include <string>
#include <vector>

#include "tplo/dataset.hpp"
#include "tplo/error.hpp"
#include "tplo/rng.hpp"
#include "tplo/toymodel.hpp"

namespace tplo {

struct SyntheticCorpusConfig {
  std::uint32_t topics = 4;
  std::uint32_t n_per_topic = 64;
  std::uint32_t d_signal = 16;
  double gap = 2.0;
  std::uint64_t seed = 0;
  std::uint32_t vocab = 512;
  std::uint32_t d_model = 64;
  std::uint32_t seq_len = 10;
  std::uint32_t markers_per_class = 4;
  double hidden_scale = 0.05;
  bool negations = false;  // also emit a negated twin of every statement
};

struct SignalPlan {
  std::uint32_t vocab = 0;
  std::uint32_t d_model = 0;
  std::uint32_t d_signal = 0;
  double gap = 0.0;
  double hidden_scale = 0.0;
  std::uint32_t markers_per_class = 0;
  std::uint64_t seed = 0;

  std::uint32_t normal_tokens() const { return vocab - 2 - 2 * markers_per_class; }
  std::uint32_t true_marker(std::uint32_t i) const { return normal_tokens() + i; }
  std::uint32_t false_marker(std::uint32_t i) const { return normal_tokens() + markers_per_class + i; }
  std::uint32_t negation_token() const { return vocab - 2; }
  std::uint32_t terminal_token() const { return vocab - 1; }
  bool is_reserved(std::uint32_t t) const { return t >= normal_tokens(); }
  std::uint32_t hidden_begin() const { return d_model - d_signal; }
};

struct TokenStatement {
  std::string id;
  std::string topic;
  TokenSeq tokens;
  bool label = false;
  Polarity polarity = Polarity::affirmative;
};

struct SyntheticCorpus {
  std::vector<TokenStatement> statements;
  SignalPlan plan;

  std::vector<TokenSeq> token_sequences() const {
    std::vector<TokenSeq> out;
    for (const auto& s : statements) out.push_back(s.tokens);
    return out;
  }
};

inline std::string synthetic_topic_name(std::uint32_t t) { return "topic" + std::to_string(t); }

inline SyntheticCorpus gen_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  require(cfg.gap > 0.0, ErrorCode::ConfigError, "gap must be positive");
  require(cfg.n_per_topic >= 4, ErrorCode::TooSmall, "n_per_topic must be >= 4");
  require(cfg.topics >= 1, ErrorCode::TooSmall, "need at least one topic");
  require(cfg.seq_len >= 4, ErrorCode::ConfigError, "seq_len must be >= 4");
  require(cfg.d_signal >= 1 && cfg.d_signal < cfg.d_model, ErrorCode::ConfigError, "d_signal must be in [1, d_model)");
  require(cfg.markers_per_class >= 1, ErrorCode::ConfigError, "need at least one marker per class");

  SyntheticCorpus c;
  c.plan = {cfg.vocab, cfg.d_model, cfg.d_signal, cfg.gap, cfg.hidden_scale, cfg.markers_per_class, cfg.seed};
  require(cfg.vocab > 2 + 2 * cfg.markers_per_class + cfg.topics, ErrorCode::ConfigError, "vocab too small for the layout");
  const std::uint32_t pool = c.plan.normal_tokens() / cfg.topics;

  // Content slots exclude the marker, the optional negation and the terminal.
  const std::uint32_t content = cfg.seq_len - 3;
  for (std::uint32_t t = 0; t < cfg.topics; ++t) {
    CounterRng rng(cfg.seed, 0x636f72707573ULL + t);
    for (std::uint32_t i = 0; i < cfg.n_per_topic; ++i) {
      const bool label = (i % 2) == 0;
      TokenSeq body;
      for (std::uint32_t k = 0; k < content; ++k) body.push_back(t * pool + static_cast<std::uint32_t>(rng.below(pool)));
      const auto marker_pos = static_cast<std::size_t>(rng.below(content + 1));
      const auto marker_idx = static_cast<std::uint32_t>(rng.below(cfg.markers_per_class));

      auto make = [&](bool lab, Polarity pol) {
        TokenStatement s;
        s.id = synthetic_topic_name(t) + "-" + std::to_string(i);
        s.topic = synthetic_topic_name(t);
        s.label = lab;
        s.polarity = pol;
        s.tokens = body;
        const auto marker = lab ? c.plan.true_marker(marker_idx) : c.plan.false_marker(marker_idx);
        s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(marker_pos), marker);
        if (pol == Polarity::negated) s.tokens.push_back(c.plan.negation_token());
        s.tokens.push_back(c.plan.terminal_token());
        return s;
      };
      c.statements.push_back(make(label, Polarity::affirmative));
      if (cfg.negations) c.statements.push_back(make(!label, Polarity::negated));
    }
  }
  return c;
}

/// Plants the hidden truth channel described at the top of this file into `m`.
inline void plant_signal(ToyModel& m, const SignalPlan& plan) {
  require(m.cfg.vocab == plan.vocab && m.cfg.d_model == plan.d_model, ErrorCode::ConfigError,
          "signal plan was built for a different model shape");
  const std::uint32_t h0 = plan.hidden_begin(), d = plan.d_model;
  for (std::uint32_t t = 0; t < plan.vocab; ++t) {
    auto e = m.embed.row(t);
    for (std::uint32_t j = h0; j < d; ++j) e[j] = static_cast<float>(e[j] * plan.hidden_scale);
  }
  for (std::uint32_t i = 0; i < plan.markers_per_class; ++i) {
    auto et = m.embed.row(plan.true_marker(i));
    auto ef = m.embed.row(plan.false_marker(i));
    for (std::uint32_t j = h0; j < d; ++j) {
      et[j] += static_cast<float>(0.5 * plan.gap);
      ef[j] -= static_cast<float>(0.5 * plan.gap);
    }
  }
  for (auto& b : m.blocks)
    for (Proj p : {Proj::o, Proj::down})
      for (std::uint32_t j = h0; j < d; ++j) {
        auto r = b[p].row(j);
        std::fill(r.begin(), r.end(), 0.0f);
      }
}

/// Dense or pruned activations of the statements as an ActivationDataset.
inline ActivationDataset synthetic_activations(const ToyModel& m, const SyntheticCorpus& c, std::size_t jobs = 1) {
  ActivationDataset ds;
  ds.layers = capture_statement_activations(m, c.token_sequences(), jobs);
  for (const auto& s : c.statements) {
    ds.labels.push_back(s.label ? 1 : 0);
    ds.topics.push_back(s.topic);
    ds.polarity.push_back(s.polarity);
    ds.ids.push_back(s.id);
  }
  return ds;
}

}  // namespace tplo
