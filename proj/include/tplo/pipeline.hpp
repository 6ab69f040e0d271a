#pragma once

// End-to-end desk-scale run on the toy model. A truth signal is planted, dense
// measurements drive the sparsity allocation, and the pruned model is compared
// against the dense one.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tplo/allocation.hpp"
#include "tplo/metrics.hpp"
#include "tplo/probes.hpp"
#include "tplo/separability.hpp"
#include "tplo/synthetic.hpp"
#include "tplo/toymodel.hpp"

namespace tplo {

struct ToyPipelineConfig {
  std::uint64_t seed = 0;
  ToyModelConfig model{};
  SyntheticCorpusConfig corpus{};
  std::uint32_t calib_samples = 32;
  std::uint32_t calib_len = 128;
  std::uint32_t eval_samples = 16;
  std::uint32_t eval_len = 64;
  double sparsity = 0.5;
  AllocationMethod method = AllocationMethod::tplo;
  double lambda = kDefaultLambda;
  double m_factor = kDefaultOutlierFactor;
  std::optional<std::uint32_t> prefix_k;     // default: 10 of 32 layers, scaled to the model depth
  std::optional<std::uint32_t> probe_layer;  // default: the dense model's most separable layer
  std::uint32_t holdout_seeds = 5;
  MaskGroup group = MaskGroup::per_row;

  std::uint32_t resolved_prefix() const { return prefix_k.value_or(scaled_prefix(model.num_layers)); }
};

inline nlohmann::json toy_config_to_json(const ToyPipelineConfig& c) {
  nlohmann::json j{
      {"seed", c.seed},
      {"model",
       {{"num_layers", c.model.num_layers},
        {"d_model", c.model.d_model},
        {"heads", c.model.heads},
        {"ffn_mult", c.model.ffn_mult},
        {"vocab", c.model.vocab}}},
      {"corpus",
       {{"topics", c.corpus.topics},
        {"n_per_topic", c.corpus.n_per_topic},
        {"d_signal", c.corpus.d_signal},
        {"gap", c.corpus.gap},
        {"seq_len", c.corpus.seq_len},
        {"markers_per_class", c.corpus.markers_per_class},
        {"hidden_scale", c.corpus.hidden_scale},
        {"negations", c.corpus.negations}}},
      {"calib_samples", c.calib_samples},
      {"calib_len", c.calib_len},
      {"eval_samples", c.eval_samples},
      {"eval_len", c.eval_len},
      {"sparsity", c.sparsity},
      {"method", c.method},
      {"lambda", c.lambda},
      {"m_factor", c.m_factor},
      {"prefix_k", c.resolved_prefix()},
      {"holdout_seeds", c.holdout_seeds},
      {"group", c.group == MaskGroup::per_row ? "per_row" : "per_matrix"},
  };
  j["probe_layer"] = c.probe_layer ? nlohmann::json(*c.probe_layer) : nlohmann::json(nullptr);
  return j;
}

/// Everything about one seed that does not depend on the sparsity profile.
struct ToySetup {
  ToyPipelineConfig cfg;
  ToyModel model;
  SyntheticCorpus corpus;
  std::vector<TokenSeq> calib;
  std::vector<TokenSeq> eval;
  ActivationDataset dense;
  SeparabilityProfile dense_sep;
  std::vector<double> outlier_ratios;
  std::uint32_t probe_layer = 0;
};

struct ToyRun {
  std::string name;
  SparsityProfile profile;
  ToyModel model;
  ActivationDataset acts;
  SeparabilityProfile sep;
  double perplexity = 0.0;
};

inline ToySetup make_toy_setup(const ToyPipelineConfig& cfg, std::size_t jobs = 1) {
  ToySetup t;
  t.cfg = cfg;
  t.cfg.model.seed = cfg.seed;
  t.cfg.corpus.seed = cfg.seed;
  t.cfg.corpus.vocab = cfg.model.vocab;
  t.cfg.corpus.d_model = cfg.model.d_model;
  t.cfg.model.validate();
  require(cfg.calib_samples >= 1 && cfg.calib_len >= 2, ErrorCode::ConfigError, "calibration set is too small");
  require(cfg.eval_samples >= 1 && cfg.eval_len >= 2, ErrorCode::ConfigError, "evaluation corpus is too small");

  t.model = init_model(t.cfg.model);
  t.corpus = gen_synthetic_corpus(t.cfg.corpus);
  plant_signal(t.model, t.corpus.plan);

  // Calibration and evaluation text are sampled from the dense model itself, so
  // pruning can only move the model away from the distribution it is scored on.
  const auto plan = t.corpus.plan;
  auto ordinary = [plan](std::uint32_t tok) { return !plan.is_reserved(tok); };
  t.calib = sample_sequences(t.model, cfg.calib_samples, cfg.calib_len, CounterRng(cfg.seed, 0x63616c6962ULL).next_u64(),
                             1.0, ordinary);
  t.eval = sample_sequences(t.model, cfg.eval_samples, cfg.eval_len, CounterRng(cfg.seed, 0x6576616cULL).next_u64(), 1.0,
                            ordinary);

  t.dense = synthetic_activations(t.model, t.corpus, jobs);
  t.dense_sep = lsd_profile(t.dense);
  t.outlier_ratios = layer_outlier_ratios(t.model, t.calib, cfg.m_factor, jobs);
  t.probe_layer = cfg.probe_layer.value_or(t.dense_sep.argmax_layer);
  require(t.probe_layer < t.cfg.model.num_layers, ErrorCode::LayerError,
          "probe layer " + std::to_string(t.probe_layer) + " out of range");
  return t;
}

/// The allocation for `method` at target `s`. For TPLO, the SWL and OWL inputs
/// are appended to `parts` when given.
inline SparsityProfile toy_profile(const ToySetup& t, AllocationMethod method, double s,
                                   std::vector<NamedProfile>* parts = nullptr) {
  const auto layers = t.cfg.model.num_layers;
  switch (method) {
    case AllocationMethod::uniform:
      return uniform_profile(layers, s);
    case AllocationMethod::swl:
      return swl_profile(t.dense_sep, s, t.cfg.lambda);
    case AllocationMethod::owl:
      return owl_profile(t.outlier_ratios, s, t.cfg.lambda);
    case AllocationMethod::tplo: {
      const auto swl = swl_profile(t.dense_sep, s, t.cfg.lambda);
      const auto owl = owl_profile(t.outlier_ratios, s, t.cfg.lambda);
      if (parts) {
        parts->push_back({"swl", swl});
        parts->push_back({"owl", owl});
      }
      return tplo_profile(swl, owl, t.cfg.resolved_prefix(), s);
    }
  }
  fail(ErrorCode::ConfigError, "unknown allocation method");
}

inline ToyRun toy_prune(const ToySetup& t, const SparsityProfile& profile, std::string name, std::size_t jobs = 1) {
  ToyRun r;
  r.name = std::move(name);
  r.profile = profile;
  r.model = prune_model(t.model, profile, t.calib, t.cfg.group, nullptr, jobs);
  r.acts = synthetic_activations(r.model, t.corpus, jobs);
  r.sep = lsd_profile(r.acts);
  r.perplexity = perplexity(r.model, t.eval, jobs);
  return r;
}

inline double mean_lsd(const SeparabilityProfile& p) {
  double s = 0.0;
  for (double v : p.lsd) s += v;
  return p.lsd.empty() ? 0.0 : s / static_cast<double>(p.lsd.size());
}

inline HoldoutConfig toy_holdout_config(const ToySetup& t, std::string method) {
  HoldoutConfig h;
  h.seeds = t.cfg.holdout_seeds;
  h.base_seed = t.cfg.seed;
  h.method = std::move(method);
  return h;
}

inline ReportBundle run_toy_pipeline(const ToyPipelineConfig& cfg, std::size_t jobs = 1) {
  const ToySetup t = make_toy_setup(cfg, jobs);
  const std::string name = nlohmann::json(cfg.method).get<std::string>();

  ReportBundle b;
  b.config = toy_config_to_json(t.cfg);
  b.config["resolved_probe_layer"] = t.probe_layer;

  std::vector<NamedProfile> parts;
  const auto profile = toy_profile(t, cfg.method, cfg.sparsity, &parts);
  const ToyRun run = toy_prune(t, profile, name, jobs);

  b.profiles = parts;
  b.profiles.push_back({name, profile});

  b.perplexities.push_back({"dense", 0.0, cfg.seed, perplexity(t.model, t.eval, jobs)});
  b.perplexities.push_back({name, cfg.sparsity, cfg.seed, run.perplexity});
  for (std::uint32_t l = 0; l < t.dense_sep.lsd.size(); ++l) b.lsd.push_back({"dense", 0.0, cfg.seed, l, t.dense_sep.lsd[l]});
  for (std::uint32_t l = 0; l < run.sep.lsd.size(); ++l) b.lsd.push_back({name, cfg.sparsity, cfg.seed, l, run.sep.lsd[l]});

  b.probes.push_back(holdout_eval(t.dense, ProbeKind::LR, t.probe_layer, toy_holdout_config(t, "dense")));
  b.probes.push_back(holdout_eval(run.acts, ProbeKind::LR, t.probe_layer, toy_holdout_config(t, name)));
  return b;
}

}  // namespace tplo
