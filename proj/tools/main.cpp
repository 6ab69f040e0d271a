// tplo command-line entry point.
//
// Exit codes: 0 success, 1 domain error, 2 usage error. Domain errors are printed
// to stderr as "ERROR <Code>: <message>".

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tplo/allocation.hpp"
#include "tplo/dataset.hpp"
#include "tplo/enrichment.hpp"
#include "tplo/http_client.hpp"
#include "tplo/metrics.hpp"
#include "tplo/pipeline.hpp"
#include "tplo/probes.hpp"
#include "tplo/separability.hpp"
#include "tplo/tensorio.hpp"
#include "tplo/weight_archive.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tplo;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool print_config = false;
  std::size_t jobs = 1;
};

[[noreturn]] void usage(const std::string& msg) { fail(ErrorCode::UsageError, msg); }

json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::IOError, "cannot open '" + path.string() + "'");
  auto j = json::parse(f, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::SchemaError, "'" + path.string() + "' is not valid JSON");
  return j;
}

/// Writes `text` to `path`, or to stdout when no path was given.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::IOError, "cannot write '" + path + "'");
  f << text;
  if (!f) fail(ErrorCode::IOError, "write failed for '" + path + "'");
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

std::vector<double> number_array(const json& j, const char* key, const fs::path& from) {
  try {
    return j.at(key).get<std::vector<double>>();
  } catch (const json::exception&) {
    fail(ErrorCode::SchemaError, "'" + from.string() + "' has no numeric array '" + key + "'");
  }
}

const std::map<std::string, AllocationMethod> kMethods{{"uniform", AllocationMethod::uniform},
                                                       {"swl", AllocationMethod::swl},
                                                       {"owl", AllocationMethod::owl},
                                                       {"tplo", AllocationMethod::tplo}};
const std::map<std::string, ProbeKind> kProbeKinds{
    {"lr", ProbeKind::LR}, {"mm", ProbeKind::MM}, {"ccs", ProbeKind::CCS}, {"ttpd", ProbeKind::TTPD}};
const std::map<std::string, MaskGroup> kGroups{{"per_row", MaskGroup::per_row}, {"per_matrix", MaskGroup::per_matrix}};

std::string opt_path(const std::optional<std::string>& p) { return p.value_or(""); }

/// One subcommand: registers its options, reports its resolved configuration and runs.
struct Command {
  virtual ~Command() = default;
  virtual json config(const Globals& g) const = 0;
  virtual int run(const Globals& g) = 0;
};

// ---------------------------------------------------------------------------

struct LsdCmd final : Command {
  std::string acts, out, csv;
  std::optional<std::string> sidecar, topic;

  explicit LsdCmd(CLI::App& app) {
    auto* c = app.add_subcommand("lsd", "Layer-wise separability of true/false activations");
    c->add_option("--acts", acts, "Activation archive (.tpl) with a labels sidecar")->required()->check(CLI::ExistingFile);
    c->add_option("--sidecar", sidecar, "Labels sidecar (default: <acts>.labels.jsonl)")->check(CLI::ExistingFile);
    c->add_option("--topic", topic, "Restrict to one topic");
    c->add_option("--out", out, "Output JSON (default stdout)");
    c->add_option("--csv", csv, "Also write layer,lsd,sep_pd rows here");
  }

  json config(const Globals&) const override {
    return {{"acts", acts}, {"sidecar", sidecar ? json(*sidecar) : json()}, {"topic", topic ? json(*topic) : json()},
            {"out", out}, {"csv", csv}};
  }

  int run(const Globals&) override {
    const auto ds = load_activations(acts, sidecar ? std::optional<fs::path>(*sidecar) : std::nullopt);
    const auto p = lsd_profile(ds, topic);
    emit(out, pretty({{"lsd", p.lsd}, {"sep_pd", p.sep_pd}, {"argmax_layer", p.argmax_layer}}));
    if (!csv.empty()) {
      std::string text = "layer,lsd,sep_pd\n";
      for (std::size_t l = 0; l < p.lsd.size(); ++l)
        text += std::to_string(l) + "," + json(p.lsd[l]).dump() + "," + json(p.sep_pd[l]).dump() + "\n";
      emit(csv, text);
    }
    return 0;
  }
};

struct OutliersCmd final : Command {
  std::string weights, out;
  double m_factor = kDefaultOutlierFactor;

  explicit OutliersCmd(CLI::App& app) {
    auto* c = app.add_subcommand("outliers", "Per-layer Wanda outlier ratios of a weight archive");
    c->add_option("--weights", weights, "Weight archive with <name>.col_norms entries")->required()->check(CLI::ExistingFile);
    c->add_option("--m-factor", m_factor, "Outlier threshold as a multiple of the mean score")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Output JSON (default stdout)");
  }

  json config(const Globals&) const override { return {{"weights", weights}, {"m_factor", m_factor}, {"out", out}}; }

  int run(const Globals&) override {
    const auto ratios = archive_outlier_ratios(load_archive(weights), m_factor);
    emit(out, pretty({{"m_factor", m_factor}, {"ratios", ratios}}));
    return 0;
  }
};

struct AllocateCmd final : Command {
  std::string method_name, out;
  double sparsity = 0.5, lambda = kDefaultLambda;
  std::optional<std::uint32_t> prefix_k, layers;
  std::optional<std::string> lsd_path, outliers_path;

  explicit AllocateCmd(CLI::App& app) {
    auto* c = app.add_subcommand("allocate", "Per-layer sparsity profile");
    c->add_option("--method", method_name, "Allocation method")->required()->check(CLI::IsMember(kMethods));
    c->add_option("--sparsity", sparsity, "Target mean sparsity")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    c->add_option("--lambda", lambda, "Half-width of the per-layer sparsity band")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    c->add_option("--prefix-k", prefix_k, "TPLO prefix length (default: 10 of 32 layers, scaled)");
    c->add_option("--layers", layers, "Layer count for uniform profiles without inputs")->check(CLI::PositiveNumber);
    c->add_option("--lsd", lsd_path, "JSON from `lsd` (needed by swl, tplo)")->check(CLI::ExistingFile);
    c->add_option("--outliers", outliers_path, "JSON from `outliers` (needed by owl, tplo)")->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output JSON (default stdout)");
  }

  AllocationMethod method() const { return kMethods.at(method_name); }

  void validate() const {
    const auto m = method();
    if ((m == AllocationMethod::swl || m == AllocationMethod::tplo) && !lsd_path) usage(method_name + " needs --lsd");
    if ((m == AllocationMethod::owl || m == AllocationMethod::tplo) && !outliers_path)
      usage(method_name + " needs --outliers");
    if (m == AllocationMethod::uniform && !layers && !lsd_path && !outliers_path)
      usage("uniform needs --layers, --lsd or --outliers");
  }

  json config(const Globals&) const override {
    return {{"method", method_name},
            {"sparsity", sparsity},
            {"lambda", lambda},
            {"prefix_k", prefix_k ? json(*prefix_k) : json()},
            {"layers", layers ? json(*layers) : json()},
            {"lsd", opt_path(lsd_path)},
            {"outliers", opt_path(outliers_path)},
            {"out", out}};
  }

  int run(const Globals&) override {
    validate();
    std::optional<std::vector<double>> lsd, ratios;
    if (lsd_path) lsd = number_array(read_json_file(*lsd_path), "lsd", *lsd_path);
    if (outliers_path) ratios = number_array(read_json_file(*outliers_path), "ratios", *outliers_path);
    if (lsd && ratios)
      require(lsd->size() == ratios->size(), ErrorCode::ProfileMismatch, "lsd and outlier inputs differ in layer count");
    const auto n = static_cast<std::uint32_t>(lsd ? lsd->size() : ratios ? ratios->size() : *layers);
    if (layers) require(*layers == n, ErrorCode::ProfileMismatch, "--layers disagrees with the inputs");

    SparsityProfile p;
    json extra = json::object();
    switch (method()) {
      case AllocationMethod::uniform: p = uniform_profile(n, sparsity); break;
      case AllocationMethod::swl: p = swl_profile(profile_from_lsd(*lsd), sparsity, lambda); break;
      case AllocationMethod::owl: p = owl_profile(*ratios, sparsity, lambda); break;
      case AllocationMethod::tplo: {
        const auto k = prefix_k.value_or(scaled_prefix(n));
        p = tplo_profile(swl_profile(profile_from_lsd(*lsd), sparsity, lambda), owl_profile(*ratios, sparsity, lambda), k,
                         sparsity);
        extra["prefix_k"] = k;
        break;
      }
    }
    json j = profile_to_json(p);
    j.update(extra);
    if (p.degenerate) j["degenerate"] = true;
    emit(out, pretty(j));
    return 0;
  }
};

struct PruneCmd final : Command {
  std::string weights, profile, out, group = "per_row";

  explicit PruneCmd(CLI::App& app) {
    auto* c = app.add_subcommand("prune", "Apply Wanda masks to a weight archive under a sparsity profile");
    c->add_option("--weights", weights, "Weight archive with <name>.col_norms entries")->required()->check(CLI::ExistingFile);
    c->add_option("--profile", profile, "Profile JSON from `allocate`")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Pruned archive path")->required();
    c->add_option("--group", group, "Comparison group for the mask")->capture_default_str()->check(CLI::IsMember(kGroups));
  }

  json config(const Globals&) const override {
    return {{"weights", weights}, {"profile", profile}, {"out", out}, {"group", group}};
  }

  int run(const Globals&) override {
    const auto a = load_archive(weights);
    const auto p = profile_from_json(read_json_file(profile));
    std::vector<double> achieved;
    save_archive(out, prune_archive(a, p, kGroups.at(group), &achieved));
    std::cout << pretty({{"out", out}, {"achieved_sparsity", achieved}});
    return 0;
  }
};

struct ProbeCmd final : Command {
  std::string kind = "lr", acts, method = "dense", out, report_dir, save_probe;
  std::optional<std::string> sidecar;
  std::uint32_t layer = 12, seeds = 5;

  explicit ProbeCmd(CLI::App& app) {
    auto* c = app.add_subcommand("probe", "Hold-one-topic-out truth probing");
    c->add_option("--kind", kind, "Probe family")->capture_default_str()->check(CLI::IsMember(kProbeKinds));
    c->add_option("--acts", acts, "Activation archive (.tpl) with a labels sidecar")->required()->check(CLI::ExistingFile);
    c->add_option("--sidecar", sidecar, "Labels sidecar (default: <acts>.labels.jsonl)")->check(CLI::ExistingFile);
    c->add_option("--layer", layer, "Layer to probe")->capture_default_str();
    c->add_option("--seeds", seeds, "Number of evaluation seeds")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--method", method, "Label recorded for the activations' pruning method")->capture_default_str();
    c->add_option("--out", out, "Output JSON (default stdout)");
    c->add_option("--report-dir", report_dir, "Also write CSV/JSON report files here");
    c->add_option("--save-probe", save_probe, "Train one probe on all rows and save it as JSON");
  }

  json config(const Globals& g) const override {
    return {{"kind", kind},     {"acts", acts},           {"sidecar", opt_path(sidecar)}, {"layer", layer},
            {"seeds", seeds},   {"base_seed", g.seed},    {"method", method},             {"out", out},
            {"report_dir", report_dir}, {"save_probe", save_probe}};
  }

  int run(const Globals& g) override {
    const auto ds = load_activations(acts, sidecar ? std::optional<fs::path>(*sidecar) : std::nullopt);
    HoldoutConfig h;
    h.seeds = seeds;
    h.base_seed = g.seed;
    h.method = method;
    h.ccs.seed = g.seed;
    const auto k = kProbeKinds.at(kind);
    const auto report = holdout_eval(ds, k, layer, h);
    emit(out, pretty(report_to_json(report)));
    if (!report_dir.empty()) {
      ReportBundle b;
      b.config = config(g);
      b.probes.push_back(report);
      emit_report(b, report_dir);
    }
    if (!save_probe.empty()) emit(save_probe, pretty(probe_to_json(train_probe(k, ds, layer, h.lr, h.ccs))));
    return 0;
  }
};

struct McScoreCmd final : Command {
  std::string input, method = "model", out, report_dir;
  bool mean_mass = false;

  explicit McScoreCmd(CLI::App& app) {
    auto* c = app.add_subcommand("mc-score", "MC1/MC2/MC3 from per-candidate log-probabilities");
    c->add_option("--input", input, "JSONL of {question_id, candidates:[{log_prob,is_correct,is_best}]}")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_flag("--mc2-mean-mass", mean_mass, "MC2 as the mean normalized correct mass");
    c->add_option("--method", method, "Label recorded for the model")->capture_default_str();
    c->add_option("--out", out, "Output JSON (default stdout)");
    c->add_option("--report-dir", report_dir, "Also write CSV/JSON report files here");
  }

  json config(const Globals&) const override {
    return {{"input", input}, {"mc2_mode", mean_mass ? "mean_mass" : "majority"}, {"method", method}, {"out", out},
            {"report_dir", report_dir}};
  }

  int run(const Globals& g) override {
    const auto qs = load_mc_instances(input);
    const auto s = mc_scores(qs, mean_mass ? Mc2Mode::mean_mass : Mc2Mode::majority);
    emit(out, pretty({{"method", method}, {"instances", qs.size()}, {"mc1", s.mc1}, {"mc2", s.mc2}, {"mc3", s.mc3}}));
    if (!report_dir.empty()) {
      ReportBundle b;
      b.config = config(g);
      b.mc.push_back({method, s});
      emit_report(b, report_dir);
    }
    return 0;
  }
};

class EchoTextClient final : public TextClient {
 public:
  std::string complete(const std::string& prompt) override { return prompt; }
};

struct EnrichCmd final : Command {
  std::string input, output, failures, client = "http";
  std::size_t max_in_flight = 4;
  std::uint32_t max_attempts = 4, backoff_ms = 500;

  explicit EnrichCmd(CLI::App& app) {
    auto* c = app.add_subcommand("enrich", "Enrich statements through a text-generation endpoint");
    c->add_option("--input", input, "JSONL of {id, text}")->required()->check(CLI::ExistingFile);
    c->add_option("--output", output, "Enriched JSONL {source_id, prompt_sha256, text}")->required();
    c->add_option("--failures", failures, "Per-item failure records (JSONL)");
    c->add_option("--client", client, "http (configured from TPLO_ENRICH_* env vars) or echo")
        ->capture_default_str()
        ->check(CLI::IsMember({"http", "echo"}));
    c->add_option("--max-in-flight", max_in_flight, "Concurrent requests")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--max-attempts", max_attempts, "Attempts per item")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--backoff-ms", backoff_ms, "Initial retry backoff")->capture_default_str();
  }

  json config(const Globals&) const override {
    return {{"input", input},
            {"output", output},
            {"failures", failures},
            {"client", client},
            {"max_in_flight", max_in_flight},
            {"max_attempts", max_attempts},
            {"backoff_ms", backoff_ms}};
  }

  int run(const Globals&) override {
    std::unique_ptr<TextClient> tc;
    if (client == "echo") tc = std::make_unique<EchoTextClient>();
    else tc = std::make_unique<HttpTextClient>(HttpClientConfig::from_env());
    const auto sources = load_enrichment_sources(input);
    RetryPolicy policy;
    policy.max_attempts = max_attempts;
    policy.initial_backoff = std::chrono::milliseconds(backoff_ms);
    const auto r = enrich_statements(sources, *tc, policy, max_in_flight);
    write_enrichment_jsonl(output, r.enriched);
    if (!failures.empty()) {
      std::string text;
      for (const auto& f : r.failures) text += failure_to_json(f).dump() + "\n";
      emit(failures, text);
    }
    for (const auto& f : r.failures) std::cerr << "WARN " << code_name(ErrorCode::ItemFailed) << ": " << f.source_id << ": " << f.reason << "\n";
    std::cout << pretty({{"enriched", r.enriched.size()}, {"failed", r.failures.size()}});
    return 0;
  }
};

/// Options shared by the toy-model subcommands.
struct ToyOptions {
  ToyPipelineConfig cfg;
  std::string method_name = "tplo", group = "per_row";

  void add(CLI::App* c) {
    c->add_option("--sparsity", cfg.sparsity, "Target mean sparsity")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    c->add_option("--method", method_name, "Allocation method")->capture_default_str()->check(CLI::IsMember(kMethods));
    c->add_option("--lambda", cfg.lambda, "Half-width of the per-layer band")->capture_default_str();
    c->add_option("--m-factor", cfg.m_factor, "Outlier threshold multiple")->capture_default_str();
    c->add_option("--prefix-k", cfg.prefix_k, "TPLO prefix length (default scaled from 10 of 32)");
    c->add_option("--probe-layer", cfg.probe_layer, "Probe layer (default: the most separable dense layer)");
    c->add_option("--num-layers", cfg.model.num_layers, "Toy model depth")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--d-model", cfg.model.d_model, "Toy model width")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--heads", cfg.model.heads, "Attention heads")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--vocab", cfg.model.vocab, "Vocabulary size")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--topics", cfg.corpus.topics, "Synthetic topics")->capture_default_str();
    c->add_option("--n-per-topic", cfg.corpus.n_per_topic, "Statements per topic")->capture_default_str();
    c->add_option("--d-signal", cfg.corpus.d_signal, "Planted signal dimensions")->capture_default_str();
    c->add_option("--gap", cfg.corpus.gap, "Planted class gap")->capture_default_str();
    c->add_flag("--negations", cfg.corpus.negations, "Also emit negated statements");
    c->add_option("--calib-samples", cfg.calib_samples, "Calibration sequences")->capture_default_str();
    c->add_option("--calib-len", cfg.calib_len, "Calibration sequence length")->capture_default_str();
    c->add_option("--eval-samples", cfg.eval_samples, "Perplexity sequences")->capture_default_str();
    c->add_option("--eval-len", cfg.eval_len, "Perplexity sequence length")->capture_default_str();
    c->add_option("--holdout-seeds", cfg.holdout_seeds, "Probe evaluation seeds")->capture_default_str();
    c->add_option("--group", group, "Mask comparison group")->capture_default_str()->check(CLI::IsMember(kGroups));
  }

  ToyPipelineConfig resolved(const Globals& g) const {
    auto c = cfg;
    c.seed = g.seed;
    c.method = kMethods.at(method_name);
    c.group = kGroups.at(group);
    return c;
  }
};

struct ToyE2eCmd final : Command {
  ToyOptions toy;
  std::string out;

  explicit ToyE2eCmd(CLI::App& app) {
    auto* c = app.add_subcommand("toy-e2e", "Plant, measure, allocate, prune and evaluate on the toy model");
    toy.add(c);
    c->add_option("--out", out, "Report directory");
  }

  json config(const Globals& g) const override {
    auto j = toy_config_to_json(toy.resolved(g));
    j["out"] = out;
    return j;
  }

  int run(const Globals& g) override {
    const auto bundle = run_toy_pipeline(toy.resolved(g), g.jobs);
    const auto j = bundle_to_json(bundle);
    const std::string report = j.dump(2) + "\n";
    if (!out.empty()) emit_report(bundle, out);
    std::cout << pretty({{"input_hash", j.at("input_hash")}, {"report_sha256", sha256_hex(report)}, {"out", out}});
    return 0;
  }
};

struct ToyExportCmd final : Command {
  ToyOptions toy;
  std::string out_dir;

  explicit ToyExportCmd(CLI::App& app) {
    auto* c = app.add_subcommand("toy-export", "Write a planted toy model and its activations as .tpl archives");
    toy.add(c);
    c->add_option("--out-dir", out_dir, "Directory for model.tpl and acts.tpl")->required();
  }

  json config(const Globals& g) const override {
    auto j = toy_config_to_json(toy.resolved(g));
    j["out_dir"] = out_dir;
    return j;
  }

  int run(const Globals& g) override {
    const auto t = make_toy_setup(toy.resolved(g), g.jobs);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const std::string id = "toy-seed" + std::to_string(g.seed);

    auto a = model_to_archive(t.model, id);
    const auto norms = calibration_norms(t.model, t.calib, g.jobs);
    for (std::size_t l = 0; l < norms.size(); ++l)
      for (Proj p : kAllProjections) {
        const auto name = col_norms_name(weight_tensor_name(l, p));
        a.records.push_back(make_record(name, norms[l][static_cast<std::size_t>(p)]));
        a.manifest.entries.push_back({name, TensorRole::col_norms, static_cast<std::uint32_t>(l)});
      }
    const auto model_path = fs::path(out_dir) / "model.tpl", acts_path = fs::path(out_dir) / "acts.tpl";
    save_archive(model_path, a);
    save_activations(acts_path, t.dense, id);
    std::cout << pretty({{"model", model_path.string()},
                         {"acts", acts_path.string()},
                         {"layers", t.cfg.model.num_layers},
                         {"dense_argmax_layer", t.dense_sep.argmax_layer}});
    return 0;
  }
};

struct VerifyCmd final : Command {
  std::string archive;
  bool activations = false;

  explicit VerifyCmd(CLI::App& app) {
    auto* c = app.add_subcommand("verify", "Validate an exported .tpl archive and print its manifest");
    c->add_option("--archive", archive, "Archive path")->required()->check(CLI::ExistingFile);
    c->add_flag("--activations", activations, "Also load it as an activation dataset with its sidecar");
  }

  json config(const Globals&) const override { return {{"archive", archive}, {"activations", activations}}; }

  int run(const Globals&) override {
    const auto a = load_archive(archive);
    json tensors = json::array();
    for (const auto& r : a.records) tensors.push_back({{"name", r.name}, {"shape", r.shape}});
    json j{{"manifest", manifest_to_json(a.manifest)}, {"tensors", tensors}};
    if (activations) {
      const auto ds = load_activations(archive);
      j["rows"] = ds.rows();
      j["topics"] = ds.topic_names();
    }
    std::cout << pretty(j);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truthfulness-preserving pruning toolkit"};
  app.name("tplo");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("--print-config", g.print_config, "Print the resolved configuration and exit");
  app.add_option("--jobs", g.jobs, "Worker threads (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::vector<std::pair<std::string, std::unique_ptr<Command>>> cmds;
  cmds.emplace_back("lsd", std::make_unique<LsdCmd>(app));
  cmds.emplace_back("outliers", std::make_unique<OutliersCmd>(app));
  cmds.emplace_back("allocate", std::make_unique<AllocateCmd>(app));
  cmds.emplace_back("prune", std::make_unique<PruneCmd>(app));
  cmds.emplace_back("probe", std::make_unique<ProbeCmd>(app));
  cmds.emplace_back("mc-score", std::make_unique<McScoreCmd>(app));
  cmds.emplace_back("enrich", std::make_unique<EnrichCmd>(app));
  cmds.emplace_back("toy-e2e", std::make_unique<ToyE2eCmd>(app));
  cmds.emplace_back("toy-export", std::make_unique<ToyExportCmd>(app));
  cmds.emplace_back("verify", std::make_unique<VerifyCmd>(app));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto& [name, cmd] : cmds) {
      if (!app.got_subcommand(name)) continue;
      if (g.print_config) {
        std::cout << pretty({{"subcommand", name}, {"seed", g.seed}, {"jobs", g.jobs}, {"options", cmd->config(g)}});
        return 0;
      }
      return cmd->run(g);
    }
  } catch (const Error& e) {
    std::cerr << "ERROR " << e.what() << "\n";
    return e.code() == ErrorCode::UsageError ? 2 : 1;
  } catch (const json::exception& e) {
    std::cerr << "ERROR " << code_name(ErrorCode::SchemaError) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR Internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
