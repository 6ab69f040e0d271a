#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/oracles.hpp"
#include "tplo/metrics.hpp"

using namespace tplo;
namespace fs = std::filesystem;

namespace {

MCInstance from_probs(const std::vector<std::pair<double, bool>>& cands, std::size_t best) {
  MCInstance q{"q", {}};
  for (std::size_t i = 0; i < cands.size(); ++i)
    q.candidates.push_back({std::log(cands[i].first), cands[i].second, i == best});
  return q;
}

MCInstance random_instance(CounterRng& rng) {
  MCInstance q{"r", {}};
  const auto correct = 1 + rng.below(4), incorrect = 1 + rng.below(4);
  for (std::uint64_t i = 0; i < correct + incorrect; ++i) {
    // Small integer log-probs make exact ties common.
    const double lp = rng.below(2) ? -static_cast<double>(rng.below(5)) : -5.0 * rng.uniform();
    q.candidates.push_back({lp, i < correct, i == 0});
  }
  rng.shuffle(std::span<McCandidate>(q.candidates));
  return q;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ReportBundle sample_bundle() {
  ReportBundle b;
  b.config = {{"seed", 3}, {"note", "a,b"}};
  EvalReport r;
  r.rows = {{"dense", ProbeKind::LR, "cities", 4, 3, 0.75}, {"dense", ProbeKind::LR, "facts", 4, 3, 0.5}};
  r.topics = {{"cities", 0.75, 0.0}, {"facts", 0.5, 0.0}};
  r.pooled = {"average", 0.625, 0.0};
  b.probes.push_back(r);
  b.profiles.push_back({"uniform", uniform_profile(3, 0.5)});
  b.perplexities.push_back({"dense", 0.0, 3, 301.25});
  b.lsd.push_back({"dense", 0.0, 3, 0, 0.125});
  b.mc.push_back({"dense", {0.5, 0.25, 0.0}});
  b.judge.push_back({"dense", 0.5, 0.75, 0.375});
  return b;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(McScores, DominantBest) {
  const std::vector<MCInstance> qs{from_probs({{0.9, true}, {0.05, false}, {0.05, false}}, 0)};
  const auto s = mc_scores(qs);
  EXPECT_EQ(s.mc1, 1.0);
  EXPECT_EQ(s.mc2, 1.0);
  EXPECT_EQ(s.mc3, 1.0);
}

TEST(McScores, EqualMassIsAMiss) {
  const std::vector<MCInstance> qs{from_probs({{0.3, true}, {0.2, true}, {0.4, false}, {0.1, false}}, 0)};
  const auto s = mc_scores(qs);
  EXPECT_EQ(s.mc1, 0.0);
  EXPECT_EQ(s.mc2, 0.0);
  EXPECT_EQ(s.mc3, 0.0);
  EXPECT_NEAR(mc_scores(qs, Mc2Mode::mean_mass).mc2, 0.5, 1e-12);
}

TEST(McScores, TieOnBestIsAMiss) {
  const std::vector<MCInstance> qs{from_probs({{0.4, true}, {0.4, false}, {0.2, false}}, 0)};
  EXPECT_EQ(mc_scores(qs).mc1, 0.0);
}

TEST(McScores, OrderInvariant) {
  CounterRng rng(11, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MCInstance> qs{random_instance(rng), random_instance(rng)};
    const auto a = mc_scores(qs);
    for (auto& q : qs) rng.shuffle(std::span<McCandidate>(q.candidates));
    const auto b = mc_scores(qs);
    EXPECT_EQ(a.mc1, b.mc1);
    EXPECT_EQ(a.mc2, b.mc2);
    EXPECT_EQ(a.mc3, b.mc3);
  }
}

TEST(McScores, MatchesOracleAndStaysInRange) {
  CounterRng rng(12, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MCInstance> qs;
    for (std::uint64_t i = 0, n = 1 + rng.below(5); i < n; ++i) qs.push_back(random_instance(rng));
    const auto s = mc_scores(qs);
    const auto o = oracle::mc_scores(qs);
    EXPECT_EQ(s.mc1, o.mc1);
    EXPECT_EQ(s.mc2, o.mc2);
    EXPECT_EQ(s.mc3, o.mc3);
    for (double v : {s.mc1, s.mc2, s.mc3}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(McScores, Validation) {
  EXPECT_THROW(mc_scores(std::vector<MCInstance>{}), Error);
  auto q = from_probs({{0.5, true}, {0.5, true}}, 0);
  EXPECT_THROW(mc_scores(std::vector<MCInstance>{q}), Error);  // no incorrect answer
  q = from_probs({{0.5, true}, {0.5, false}}, 1);
  EXPECT_THROW(mc_scores(std::vector<MCInstance>{q}), Error);  // best answer is incorrect
  q = from_probs({{0.5, true}, {0.5, false}}, 0);
  q.candidates[1].log_prob = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(mc_scores(std::vector<MCInstance>{q}), Error);
}

TEST(McScores, JsonlLoading) {
  const auto path = fs::temp_directory_path() / "tplo_mc.jsonl";
  std::ofstream(path) << R"({"question_id":"a","candidates":[{"log_prob":-0.1,"is_correct":true,"is_best":true},{"log_prob":-3,"is_correct":false}]})"
                      << "\n\n";
  const auto qs = load_mc_instances(path);
  ASSERT_EQ(qs.size(), 1u);
  EXPECT_EQ(mc_scores(qs).mc1, 1.0);
  std::ofstream(path) << R"({"question_id":"a"})" << "\n";
  EXPECT_THROW(load_mc_instances(path), Error);
  fs::remove(path);
}

TEST(Report, EmptyProbeSectionGivesHeaderOnly) {
  auto b = sample_bundle();
  b.probes.clear();
  const auto dir = temp_dir("tplo_report_empty");
  emit_report(b, dir);
  EXPECT_EQ(slurp(dir / "probes.csv"), std::string(kEvalCsvHeader) + "\n");
  fs::remove_all(dir);
}

TEST(Report, EmptyBundleRejected) { EXPECT_THROW(emit_report(ReportBundle{}, temp_dir("tplo_report_none")), Error); }

TEST(Report, ByteIdenticalAcrossRuns) {
  const auto a = temp_dir("tplo_report_a"), b = temp_dir("tplo_report_b");
  const auto fa = emit_report(sample_bundle(), a);
  const auto fb = emit_report(sample_bundle(), b);
  ASSERT_EQ(fa.size(), 7u);
  for (std::size_t i = 0; i < fa.size(); ++i) {
    EXPECT_EQ(fa[i].filename(), fb[i].filename());
    EXPECT_EQ(slurp(fa[i]), slurp(fb[i]));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Report, CsvColumnsAndQuoting) {
  auto b = sample_bundle();
  b.perplexities.push_back({"odd,\"name\"", 0.5, 3, 2.0});
  const auto dir = temp_dir("tplo_report_csv");
  emit_report(b, dir);
  EXPECT_EQ(slurp(dir / "perplexity.csv"), "method,sparsity,seed,perplexity\ndense,0.0,3,301.25\n\"odd,\"\"name\"\"\",0.5,3,2.0\n");
  EXPECT_EQ(slurp(dir / "probes.csv"), "method,probe,topic,layer,seed,accuracy\ndense,lr,cities,4,3,0.75\ndense,lr,facts,4,3,0.5\n");
  fs::remove_all(dir);
}

TEST(Report, JsonRoundTrip) {
  const auto dir = temp_dir("tplo_report_rt");
  const auto b = sample_bundle();
  emit_report(b, dir);
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  const auto back = bundle_from_json(j);
  EXPECT_EQ(bundle_to_json(back), bundle_to_json(b));
  EXPECT_EQ(back.probes, b.probes);
  EXPECT_EQ(back.perplexities, b.perplexities);
  EXPECT_EQ(back.lsd, b.lsd);
  EXPECT_EQ(j.at("input_hash"), bundle_to_json(b).at("input_hash"));
  fs::remove_all(dir);
}

TEST(Report, HashTracksContent) {
  auto b = sample_bundle();
  const auto h1 = bundle_to_json(b).at("input_hash");
  b.perplexities[0].perplexity += 1.0;
  EXPECT_NE(bundle_to_json(b).at("input_hash"), h1);
}

TEST(Report, UnwritablePathIsIOError) {
  try {
    emit_report(sample_bundle(), "/proc/tplo_cannot_write_here");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IOError);
  }
}

TEST(Report, JudgeVerdictIngestion) {
  const auto path = fs::temp_directory_path() / "tplo_judge.jsonl";
  std::ofstream(path) << R"({"method":"m","question_id":"1","truthful":true,"informative":true})" << "\n"
                      << R"({"method":"m","question_id":"2","truthful":false,"informative":true})" << "\n";
  const auto rows = ingest_judge_verdicts(path);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].truth, 0.5);
  EXPECT_DOUBLE_EQ(rows[0].info, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].truth_x_info, 0.5);
  fs::remove(path);
}
