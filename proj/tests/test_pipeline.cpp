#include <gtest/gtest.h>

#include "tplo/pipeline.hpp"

using namespace tplo;

namespace {

ToyPipelineConfig small(std::uint64_t seed = 3) {
  ToyPipelineConfig c;
  c.seed = seed;
  c.model.num_layers = 4;
  c.model.d_model = 32;
  c.model.heads = 2;
  c.model.vocab = 256;
  c.corpus.n_per_topic = 16;
  c.corpus.d_signal = 8;
  c.calib_samples = 6;
  c.calib_len = 32;
  c.eval_samples = 4;
  c.eval_len = 24;
  c.holdout_seeds = 2;
  return c;
}

}  // namespace

TEST(Pipeline, BundleShape) {
  const auto cfg = small();
  const auto b = run_toy_pipeline(cfg);
  ASSERT_EQ(b.perplexities.size(), 2u);
  EXPECT_EQ(b.perplexities[0].method, "dense");
  EXPECT_EQ(b.perplexities[1].method, "tplo");
  EXPECT_GT(b.perplexities[0].perplexity, 1.0);
  EXPECT_EQ(b.lsd.size(), 2u * cfg.model.num_layers);
  ASSERT_EQ(b.profiles.size(), 3u);
  EXPECT_EQ(b.profiles[2].name, "tplo");
  EXPECT_NEAR(b.profiles[2].profile.mean(), 0.5, 1e-6);
  ASSERT_EQ(b.probes.size(), 2u);
  EXPECT_EQ(b.probes[0].rows.size(), cfg.holdout_seeds * cfg.corpus.topics);
  EXPECT_EQ(b.config.at("prefix_k"), scaled_prefix(cfg.model.num_layers));
  EXPECT_LT(b.config.at("resolved_probe_layer").get<std::uint32_t>(), cfg.model.num_layers);
}

TEST(Pipeline, SameSeedSameBundle) {
  const auto a = bundle_to_json(run_toy_pipeline(small(), 1));
  const auto b = bundle_to_json(run_toy_pipeline(small(), 3));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_NE(a.at("input_hash"), bundle_to_json(run_toy_pipeline(small(4))).at("input_hash"));
}

TEST(Pipeline, ZeroSparsityLeavesModelUnchanged) {
  auto cfg = small();
  cfg.sparsity = 0.0;
  cfg.method = AllocationMethod::uniform;
  const auto b = run_toy_pipeline(cfg);
  EXPECT_EQ(b.perplexities[0].perplexity, b.perplexities[1].perplexity);
  for (std::size_t l = 0; l < cfg.model.num_layers; ++l) EXPECT_EQ(b.lsd[l].lsd, b.lsd[l + cfg.model.num_layers].lsd);
}

TEST(Pipeline, ConfigValidation) {
  auto cfg = small();
  cfg.calib_samples = 0;
  EXPECT_THROW(make_toy_setup(cfg), Error);
  cfg = small();
  cfg.probe_layer = 9;
  EXPECT_THROW(make_toy_setup(cfg), Error);
}
