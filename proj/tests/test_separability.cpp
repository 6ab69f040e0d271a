#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "tplo/separability.hpp"

using namespace tplo;

namespace {

MatrixD gaussian(CounterRng& rng, std::size_t n, std::size_t d, double shift) {
  MatrixD m(n, d);
  for (auto& v : m.data()) v = rng.normal() + shift;
  return m;
}

}  // namespace

TEST(VarianceRatio, OneDimensionalExample) {
  const auto r = variance_ratio(MatrixD{{1}, {3}}, MatrixD{{5}, {7}});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_NEAR(r[0], 4.0, 4e-9);  // the within-variance floor shifts it by ~1e-12
}

TEST(VarianceRatio, IdenticalClassesGiveZero) {
  const MatrixD x{{1, 2}, {3, -1}, {0, 0}};
  for (double v : variance_ratio(x, x)) EXPECT_EQ(v, 0.0);
}

TEST(VarianceRatio, ConstantDimensionIsFinite) {
  const auto r = variance_ratio(MatrixD{{1, 0}, {1, 1}}, MatrixD{{1, 5}, {1, 6}});
  EXPECT_EQ(r[0], 0.0);
  EXPECT_GT(r[1], 0.0);
}

TEST(VarianceRatio, TooFewRows) {
  try {
    variance_ratio(MatrixD{{1}}, MatrixD{{5}, {7}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientSamples);
  }
}

TEST(VarianceRatio, MatchesOracleOnRandomInputs) {
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    const auto t = gaussian(rng, 2 + rng.below(20), d, rng.normal());
    const auto f = gaussian(rng, 2 + rng.below(20), d, rng.normal());
    const auto got = variance_ratio(t, f);
    const auto want = oracle::variance_ratio(t, f);
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(got[j], want[j], 1e-9 * std::max(1.0, std::fabs(want[j])));
  }
}

TEST(VarianceRatio, PermutationAndTranslationInvariant) {
  CounterRng rng(6, 0);
  const auto t = gaussian(rng, 30, 4, 1.0);
  const auto f = gaussian(rng, 25, 4, -1.0);
  const auto base = variance_ratio(t, f);

  std::vector<std::size_t> idx(t.rows());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(std::span<std::size_t>(idx));
  const auto perm = variance_ratio(select_rows(t, idx), f);

  auto ts = t, fs = f;
  for (std::size_t i = 0; i < ts.rows(); ++i) ts(i, 2) += 100.0;
  for (std::size_t i = 0; i < fs.rows(); ++i) fs(i, 2) += 100.0;
  const auto shifted = variance_ratio(ts, fs);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(perm[j], base[j], 1e-12 * base[j]);
    EXPECT_NEAR(shifted[j], base[j], 1e-9 * base[j]);
  }
}

TEST(LsdProfile, CoincidingLayerIsZero) {
  ActivationDataset ds;
  ds.layers = {MatrixF{{1, 1}, {2, 2}, {1, 1}, {2, 2}}, MatrixF{{0, 0}, {0, 1}, {5, 5}, {5, 6}}};
  ds.labels = {1, 1, 0, 0};
  ds.topics.assign(4, "t");
  ds.polarity.assign(4, Polarity::affirmative);
  const auto p = lsd_profile(ds);
  EXPECT_EQ(p.lsd[0], 0.0);
  EXPECT_EQ(p.sep_pd[0], 0.0);
  EXPECT_DOUBLE_EQ(p.sep_pd[1], 1.0);
  EXPECT_EQ(p.argmax_layer, 1u);
}

TEST(LsdProfile, ArgmaxFindsTheSeparatedLayer) {
  auto ds = fixture::blobs(7, 400, 3, 0.0, 0);  // layer 0: no class gap
  const auto sep = fixture::blobs(8, 400, 3, 4.0, 3);
  ds.layers.push_back(sep.layers[0]);
  const auto p = lsd_profile(ds);
  EXPECT_EQ(p.argmax_layer, 1u);
  // Gap of 4 sd on every axis: between/within is about (4/2)^2 = 4.
  EXPECT_NEAR(p.lsd[1], 4.0, 0.6);
  EXPECT_LT(p.lsd[0], 0.05);
  EXPECT_NEAR(p.sep_pd[0] + p.sep_pd[1], 1.0, 1e-12);
}

TEST(LsdProfile, TopicFilter) {
  auto ds = fixture::blobs(9, 100, 2, 4.0, 2, {"a", "b"});
  const auto all = lsd_profile(ds);
  const auto a = lsd_profile(ds, "a");
  EXPECT_GT(all.lsd[0], 0.0);
  EXPECT_GT(a.lsd[0], 0.0);
  EXPECT_NE(all.lsd[0], a.lsd[0]);
}

TEST(LsdProfile, AllZeroNormalizesToUniform) {
  const auto pd = normalize_separability({0.0, 0.0, 0.0, 0.0});
  for (double v : pd) EXPECT_DOUBLE_EQ(v, 0.25);
}
