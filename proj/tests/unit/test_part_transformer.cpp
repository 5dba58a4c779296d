// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "partgen/generator_training.hpp"
#include "partgen/part_transformer.hpp"
#include "test_support.hpp"

namespace partgen {
namespace {

class GeneratorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { ds_ = new Dataset(testing::small_dataset(21, 12, 2, 2)); }
  static void TearDownTestSuite() {
    delete ds_;
    ds_ = nullptr;
  }

  std::unique_ptr<PartGenerator> make(GeneratorConfig c = testing::micro_generator_config(), std::uint64_t seed = 1) {
    return std::make_unique<PartGenerator>(c, GeneratorContext::from_manifest(ds_->manifest), seed);
  }
  const ObjectRecord& record(std::size_t i) const { return *ds_->split("train")[i]; }

  static Dataset* ds_;
};

Dataset* GeneratorTest::ds_ = nullptr;

TEST(PositionalEncoding, MatchesClosedForm) {
  const std::vector<double> x = {0.3, -0.8};
  const int L = 5;
  const std::vector<double> g = positional_encode(x, L);
  ASSERT_EQ(g.size(), 2u * 2u * L);
  for (std::size_t d = 0; d < x.size(); ++d) {
    for (int l = 0; l < L; ++l) {
      const double a = std::pow(2.0, l) * std::numbers::pi * x[d];
      EXPECT_NEAR(g[d * 2 * L + 2 * l], std::sin(a), 1e-12);
      EXPECT_NEAR(g[d * 2 * L + 2 * l + 1], std::cos(a), 1e-12);
    }
  }
}

TEST(PositionalEncoding, HasPeriodTwoAndAttributesAreHalved) {
  const std::vector<double> x = {0.375}, shifted = {2.375};
  EXPECT_EQ(positional_encode(x, 8), positional_encode(shifted, 8));
  // The ends of [-1, 1] get distinct codes once scaled by one half.
  const std::vector<double> lo = {-1.0}, hi = {1.0};
  std::vector<double> a(16), b(16);
  encode_attribute(lo, 8, a.data());
  encode_attribute(hi, 8, b.data());
  EXPECT_NE(a, b);
  const std::vector<double> half = {-0.5};
  EXPECT_EQ(a, positional_encode(half, 8));
}

TEST(GeneratorConfigTest, RejectsInvalidWidths) {
  GeneratorConfig c = testing::micro_generator_config();
  EXPECT_NO_THROW(c.validate());
  c.qkv_dim = 7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = testing::micro_generator_config();
  c.layers = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST_F(GeneratorTest, FeaturesAreInvariantToPartOrder) {
  const auto g = make();
  Rng rng(2);
  const ObjectRecord& r = record(0);
  ad::Tape t0(false);
  const ad::Matrix base = g->features(t0, r.bbox, r.parts).value();
  for (int trial = 0; trial < 20; ++trial) {
    const auto perm = dist::random_permutation(r.parts.size(), rng);
    std::vector<Part> shuffled;
    for (std::size_t i : perm) shuffled.push_back(r.parts[i]);
    ad::Tape t(false);
    EXPECT_LE((g->features(t, r.bbox, shuffled).value() - base).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST_F(GeneratorTest, NextPartNllMatchesDecodedTerms) {
  const auto g = make();
  const ObjectRecord& r = record(1);
  ad::Tape t(false);
  const ad::Var F = g->features(t, r.bbox, std::span<const Part>(r.parts).first(2));
  const HeadTerms terms = g->decode(t, F, &r.parts[2]);
  const double sum = terms.label.scalar() + terms.translation_coarse.scalar() + terms.translation_fine.scalar() +
                     terms.rotation_coarse.scalar() + terms.rotation_fine.scalar() + terms.size_coarse.scalar() +
                     terms.size_fine.scalar();
  EXPECT_NEAR(terms.total.scalar(), sum, 1e-10);
  EXPECT_NEAR(g->next_part_nll(F.value(), &r.parts[2]), sum, 1e-10);
  // END: only the label term, equal to -log p(END).
  EXPECT_NEAR(g->next_part_nll(F.value(), nullptr), -std::log(g->end_probability(F.value())), 1e-10);
}

TEST_F(GeneratorTest, GradientMatchesFiniteDifferences) {
  const auto g = make();
  Rng rng(3);
  for (int trial = 0; trial < 4; ++trial) {
    const ObjectRecord& r = record(static_cast<std::size_t>(trial));
    const PrefixDraw draw = draw_teacher_forcing(r.parts.size(), rng);
    auto loss = [&] {
      ad::Tape t(false);
      return prefix_loss(*g, t, r, draw, {}).scalar();
    };
    auto gradient = [&] {
      g->parameters().zero_grad();
      ad::Tape t(true);
      t.backward(prefix_loss(*g, t, r, draw, {}));
      return g->parameters().grads();
    };
    const testing::GradCheck c = testing::gradient_check(g->parameters(), loss, gradient, rng);
    EXPECT_LE(c.relative_error, 1e-4) << "trial " << trial;
    EXPECT_LE(c.directional_error, 1e-4) << "trial " << trial;
  }
}

TEST_F(GeneratorTest, SamplingKeepsThePrefixVerbatim) {
  const auto g = make();
  const ObjectRecord& r = record(2);
  const std::vector<Part> prefix(r.parts.begin(), r.parts.begin() + 3);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const SampledSequence out = sample_sequence(*g, r.bbox, prefix, {}, rng, 12);
    ASSERT_GE(out.parts.size(), prefix.size());
    for (std::size_t i = 0; i < prefix.size(); ++i) EXPECT_EQ(out.parts[i], prefix[i]);
    EXPECT_LE(out.parts.size(), 12u);
  }
}

TEST_F(GeneratorTest, SamplingIsDeterministicPerSeed) {
  const auto g = make();
  const ObjectRecord& r = record(3);
  Rng a(5), b(5);
  const SampledSequence x = sample_sequence(*g, r.bbox, {}, {}, a, 8);
  const SampledSequence y = sample_sequence(*g, r.bbox, {}, {}, b, 8);
  EXPECT_EQ(x.parts, y.parts);
  EXPECT_EQ(x.truncated, y.truncated);
}

TEST_F(GeneratorTest, CapTruncatesWhenEndIsMasked) {
  const auto g = make();
  const ObjectRecord& r = record(0);
  SampleOptions no_end;
  no_end.allow_end = false;
  Rng rng(6);
  const SampledSequence out = sample_sequence(*g, r.bbox, {}, {}, rng, 4, no_end);
  EXPECT_EQ(out.parts.size(), 4u);
  EXPECT_TRUE(out.truncated);
}

TEST_F(GeneratorTest, MaskedEndIsNeverSampled) {
  const auto g = make();
  const ObjectRecord& r = record(0);
  ad::Tape t(false);
  const ad::Matrix F = g->features(t, r.bbox, r.parts).value();
  SampleOptions no_end;
  no_end.allow_end = false;
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const std::optional<Part> p = g->sample_next_part(F, rng, no_end);
    ASSERT_TRUE(p.has_value());
    EXPECT_GE(p->label, 0);
    EXPECT_LT(p->label, g->end_label());
    for (double s : p->size) EXPECT_GT(s, 0.0);
  }
}

TEST_F(GeneratorTest, ClusterCountFollowsTheCodebooks) {
  GeneratorConfig c = testing::micro_generator_config();
  c.clusters = 99;
  const auto g = make(c);
  EXPECT_EQ(g->config().clusters, ds_->manifest.codebooks.translation.size());
}

TEST_F(GeneratorTest, ConditionedGeneratorUsesTheText) {
  GeneratorConfig c = testing::micro_generator_config();
  c.condition = "bow";
  c.condition_dim = 16;
  const auto g = make(c);
  const ObjectRecord& r = record(0);
  const std::vector<double> a = g->condition_vector("A chair with four leg");
  const std::vector<double> b = g->condition_vector("A lamp with one shade");
  ASSERT_EQ(a.size(), 16u);
  ad::Tape t(false);
  const ad::Matrix fa = g->features(t, r.bbox, r.parts, a).value();
  const ad::Matrix fb = g->features(t, r.bbox, r.parts, b).value();
  EXPECT_GT((fa - fb).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(make()->condition_vector("anything").empty());
}

}  // namespace
}  // namespace partgen
