// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "partgen/generator_training.hpp"
#include "test_support.hpp"

namespace partgen {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / (std::string("partgen_") + info->test_suite_name() + "_" + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

GeneratorTrainConfig micro_train(std::uint64_t seed = 3) {
  GeneratorTrainConfig c;
  c.model = testing::micro_generator_config();
  c.seed = seed;
  c.steps = 6;
  c.batch_size = 3;
  c.learning_rate = 1e-3;
  c.val_interval = 3;
  c.val_draws = 2;
  return c;
}

class TrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { ds_ = new Dataset(testing::small_dataset(31, 8, 2, 1)); }
  static void TearDownTestSuite() {
    delete ds_;
    ds_ = nullptr;
  }
  static Dataset* ds_;
};

Dataset* TrainingTest::ds_ = nullptr;

TEST(TeacherForcing, DrawsCoverEveryPrefixLength) {
  Rng rng(1);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const PrefixDraw d = draw_teacher_forcing(4, rng);
    ASSERT_EQ(d.permutation.size(), 4u);
    ++counts[d.prefix];
  }
  for (int c : counts) EXPECT_NEAR(c / 5000.0, 0.2, 5 * std::sqrt(0.2 * 0.8 / 5000));
}

TEST(TrainConfig, RejectsInvalidValues) {
  GeneratorTrainConfig c = micro_train();
  EXPECT_NO_THROW(c.validate());
  c.scheduled_sampling_ratio = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = micro_train();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST_F(TrainingTest, ZeroMixRatioIsPlainTeacherForcing) {
  GeneratorTrainConfig c = micro_train();
  c.scheduled_sampling_ratio = 0.0;
  GeneratorTrainer trainer(*ds_, c);

  // A hand-written teacher-forcing loop over an identically initialized model.
  PartGenerator manual(trainer.model().config(), trainer.model().context(), mix_seed(c.seed, kInitStream));
  nn::AdamOptions o;
  o.learning_rate = c.learning_rate;
  o.weight_decay = c.weight_decay;
  nn::Adam adam(manual.parameters(), o);
  Rng data(mix_seed(c.seed, kDataStream));
  const auto& records = trainer.train_records();

  for (std::size_t s = 0; s < c.steps; ++s) {
    trainer.step();
    for (std::size_t b = 0; b < c.batch_size; ++b) {
      const ObjectRecord& r = *records[dist::uniform_index(data, records.size())];
      ad::Tape t;
      t.backward(ad::scale(teacher_forcing_loss(manual, t, r, {}, data), 1.0 / static_cast<double>(c.batch_size)));
    }
    adam.step();
    ASSERT_EQ(trainer.model().parameters().values(), manual.parameters().values()) << "step " << s;
  }
  EXPECT_EQ(trainer.counters().scheduled_terms, 0u);
  EXPECT_EQ(trainer.counters().ss_steps, 0u);
  EXPECT_EQ(trainer.counters().teacher_forcing_terms, c.steps * c.batch_size);
}

TEST_F(TrainingTest, FullMixRatioSamplesExactlyOneContextToken) {
  GeneratorTrainConfig c = micro_train();
  c.scheduled_sampling_ratio = 1.0;
  GeneratorTrainer trainer(*ds_, c);
  for (int s = 0; s < 4; ++s) EXPECT_EQ(trainer.step().kind, "ss");
  const StepCounters& k = trainer.counters();
  EXPECT_EQ(k.ss_steps, 4u);
  EXPECT_EQ(k.tf_steps, 0u);
  // Every generated record has several parts, so no step falls back.
  EXPECT_EQ(k.scheduled_fallbacks, 0u);
  EXPECT_EQ(k.scheduled_terms, 4u * c.batch_size);
  EXPECT_EQ(k.sampled_tokens, k.scheduled_terms);
  EXPECT_EQ(k.contexts_with_one_sampled, k.scheduled_terms);
}

TEST(ScheduledSampling, SinglePartRecordsFallBack) {
  Part p;
  p.label = labels::kTop;
  p.size = {1.0, 0.1, 0.5};
  p.rotation = identity_rot6d();
  ObjectRecord r;
  r.id = "slab";
  r.category = Category::kTable;
  r.parts = {p};
  r.bbox = tight_bbox(r.parts);
  const Dataset ds = testing::dataset_from_records({r}, 1);
  PartGenerator g(testing::micro_generator_config(), GeneratorContext::from_manifest(ds.manifest), 1);
  Rng rng(2);
  StepCounters k;
  ad::Tape t;
  EXPECT_FALSE(scheduled_sampling_loss(g, t, r, {}, rng, &k).has_value());
  EXPECT_EQ(k.scheduled_fallbacks, 1u);
}

TEST_F(TrainingTest, CheckpointRoundTripsExactly) {
  const fs::path dir = scratch_dir();
  GeneratorTrainer trainer(*ds_, micro_train());
  trainer.step();
  const GeneratorCheckpoint a = trainer.snapshot();
  save_generator_checkpoint(dir / "a.ckpt", a);
  const GeneratorCheckpoint b = load_generator_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(b.parameters, a.parameters);
  EXPECT_EQ(b.optimizer, a.optimizer);
  EXPECT_EQ(b.step, a.step);
  EXPECT_EQ(b.manifest_hash, a.manifest_hash);
  EXPECT_EQ(b.data_rng, a.data_rng);
  const auto g = instantiate_generator(b);
  EXPECT_EQ(g->parameters().values(), a.parameters);
  const ObjectRecord& r = *ds_->split("train")[0];
  ad::Tape t1(false), t2(false);
  EXPECT_EQ(g->features(t1, r.bbox, r.parts).value(), trainer.model().features(t2, r.bbox, r.parts).value());
}

TEST_F(TrainingTest, CorruptCheckpointIsRejected) {
  const fs::path dir = scratch_dir();
  GeneratorTrainer trainer(*ds_, micro_train());
  save_generator_checkpoint(dir / "a.ckpt", trainer.snapshot());
  fs::resize_file(dir / "a.ckpt", fs::file_size(dir / "a.ckpt") / 2);
  EXPECT_THROW(load_generator_checkpoint(dir / "a.ckpt"), CheckpointError);
}

TEST_F(TrainingTest, ResumedRunMatchesContinuousRun) {
  const fs::path dir = scratch_dir();
  GeneratorTrainer continuous(*ds_, micro_train());
  continuous.run(dir / "continuous");

  GeneratorTrainConfig half = micro_train();
  half.steps = 3;
  GeneratorTrainer first(*ds_, half);
  first.run(dir / "resumed");
  GeneratorTrainer second(*ds_, micro_train());
  second.resume(load_generator_checkpoint(dir / "resumed" / "last.ckpt"));
  second.run(dir / "resumed");

  EXPECT_EQ(second.snapshot().parameters, continuous.snapshot().parameters);
  EXPECT_EQ(second.snapshot().optimizer, continuous.snapshot().optimizer);
  EXPECT_TRUE(fs::exists(dir / "resumed" / "best.ckpt"));
}

TEST_F(TrainingTest, ResumePastTheBestStepKeepsTheBestWeights) {
  const fs::path dir = scratch_dir();
  GeneratorTrainer trainer(*ds_, micro_train());
  trainer.step();
  GeneratorCheckpoint best = trainer.snapshot();
  best.best_step = 1;
  save_generator_checkpoint(dir / "best.ckpt", best);
  trainer.step();
  trainer.step();
  GeneratorCheckpoint last = trainer.snapshot();
  last.best_step = 1;
  last.best_val = -1e300;  // no later validation can beat it

  GeneratorTrainConfig more = micro_train();
  more.steps = 4;
  GeneratorTrainer resumed(*ds_, more);
  resumed.resume(last);
  const GeneratorCheckpoint got = resumed.run(dir);
  EXPECT_EQ(got.step, 1u);
  EXPECT_EQ(got.parameters, best.parameters);

  GeneratorTrainer detached(*ds_, more);
  detached.resume(last);
  const GeneratorCheckpoint current = detached.run();
  EXPECT_EQ(current.step, 4u);
  EXPECT_EQ(current.parameters, detached.snapshot().parameters);
}

TEST_F(TrainingTest, ResumeOnAnotherManifestIsRefused) {
  GeneratorTrainer trainer(*ds_, micro_train());
  const GeneratorCheckpoint ckpt = trainer.snapshot();
  const Dataset other = testing::small_dataset(32, 8, 2, 1);
  GeneratorTrainer elsewhere(other, micro_train());
  EXPECT_THROW(elsewhere.resume(ckpt), ManifestMismatch);
}

TEST_F(TrainingTest, NonFiniteLossIsReported) {
  GeneratorTrainer trainer(*ds_, micro_train());
  std::vector<double> v = trainer.model().parameters().values();
  for (double& x : v) x = std::numeric_limits<double>::quiet_NaN();
  trainer.model().parameters().set_values(v);
  try {
    trainer.step();
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST_F(TrainingTest, ValidationIsRepeatable) {
  GeneratorTrainer trainer(*ds_, micro_train());
  EXPECT_EQ(trainer.validate(), trainer.validate());
  EXPECT_TRUE(std::isfinite(trainer.validate()));
}

TEST_F(TrainingTest, TeacherForcingLossEstimatesTheExhaustiveMean) {
  // A three-part record: 3! orderings times 4 prefix lengths.
  const ObjectRecord* small = nullptr;
  for (const ObjectRecord* r : ds_->split("train")) {
    if (small == nullptr || r->parts.size() < small->parts.size()) small = r;
  }
  ObjectRecord r = *small;
  r.parts.resize(3);
  PartGenerator g(testing::micro_generator_config(), GeneratorContext::from_manifest(ds_->manifest), 5);
  const double exact = testing::exhaustive_tf_loss(g, r);
  Rng rng(6);
  const int n = 4000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    ad::Tape t(false);
    const double v = teacher_forcing_loss(g, t, r, {}, rng).scalar();
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, exact, 4 * sd);
}

TEST(TrainLog, LinesUseFullPrecision) {
  TrainLogEntry e;
  e.step = 7;
  e.loss = 0.1;
  e.kind = "tf";
  EXPECT_EQ(log_line(e), "{\"step\":7,\"loss\":0.10000000000000001,\"kind\":\"tf\"}");
}

}  // namespace
}  // namespace partgen
