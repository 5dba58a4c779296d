// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "partgen/blending.hpp"
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

BlenderTrainConfig micro_train(std::uint64_t seed = 4) {
  BlenderTrainConfig c;
  c.model = testing::micro_blender_config();
  c.seed = seed;
  c.steps = 4;
  c.batch_size = 2;
  c.points = 64;
  c.learning_rate = 1e-3;
  c.val_interval = 2;
  c.occupancy = {512, 128};
  return c;
}

std::vector<Vec3> random_points(std::size_t n, Rng& rng) {
  std::vector<Vec3> q;
  for (std::size_t i = 0; i < n; ++i) {
    q.emplace_back(2 * dist::uniform01(rng) - 1, 2 * dist::uniform01(rng) - 1, 2 * dist::uniform01(rng) - 1);
  }
  return q;
}

class BlenderTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { ds_ = new Dataset(testing::small_dataset(41, 4, 1, 1)); }
  static void TearDownTestSuite() {
    delete ds_;
    ds_ = nullptr;
  }
  const ObjectRecord& record(std::size_t i) const { return *ds_->split("train")[i]; }
  std::vector<Part> normalized(std::size_t i) const { return normalized_parts(record(i).bbox, record(i).parts); }
  static Dataset* ds_;
};

Dataset* BlenderTest::ds_ = nullptr;

TEST(BlenderConfigTest, RejectsInvalidValues) {
  BlenderConfig c = testing::micro_blender_config();
  EXPECT_NO_THROW(c.validate());
  c.qkv_dim = 9;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = testing::micro_blender_config();
  c.iso = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST_F(BlenderTest, OccupancyIsAProbability) {
  const OccupancyNetwork net(testing::micro_blender_config(), 1);
  Rng rng(1);
  const auto q = random_points(500, rng);
  for (double p : net.occupancy(normalized(0), q)) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST_F(BlenderTest, QueriesAreIndependentOfTheirBatch) {
  const OccupancyNetwork net(testing::micro_blender_config(), 2);
  Rng rng(2);
  const auto q = random_points(40, rng);
  const auto parts = normalized(1);
  const std::vector<double> together = net.occupancy(parts, q);
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_NEAR(net.occupancy(parts, std::span<const Vec3>(&q[i], 1))[0], together[i], 1e-12);
  }
}

TEST_F(BlenderTest, OccupancyIsInvariantToPartOrder) {
  const OccupancyNetwork net(testing::micro_blender_config(), 3);
  Rng rng(3);
  const auto q = random_points(50, rng);
  std::vector<Part> parts = normalized(2);
  const std::vector<double> base = net.occupancy(parts, q);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Part> shuffled;
    for (std::size_t i : dist::random_permutation(parts.size(), rng)) shuffled.push_back(parts[i]);
    const std::vector<double> got = net.occupancy(shuffled, q);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(got[i], base[i], 1e-10);
  }
}

TEST_F(BlenderTest, EmptyPartListThrows) {
  const OccupancyNetwork net(testing::micro_blender_config(), 4);
  const std::vector<Vec3> q = {Vec3::Zero()};
  EXPECT_THROW(net.occupancy({}, q), std::invalid_argument);
}

TEST_F(BlenderTest, LossGradientMatchesFiniteDifferences) {
  OccupancyNetwork net(testing::micro_blender_config(), 5);
  Rng rng(5);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto parts = normalized(r);
    const OccupancySet pool = make_occupancy_pairs(record(r), rng, {256, 64});
    const std::vector<std::size_t> batch = sample_balanced(pool, 32, rng);
    auto loss = [&] {
      ad::Tape t(false);
      return blender_loss(net, t, parts, pool, batch).scalar();
    };
    auto gradient = [&] {
      net.parameters().zero_grad();
      ad::Tape t(true);
      t.backward(blender_loss(net, t, parts, pool, batch));
      return net.parameters().grads();
    };
    const testing::GradCheck c = testing::gradient_check(net.parameters(), loss, gradient, rng);
    EXPECT_LE(c.relative_error, 1e-4) << "record " << r;
    EXPECT_LE(c.directional_error, 1e-4) << "record " << r;
  }
}

TEST(MeshFromGrid, ConstantGridsGiveEmptyMeshes) {
  ScalarGrid g;
  g.n = 9;
  g.values.assign(9 * 9 * 9, 0.0f);
  BoundingBox b;
  b.size = {1, 1, 1};
  b.rotation = identity_rot6d();
  EXPECT_TRUE(mesh_from_grid(g, b, 0.5).empty());
  g.values.assign(9 * 9 * 9, 1.0f);
  EXPECT_TRUE(mesh_from_grid(g, b, 0.5).empty());
}

TEST(MeshFromGrid, VerticesAreMappedBackToWorldUnits) {
  // A cube field occupying [-0.5, 0.5]^3 of the normalized frame.
  ScalarGrid g;
  g.n = 33;
  g.values.resize(static_cast<std::size_t>(33 * 33 * 33));
  for (int k = 0; k < 33; ++k) {
    for (int j = 0; j < 33; ++j) {
      for (int i = 0; i < 33; ++i) {
        const Vec3 p = g.position(i, j, k);
        g.values[g.index(i, j, k)] = p.cwiseAbs().maxCoeff() <= 0.5 ? 1.0f : 0.0f;
      }
    }
  }
  BoundingBox b;
  b.size = {4.0, 2.0, 2.0};
  b.translation = {10.0, 0.0, -1.0};
  b.rotation = identity_rot6d();
  const TriangleMesh m = mesh_from_grid(g, b, 0.5);
  ASSERT_FALSE(m.empty());
  // Normalized half-extent 0.5 at scale 1/2 is 1 world unit around the center.
  for (const Vec3& v : m.vertices) {
    EXPECT_LE((v - Vec3(10.0, 0.0, -1.0)).cwiseAbs().maxCoeff(), 1.0 + 2.0 * g.spacing(0) + 1e-9);
  }
}

TEST_F(BlenderTest, CheckpointRoundTripsExactly) {
  const fs::path dir = scratch_dir();
  BlenderTrainer trainer(*ds_, micro_train());
  trainer.step();
  const BlenderCheckpoint a = trainer.snapshot();
  save_blender_checkpoint(dir / "b.ckpt", a);
  const BlenderCheckpoint b = load_blender_checkpoint(dir / "b.ckpt");
  EXPECT_EQ(b.parameters, a.parameters);
  EXPECT_EQ(b.optimizer, a.optimizer);
  EXPECT_EQ(b.manifest_hash, a.manifest_hash);
  EXPECT_EQ(b.step, 1u);
  const auto net = instantiate_blender(b);
  Rng rng(6);
  const auto q = random_points(20, rng);
  EXPECT_EQ(net->occupancy(normalized(0), q), trainer.model().occupancy(normalized(0), q));
}

TEST_F(BlenderTest, LossTraceIsDeterministic) {
  BlenderTrainer a(*ds_, micro_train()), b(*ds_, micro_train());
  for (int s = 0; s < 3; ++s) EXPECT_EQ(a.step().loss, b.step().loss);
  EXPECT_EQ(a.validate(), b.validate());
}

TEST_F(BlenderTest, ResumedRunMatchesContinuousRun) {
  const fs::path dir = scratch_dir();
  BlenderTrainer continuous(*ds_, micro_train());
  continuous.run(dir / "continuous");
  BlenderTrainConfig half = micro_train();
  half.steps = 2;
  BlenderTrainer first(*ds_, half);
  first.run(dir / "resumed");
  BlenderTrainer second(*ds_, micro_train());
  second.resume(load_blender_checkpoint(dir / "resumed" / "last.ckpt"));
  second.run(dir / "resumed");
  EXPECT_EQ(second.snapshot().parameters, continuous.snapshot().parameters);
}

TEST_F(BlenderTest, ResumePastTheBestStepKeepsTheBestWeights) {
  const fs::path dir = scratch_dir();
  BlenderTrainer trainer(*ds_, micro_train());
  trainer.step();
  BlenderCheckpoint best = trainer.snapshot();
  best.best_step = 1;
  save_blender_checkpoint(dir / "best.ckpt", best);
  trainer.step();
  BlenderCheckpoint last = trainer.snapshot();
  last.best_step = 1;
  last.best_val = -1e300;  // no later validation can beat it

  BlenderTrainer resumed(*ds_, micro_train());
  resumed.resume(last);
  const BlenderCheckpoint got = resumed.run(dir);
  EXPECT_EQ(got.step, 1u);
  EXPECT_EQ(got.parameters, best.parameters);
}

TEST_F(BlenderTest, ResumeOnAnotherManifestIsRefused) {
  BlenderTrainer trainer(*ds_, micro_train());
  const Dataset other = testing::small_dataset(42, 4, 1, 1);
  BlenderTrainer elsewhere(other, micro_train());
  EXPECT_THROW(elsewhere.resume(trainer.snapshot()), ManifestMismatch);
}

}  // namespace
}  // namespace partgen
