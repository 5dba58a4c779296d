// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "partgen/dataset.hpp"
#include "partgen/geometry.hpp"
#include "test_support.hpp"

namespace partgen {
namespace {

Part box(int label, std::array<double, 3> size, std::array<double, 3> t, const Mat3& r = Mat3::Identity()) {
  Part p;
  p.label = label;
  p.size = size;
  p.translation = t;
  p.rotation = matrix_to_rot6d(r);
  return p;
}

TEST(Rotation6D, RoundTripsRotations) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Vec3 axis = Vec3(dist::uniform01(rng) - 0.5, dist::uniform01(rng) - 0.5, dist::uniform01(rng) - 0.5);
    const Mat3 r = axis_angle(axis, 6.0 * dist::uniform01(rng));
    EXPECT_TRUE(rot6d_to_matrix(matrix_to_rot6d(r)).isApprox(r, 1e-12));
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(Rotation6D, GramSchmidtOrthonormalizes) {
  const Mat3 m = rot6d_to_matrix({2.0, 0.1, 0.0, 0.3, 1.5, 0.2});
  EXPECT_TRUE((m.transpose() * m).isApprox(Mat3::Identity(), 1e-12));
  EXPECT_NEAR(m.determinant(), 1.0, 1e-12);
  EXPECT_TRUE(m.col(0).isApprox(Vec3(2.0, 0.1, 0.0).normalized(), 1e-12));
}

TEST(Rotation6D, DegenerateInputThrows) {
  EXPECT_THROW(rot6d_to_matrix({1, 0, 0, 2, 0, 0}), DegenerateRotation);
}

TEST(Cuboid, ContainmentMatchesOracle) {
  Rng rng(2);
  const Part p = box(0, {0.4, 1.0, 0.2}, {0.1, 0.5, -0.2}, axis_angle(Vec3(1, 2, 3), 0.7));
  for (int i = 0; i < 20000; ++i) {
    const Vec3 x(dist::uniform01(rng) * 2 - 1, dist::uniform01(rng) * 2 - 0.5, dist::uniform01(rng) * 2 - 1);
    ASSERT_EQ(cuboid_contains(p, x), testing::oracle_contains(p, x));
  }
  EXPECT_NEAR(volume(p), 0.08, 1e-15);
}

TEST(Cuboid, UnionOfEmptyListThrows) {
  EXPECT_THROW(union_contains({}, Vec3::Zero()), std::invalid_argument);
}

TEST(SurfaceSampling, PointsLieOnTheUnionBoundary) {
  Rng rng(3);
  const std::vector<Part> parts = {box(0, {1.0, 0.2, 1.0}, {0, 0.5, 0}), box(2, {0.2, 1.0, 0.2}, {0, 0, 0})};
  const auto samples = sample_union_surface(parts, 4000, rng);
  ASSERT_EQ(samples.size(), 4000u);
  for (const SurfaceSample& s : samples) {
    // On the boundary: inside the union but points nudged outward leave it.
    const Vec3 n = face_normal(parts[s.part], s.face);
    EXPECT_TRUE(testing::oracle_union_contains(parts, s.point - 1e-7 * n));
    EXPECT_FALSE(testing::oracle_union_contains(parts, s.point + 1e-7 * n));
  }
}

TEST(SurfaceSampling, FacesAreHitInProportionToArea) {
  Rng rng(4);
  const std::vector<Part> parts = {box(0, {2.0, 1.0, 1.0}, {0, 0, 0})};
  std::array<int, 6> counts{};
  const int n = 60000;
  for (const SurfaceSample& s : sample_union_surface(parts, n, rng)) ++counts[s.face];
  // Areas: x faces 1, y faces 2, z faces 2; total 10.
  const std::array<double, 6> share = {0.1, 0.1, 0.2, 0.2, 0.2, 0.2};
  for (int f = 0; f < 6; ++f) {
    EXPECT_NEAR(counts[f] / static_cast<double>(n), share[f], 5 * std::sqrt(share[f] * (1 - share[f]) / n));
  }
}

TEST(SurfaceSampling, UnitCubeFacesAreUniform) {
  Rng rng(5);
  const std::vector<Part> one = {box(0, {1, 1, 1}, {0, 0, 0})};
  // Two coincident cubes describe the same union.
  const std::vector<Part> two = {one[0], one[0]};
  for (const auto* parts : {&one, &two}) {
    std::array<int, 6> counts{};
    for (const SurfaceSample& s : sample_union_surface(*parts, 6000, rng)) {
      ++counts[s.face];
      const Vec3 local = to_local((*parts)[s.part], s.point).cwiseAbs();
      EXPECT_LE(std::abs((local - Vec3::Constant(0.5)).maxCoeff()), 1e-9);
    }
    const double sigma = std::sqrt(6000 * (1.0 / 6) * (5.0 / 6));
    for (int c : counts) EXPECT_NEAR(c, 1000.0, 5 * sigma);
  }
}

TEST(SurfaceSampling, NestedCuboidFacesAreHidden) {
  Rng rng(6);
  // Inner faces lie strictly inside the outer cube and are always rejected.
  const std::vector<Part> nested = {box(0, {1, 1, 1}, {0, 0, 0}), box(0, {0.5, 0.5, 0.5}, {0, 0, 0})};
  for (const SurfaceSample& s : sample_union_surface(nested, 2000, rng)) EXPECT_EQ(s.part, 0);
  // Acceptance is 6 / 7.5; a stricter floor gives up.
  SurfaceSampleOptions strict;
  strict.min_acceptance = 0.9;
  EXPECT_THROW(sample_union_surface(nested, 20000, rng, strict), std::runtime_error);
}

TEST(Normalization, MapsBboxToUnitFrameAndBack) {
  BoundingBox b;
  b.size = {2.0, 0.5, 1.0};
  b.translation = {1.0, 0.25, -3.0};
  b.rotation = matrix_to_rot6d(axis_angle(Vec3::UnitY(), 0.5));
  const Normalization n = Normalization::from_bbox(b);
  const Part as_part = box(0, b.size, b.translation, rot6d_to_matrix(b.rotation));
  for (const Vec3& c : corners(as_part)) {
    const Vec3 u = n.apply(c);
    EXPECT_LE(u.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    EXPECT_TRUE(n.invert(u).isApprox(c, 1e-12));
  }
  // The longest axis spans exactly [-1, 1].
  EXPECT_NEAR(n.apply(to_vec(b.translation) + rot6d_to_matrix(b.rotation) * Vec3(1.0, 0, 0)).norm(), 1.0, 1e-12);
}

}  // namespace
}  // namespace partgen
