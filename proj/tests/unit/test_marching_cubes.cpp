// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include <gtest/gtest.h>

#include "partgen/marching_cubes.hpp"

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

ScalarGrid field_grid(int cells, const std::function<double(const Vec3&)>& f) {
  return sample_grid(cells, Vec3::Constant(-1.0), Vec3::Constant(1.0),
                     [&](std::span<const Vec3> p, std::span<float> out) {
                       for (std::size_t i = 0; i < p.size(); ++i) out[i] = static_cast<float>(f(p[i]));
                     });
}

/// Every undirected edge is used by exactly two faces, once in each direction.
bool edge_manifold(const TriangleMesh& m) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : m.faces) {
    for (int e = 0; e < 3; ++e) ++directed[{f[e], f[(e + 1) % 3]}];
  }
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    const auto back = directed.find({edge.second, edge.first});
    if (back == directed.end() || back->second != 1) return false;
  }
  return true;
}

TEST(SampleGrid, VisitsEveryLatticePointInIndexOrder) {
  const ScalarGrid g = field_grid(4, [](const Vec3& p) { return p.x() + 10 * p.y() + 100 * p.z(); });
  ASSERT_EQ(g.n, 5);
  ASSERT_EQ(g.values.size(), 125u);
  for (int k = 0; k < 5; ++k) {
    for (int j = 0; j < 5; ++j) {
      for (int i = 0; i < 5; ++i) {
        const Vec3 p(-1 + 0.5 * i, -1 + 0.5 * j, -1 + 0.5 * k);
        EXPECT_FLOAT_EQ(g.at(i, j, k), static_cast<float>(p.x() + 10 * p.y() + 100 * p.z()));
      }
    }
  }
}

TEST(MarchingCubes, SphereIsAccurateClosedAndOutwardFacing) {
  const double r = 0.5;
  const int res = 64;
  const ScalarGrid g = field_grid(res, [&](const Vec3& p) { return r - p.norm(); });
  const TriangleMesh m = marching_cubes(g, 0.0);
  ASSERT_FALSE(m.empty());
  const double h = 2.0 / res;
  for (const Vec3& v : m.vertices) EXPECT_LE(std::abs(v.norm() - r), 2.0 * std::sqrt(3.0) * h);
  EXPECT_TRUE(edge_manifold(m));
  const double vol = signed_volume(m);
  EXPECT_GT(vol, 0.0);
  EXPECT_NEAR(vol, 4.0 / 3.0 * std::numbers::pi * r * r * r, 0.02 * 4.0 / 3.0 * std::numbers::pi * r * r * r);
}

TEST(MarchingCubes, BinaryBoxFieldIsClosed) {
  const ScalarGrid g = field_grid(20, [](const Vec3& p) {
    return std::abs(p.x()) < 0.55 && std::abs(p.y()) < 0.3 && std::abs(p.z()) < 0.8 ? 1.0 : 0.0;
  });
  const TriangleMesh m = marching_cubes(g, 0.5);
  ASSERT_FALSE(m.empty());
  EXPECT_TRUE(edge_manifold(m));
  EXPECT_GT(signed_volume(m), 0.0);
}

TEST(MarchingCubes, ConstantFieldsGiveEmptyMeshes) {
  EXPECT_TRUE(marching_cubes(field_grid(6, [](const Vec3&) { return 1.0; }), 0.5).empty());
  EXPECT_TRUE(marching_cubes(field_grid(6, [](const Vec3&) { return 0.0; }), 0.5).empty());
}

TEST(MarchingCubes, SignedVolumeOfAUnitTetrahedron) {
  TriangleMesh t;
  t.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  t.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  EXPECT_NEAR(signed_volume(t), 1.0 / 6.0, 1e-15);
}

TEST(MeshFiles, ObjRoundTrips) {
  const fs::path dir = scratch_dir();
  const TriangleMesh m = marching_cubes(field_grid(12, [](const Vec3& p) { return 0.6 - p.norm(); }), 0.0);
  write_obj(dir / "m.obj", m);
  const TriangleMesh back = read_obj(dir / "m.obj");
  ASSERT_EQ(back.vertices.size(), m.vertices.size());
  EXPECT_EQ(back.faces, m.faces);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
}

TEST(MeshFiles, ObjQuadsAreTriangulatedAndErrorsNameTheLine) {
  const fs::path dir = scratch_dir();
  std::ofstream(dir / "q.obj") << "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  const TriangleMesh q = read_obj(dir / "q.obj");
  EXPECT_EQ(q.faces.size(), 2u);
  std::ofstream(dir / "bad.obj") << "v 0 0 0\nv 1 0 0\nf 1 2 7\n";
  try {
    read_obj(dir / "bad.obj");
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(MeshFiles, GridDumpRoundTrips) {
  const fs::path dir = scratch_dir();
  const ScalarGrid g = field_grid(7, [](const Vec3& p) { return p.squaredNorm(); });
  write_grid(dir / "g.grid", g);
  const ScalarGrid back = read_grid(dir / "g.grid");
  EXPECT_EQ(back.n, g.n);
  EXPECT_EQ(back.lo, g.lo);
  EXPECT_EQ(back.hi, g.hi);
  EXPECT_EQ(back.values, g.values);
}

}  // namespace
}  // namespace partgen
