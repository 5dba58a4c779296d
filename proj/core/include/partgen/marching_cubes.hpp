// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "partgen/geometry.hpp"

namespace partgen {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
};

/// Samples of a scalar field on a regular lattice of n^3 points spanning the
/// box [lo, hi]. Index order is x fastest, then y, then z.
struct ScalarGrid {
  int n = 0;
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
  std::vector<float> values;

  double spacing(int axis) const { return (hi[axis] - lo[axis]) / (n - 1); }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * n + static_cast<std::size_t>(j)) * n + static_cast<std::size_t>(i);
  }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 position(int i, int j, int k) const;
};

/// Fills a grid of `cells` cells per axis ((cells + 1)^3 samples) by calling
/// `field` on chunks of at most `chunk` points.
ScalarGrid sample_grid(int cells, const Vec3& lo, const Vec3& hi,
                       const std::function<void(std::span<const Vec3>, std::span<float>)>& field,
                       std::size_t chunk = 8192);

/// Isosurface between samples above `iso` (inside) and below it. Vertices are
/// placed by linear interpolation and shared between the cells of a lattice
/// edge. Faces are wound counter-clockwise seen from outside. An all-inside or
/// all-outside grid yields an empty mesh.
TriangleMesh marching_cubes(const ScalarGrid& grid, double iso);

/// Volume enclosed by a closed mesh; positive for outward winding.
double signed_volume(const TriangleMesh& mesh);

/// Text OBJ with `v` and `f` records (1-based indices).
void write_obj(const std::filesystem::path& file, const TriangleMesh& mesh);
/// Reads `v` and triangular or polygonal `f` records (fans are triangulated).
/// Throws ParseError-compatible std::runtime_error with the line number.
TriangleMesh read_obj(const std::filesystem::path& file);

/// Raw float32 dump: "PGGRID1\n", then "n lo.x lo.y lo.z hi.x hi.y hi.z\n",
/// then n^3 little-endian floats in grid index order.
void write_grid(const std::filesystem::path& file, const ScalarGrid& grid);
ScalarGrid read_grid(const std::filesystem::path& file);

}  // namespace partgen
