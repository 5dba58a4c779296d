// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "partgen/distributions.hpp"
#include "partgen/geometry.hpp"
#include "partgen/marching_cubes.hpp"

namespace partgen {

inline constexpr std::size_t kDefaultCloudPoints = 2048;

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
};

/// Squared Euclidean distance, evaluated as dx*dx + dy*dy + dz*dz.
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Static 3-d tree for exact nearest-neighbour queries. Returns bit-identical
/// minima to a linear scan using squared_distance.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);
  /// Smallest squared_distance from `q` to any stored point.
  double nearest_squared(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 for a leaf
    double split = 0.0;
    int left = -1, right = -1;
    std::size_t begin = 0, end = 0;
  };
  int build(std::size_t begin, std::size_t end, int depth);
  void search(int node, const Vec3& q, double& best) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
};

/// Mean nearest squared distance from x to y plus the reverse term. Summation
/// runs over points in storage order. Throws std::invalid_argument for an
/// empty cloud.
double chamfer(const PointCloud& x, const PointCloud& y);

/// Chamfer distance of every (generated, reference) pair; row-major with
/// |G| rows. Entries are computed in parallel and are independent of the
/// worker count.
std::vector<double> chamfer_matrix(std::span<const PointCloud> generated, std::span<const PointCloud> reference,
                                   unsigned workers = 0);

/// (1/|R|) sum over references of the smallest CD to any generated cloud.
double mmd_from_matrix(std::span<const double> cd, std::size_t n_gen, std::size_t n_ref);
/// Fraction of references that are the nearest reference (lowest index on
/// ties) of at least one generated cloud.
double cov_from_matrix(std::span<const double> cd, std::size_t n_gen, std::size_t n_ref);
double mmd(std::span<const PointCloud> generated, std::span<const PointCloud> reference);
double cov(std::span<const PointCloud> generated, std::span<const PointCloud> reference);

/// Centroid moved to the origin, then isotropic scaling so the largest axis
/// extent is 1. A single-point cloud is only centered.
PointCloud normalize_unit_cube(const PointCloud& cloud);

/// Area-weighted surface samples of a cuboid union.
PointCloud sample_parts_cloud(std::span<const Part> parts, std::size_t n, Rng& rng);
/// Area-weighted samples of a triangle mesh. Throws std::invalid_argument for
/// a mesh without area.
PointCloud sample_mesh_cloud(const TriangleMesh& mesh, std::size_t n, Rng& rng);

/// A shape to evaluate: cuboid parts or a mesh file.
struct EvalItem {
  std::string name;
  std::variant<std::vector<Part>, std::filesystem::path> source;
};

struct EvaluationConfig {
  std::size_t points = kDefaultCloudPoints;
  std::uint64_t seed = 0;
  unsigned workers = 0;
};

struct EvaluationError {
  std::string item;
  std::string message;
};

struct EvaluationReport {
  double mmd_cd = 0.0;
  double cov_cd = 0.0;
  std::size_t n_gen = 0;
  std::size_t n_ref = 0;
  std::size_t n_points = 0;
  std::uint64_t seed = 0;
  std::vector<EvaluationError> errors;
};

/// Samples, normalizes and compares the two sets. Each cloud is drawn from a
/// stream seeded by the run seed and a hash of the shape's content, so equal
/// shapes give equal clouds. Items that cannot be read or sampled are recorded
/// in `errors` and skipped. Throws std::invalid_argument when either set ends
/// up empty.
EvaluationReport evaluate_generation(std::span<const EvalItem> generated, std::span<const EvalItem> reference,
                                     const EvaluationConfig& config);

/// key=value lines: mmd_cd_x1000, cov_cd, n_gen, n_ref, n_points, seed,
/// n_errors, then one error line per failed item.
std::string report_to_string(const EvaluationReport& r);

}  // namespace partgen
