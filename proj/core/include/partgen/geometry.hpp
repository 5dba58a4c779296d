// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace partgen {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rng = std::mt19937_64;

class DegenerateRotation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// First two columns of a rotation matrix, concatenated.
using Rotation6D = std::array<double, 6>;

/// Gram-Schmidt decode: normalize the first column, orthogonalize and
/// normalize the second, third = cross product. Throws DegenerateRotation for
/// zero or parallel columns.
Mat3 rot6d_to_matrix(const Rotation6D& r);
Rotation6D matrix_to_rot6d(const Mat3& m);
inline Rotation6D identity_rot6d() { return {1, 0, 0, 0, 1, 0}; }
/// Rotation of `radians` about the unit `axis` (Rodrigues).
Mat3 axis_angle(const Vec3& axis, double radians);

/// A labelled cuboid. `size` holds full extents along the local axes.
struct Part {
  int label = 0;
  std::array<double, 3> size{1, 1, 1};
  std::array<double, 3> translation{0, 0, 0};
  Rotation6D rotation = identity_rot6d();

  bool operator==(const Part&) const = default;
};

struct BoundingBox {
  std::array<double, 3> size{1, 1, 1};
  std::array<double, 3> translation{0, 0, 0};
  Rotation6D rotation = identity_rot6d();

  bool operator==(const BoundingBox&) const = default;
};

inline Vec3 to_vec(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
inline std::array<double, 3> to_array(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

/// Throws std::invalid_argument if sizes are not positive/finite or the label
/// is outside [0, num_labels).
void validate_part(const Part& p, int num_labels);

/// Decoded cuboid frame for repeated containment queries.
struct CuboidFrame {
  Mat3 rotation;
  Vec3 translation;
  Vec3 half_size;

  explicit CuboidFrame(const Part& p);
  Vec3 to_local(const Vec3& x) const { return rotation.transpose() * (x - translation); }
  bool contains(const Vec3& x) const;
  bool contains_strict(const Vec3& x, double eps) const;
};

/// Boundary counts as inside.
bool cuboid_contains(const Part& p, const Vec3& x);
/// Throws std::invalid_argument on an empty part list.
bool union_contains(std::span<const Part> parts, const Vec3& x);

/// Point expressed in the cuboid frame (no scaling).
Vec3 to_local(const Part& p, const Vec3& x);
/// The eight corners in world coordinates.
std::array<Vec3, 8> corners(const Part& p);
double volume(const Part& p);

struct SurfaceSample {
  Vec3 point;
  int part = 0;  // index of the emitting cuboid
  int face = 0;  // 0..5 = -x, +x, -y, +y, -z, +z
};

struct SurfaceSampleOptions {
  /// Inward tolerance for "strictly inside another cuboid", relative to the
  /// diagonal of the axis-aligned box enclosing all parts.
  double relative_epsilon = 1e-6;
  /// Give up when fewer than this fraction of proposals survive.
  double min_acceptance = 1e-3;
};

/// Area-weighted samples from the boundary of the union of `parts`: faces of
/// all cuboids are sampled proportionally to area and proposals strictly inside
/// another cuboid are rejected. Throws std::runtime_error when the acceptance
/// rate drops below `min_acceptance`.
std::vector<SurfaceSample> sample_union_surface(std::span<const Part> parts, std::size_t n, Rng& rng,
                                                const SurfaceSampleOptions& options = {});

/// Outward unit normal of `face` in world coordinates.
Vec3 face_normal(const Part& p, int face);

/// Strict containment: every local coordinate at least `eps` inside the face.
bool cuboid_contains_strict(const Part& p, const Vec3& x, double eps);

}  // namespace partgen
