// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "partgen/distributions.hpp"

namespace partgen {

using dist::uniform01;

Mat3 rot6d_to_matrix(const Rotation6D& r) {
  for (double v : r) {
    if (!std::isfinite(v)) throw DegenerateRotation("rot6d_to_matrix: non-finite input");
  }
  const Vec3 a(r[0], r[1], r[2]);
  const Vec3 b(r[3], r[4], r[5]);
  const double na = a.norm();
  if (na < 1e-12) throw DegenerateRotation("rot6d_to_matrix: first column is zero");
  const Vec3 c0 = a / na;
  const Vec3 b_perp = b - c0.dot(b) * c0;
  const double nb = b_perp.norm();
  if (nb < 1e-12 * std::max(1.0, b.norm())) {
    throw DegenerateRotation("rot6d_to_matrix: columns are parallel or the second is zero");
  }
  const Vec3 c1 = b_perp / nb;
  Mat3 m;
  m.col(0) = c0;
  m.col(1) = c1;
  m.col(2) = c0.cross(c1);
  return m;
}

Rotation6D matrix_to_rot6d(const Mat3& m) {
  return {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
}

Mat3 axis_angle(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

void validate_part(const Part& p, int num_labels) {
  if (p.label < 0 || p.label >= num_labels) {
    throw std::invalid_argument("part label " + std::to_string(p.label) + " outside [0, " +
                                std::to_string(num_labels) + ")");
  }
  for (double s : p.size) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("part size must be positive and finite");
  }
  for (double t : p.translation) {
    if (!std::isfinite(t)) throw std::invalid_argument("part translation must be finite");
  }
  rot6d_to_matrix(p.rotation);
}

CuboidFrame::CuboidFrame(const Part& p)
    : rotation(rot6d_to_matrix(p.rotation)),
      translation(to_vec(p.translation)),
      half_size(0.5 * p.size[0], 0.5 * p.size[1], 0.5 * p.size[2]) {}

bool CuboidFrame::contains(const Vec3& x) const {
  const Vec3 local = to_local(x);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(local[k]) > half_size[k]) return false;
  }
  return true;
}

bool CuboidFrame::contains_strict(const Vec3& x, double eps) const {
  const Vec3 local = to_local(x);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(local[k]) >= half_size[k] - eps) return false;
  }
  return true;
}

Vec3 to_local(const Part& p, const Vec3& x) { return CuboidFrame(p).to_local(x); }

bool cuboid_contains(const Part& p, const Vec3& x) { return CuboidFrame(p).contains(x); }

bool cuboid_contains_strict(const Part& p, const Vec3& x, double eps) {
  return CuboidFrame(p).contains_strict(x, eps);
}

bool union_contains(std::span<const Part> parts, const Vec3& x) {
  if (parts.empty()) throw std::invalid_argument("union_contains: empty part list");
  return std::any_of(parts.begin(), parts.end(), [&](const Part& p) { return cuboid_contains(p, x); });
}

std::array<Vec3, 8> corners(const Part& p) {
  const Mat3 r = rot6d_to_matrix(p.rotation);
  const Vec3 t = to_vec(p.translation);
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 local(((i & 1) ? 0.5 : -0.5) * p.size[0], ((i & 2) ? 0.5 : -0.5) * p.size[1],
                     ((i & 4) ? 0.5 : -0.5) * p.size[2]);
    out[i] = r * local + t;
  }
  return out;
}

double volume(const Part& p) { return p.size[0] * p.size[1] * p.size[2]; }

Vec3 face_normal(const Part& p, int face) {
  Vec3 local = Vec3::Zero();
  local[face / 2] = (face % 2 == 0) ? -1.0 : 1.0;
  return rot6d_to_matrix(p.rotation) * local;
}

std::vector<SurfaceSample> sample_union_surface(std::span<const Part> parts, std::size_t n, Rng& rng,
                                                const SurfaceSampleOptions& options) {
  if (parts.empty()) throw std::invalid_argument("sample_union_surface: empty part list");
  if (n == 0) throw std::invalid_argument("sample_union_surface: n must be positive");

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Part& p : parts) {
    for (const Vec3& c : corners(p)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  const double eps = options.relative_epsilon * (hi - lo).norm();

  // Cumulative area over the 6 faces of every cuboid.
  std::vector<double> cumulative;
  cumulative.reserve(parts.size() * 6);
  double total = 0.0;
  for (const Part& p : parts) {
    for (int f = 0; f < 6; ++f) {
      const int axis = f / 2;
      total += p.size[(axis + 1) % 3] * p.size[(axis + 2) % 3];
      cumulative.push_back(total);
    }
  }

  std::vector<CuboidFrame> frames;
  frames.reserve(parts.size());
  for (const Part& p : parts) frames.emplace_back(p);

  std::vector<SurfaceSample> out;
  out.reserve(n);
  std::size_t proposals = 0;
  while (out.size() < n) {
    ++proposals;
    const double u = uniform01(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
    const int pi = static_cast<int>(idx / 6);
    const int face = static_cast<int>(idx % 6);
    const Part& p = parts[static_cast<std::size_t>(pi)];
    const int axis = face / 2;
    Vec3 local;
    local[axis] = (face % 2 == 0 ? -0.5 : 0.5) * p.size[axis];
    local[(axis + 1) % 3] = (uniform01(rng) - 0.5) * p.size[(axis + 1) % 3];
    local[(axis + 2) % 3] = (uniform01(rng) - 0.5) * p.size[(axis + 2) % 3];
    const Vec3 x = frames[static_cast<std::size_t>(pi)].rotation * local + frames[static_cast<std::size_t>(pi)].translation;

    bool hidden = false;
    for (std::size_t j = 0; j < parts.size() && !hidden; ++j) {
      if (static_cast<int>(j) == pi) continue;
      hidden = frames[j].contains_strict(x, eps);
    }
    if (!hidden) out.push_back({x, pi, face});

    if (proposals >= 10000 && static_cast<double>(out.size()) < options.min_acceptance * static_cast<double>(proposals)) {
      std::ostringstream msg;
      msg << "sample_union_surface: acceptance rate " << static_cast<double>(out.size()) / static_cast<double>(proposals)
          << " below " << options.min_acceptance << " after " << proposals
          << " proposals (cuboids are mutually contained?)";
      throw std::runtime_error(msg.str());
    }
  }
  return out;
}

}  // namespace partgen
