// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "partgen/dataset.hpp"

namespace partgen {

namespace {

constexpr std::size_t kLeafSize = 8;

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw std::invalid_argument("KdTree: empty point set");
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  build(0, points_.size(), 0);
}

int KdTree::build(std::size_t begin, std::size_t end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;
  // Split the widest axis at the median.
  Vec3 lo = points_[begin], hi = points_[begin];
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[i]);
    hi = hi.cwiseMax(points_[i]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(points_.begin() + static_cast<std::ptrdiff_t>(begin),
                   points_.begin() + static_cast<std::ptrdiff_t>(mid),
                   points_.begin() + static_cast<std::ptrdiff_t>(end),
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  const double split = points_[mid][axis];
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void KdTree::search(int node, const Vec3& q, double& best) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) best = std::min(best, squared_distance(q, points_[i]));
    return;
  }
  // Left holds coordinates <= split, right holds coordinates >= split.
  const double diff = q[n.axis] - n.split;
  const int near = diff <= 0.0 ? n.left : n.right;
  const int far = diff <= 0.0 ? n.right : n.left;
  search(near, q, best);
  // For any point across the plane |q_a - p_a| >= |diff| in floating point, so
  // its squared_distance is at least diff * diff and the subtree can be skipped.
  if (diff * diff < best) search(far, q, best);
}

double KdTree::nearest_squared(const Vec3& q) const {
  double best = std::numeric_limits<double>::infinity();
  search(0, q, best);
  return best;
}

namespace {

double one_sided(std::span<const Vec3> from, const KdTree& to) {
  double s = 0.0;
  for (const Vec3& p : from) s += to.nearest_squared(p);
  return s / static_cast<double>(from.size());
}

double chamfer_with_trees(const PointCloud& x, const KdTree& tx, const PointCloud& y, const KdTree& ty) {
  return one_sided(x.points, ty) + one_sided(y.points, tx);
}

void check_cloud(const PointCloud& c) {
  if (c.points.empty()) throw std::invalid_argument("chamfer: empty point cloud");
}

}  // namespace

double chamfer(const PointCloud& x, const PointCloud& y) {
  check_cloud(x);
  check_cloud(y);
  return chamfer_with_trees(x, KdTree(x.points), y, KdTree(y.points));
}

std::vector<double> chamfer_matrix(std::span<const PointCloud> generated, std::span<const PointCloud> reference,
                                   unsigned workers) {
  if (generated.empty() || reference.empty()) throw std::invalid_argument("chamfer_matrix: empty set");
  for (const PointCloud& c : generated) check_cloud(c);
  for (const PointCloud& c : reference) check_cloud(c);
  std::vector<KdTree> gt, rt;
  gt.reserve(generated.size());
  rt.reserve(reference.size());
  for (const PointCloud& c : generated) gt.emplace_back(c.points);
  for (const PointCloud& c : reference) rt.emplace_back(c.points);

  const std::size_t total = generated.size() * reference.size();
  std::vector<double> cd(total);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, total));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      const std::size_t g = k / reference.size();
      const std::size_t r = k % reference.size();
      cd[k] = chamfer_with_trees(generated[g], gt[g], reference[r], rt[r]);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return cd;
}

double mmd_from_matrix(std::span<const double> cd, std::size_t n_gen, std::size_t n_ref) {
  if (n_gen == 0 || n_ref == 0 || cd.size() != n_gen * n_ref) throw std::invalid_argument("mmd: bad matrix");
  double s = 0.0;
  for (std::size_t r = 0; r < n_ref; ++r) {
    double best = cd[r];
    for (std::size_t g = 1; g < n_gen; ++g) best = std::min(best, cd[g * n_ref + r]);
    s += best;
  }
  return s / static_cast<double>(n_ref);
}

double cov_from_matrix(std::span<const double> cd, std::size_t n_gen, std::size_t n_ref) {
  if (n_gen == 0 || n_ref == 0 || cd.size() != n_gen * n_ref) throw std::invalid_argument("cov: bad matrix");
  std::vector<bool> covered(n_ref, false);
  for (std::size_t g = 0; g < n_gen; ++g) {
    const double* row = cd.data() + g * n_ref;
    covered[static_cast<std::size_t>(std::min_element(row, row + n_ref) - row)] = true;
  }
  return static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(n_ref);
}

double mmd(std::span<const PointCloud> generated, std::span<const PointCloud> reference) {
  return mmd_from_matrix(chamfer_matrix(generated, reference), generated.size(), reference.size());
}

double cov(std::span<const PointCloud> generated, std::span<const PointCloud> reference) {
  return cov_from_matrix(chamfer_matrix(generated, reference), generated.size(), reference.size());
}

PointCloud normalize_unit_cube(const PointCloud& cloud) {
  if (cloud.points.empty()) throw std::invalid_argument("normalize_unit_cube: empty point cloud");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.points.size());
  Vec3 lo = cloud.points.front(), hi = cloud.points.front();
  for (const Vec3& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  const double s = extent > 0.0 ? 1.0 / extent : 1.0;
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back((p - centroid) * s);
  return out;
}

PointCloud sample_parts_cloud(std::span<const Part> parts, std::size_t n, Rng& rng) {
  if (parts.empty()) throw std::invalid_argument("shape has no parts");
  PointCloud c;
  c.points.reserve(n);
  for (const SurfaceSample& s : sample_union_surface(parts, n, rng)) c.points.push_back(s.point);
  return c;
}

PointCloud sample_mesh_cloud(const TriangleMesh& mesh, std::size_t n, Rng& rng) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices.at(f[0]);
    const Vec3& b = mesh.vertices.at(f[1]);
    const Vec3& c = mesh.vertices.at(f[2]);
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw std::invalid_argument("mesh has no surface area");
  PointCloud out;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = dist::uniform01(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                cumulative.size() - 1);
    const auto& f = mesh.faces[t];
    const double r1 = std::sqrt(dist::uniform01(rng));
    const double r2 = dist::uniform01(rng);
    out.points.push_back((1.0 - r1) * mesh.vertices[f[0]] + r1 * (1.0 - r2) * mesh.vertices[f[1]] +
                         r1 * r2 * mesh.vertices[f[2]]);
  }
  return out;
}

namespace {

std::uint64_t parts_hash(std::span<const Part> parts) {
  std::string bytes;
  for (const Part& p : parts) {
    bytes.append(reinterpret_cast<const char*>(&p.label), sizeof(p.label));
    bytes.append(reinterpret_cast<const char*>(p.size.data()), sizeof(p.size));
    bytes.append(reinterpret_cast<const char*>(p.translation.data()), sizeof(p.translation));
    bytes.append(reinterpret_cast<const char*>(p.rotation.data()), sizeof(p.rotation));
  }
  return fnv1a64(bytes);
}

std::string read_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mesh " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<PointCloud> sample_set(std::span<const EvalItem> items, const EvaluationConfig& config,
                                   std::vector<EvaluationError>& errors) {
  std::vector<PointCloud> clouds;
  for (const EvalItem& item : items) {
    try {
      PointCloud c;
      if (const auto* parts = std::get_if<std::vector<Part>>(&item.source)) {
        Rng rng(mix_seed(config.seed, parts_hash(*parts)));
        c = sample_parts_cloud(*parts, config.points, rng);
      } else {
        const auto& path = std::get<std::filesystem::path>(item.source);
        Rng rng(mix_seed(config.seed, fnv1a64(read_bytes(path))));
        c = sample_mesh_cloud(read_obj(path), config.points, rng);
      }
      clouds.push_back(normalize_unit_cube(c));
    } catch (const std::exception& e) {
      errors.push_back({item.name, e.what()});
    }
  }
  return clouds;
}

}  // namespace

EvaluationReport evaluate_generation(std::span<const EvalItem> generated, std::span<const EvalItem> reference,
                                     const EvaluationConfig& config) {
  if (config.points == 0) throw std::invalid_argument("evaluate: points must be positive");
  EvaluationReport r;
  r.n_points = config.points;
  r.seed = config.seed;
  const std::vector<PointCloud> g = sample_set(generated, config, r.errors);
  const std::vector<PointCloud> ref = sample_set(reference, config, r.errors);
  if (g.empty()) throw std::invalid_argument("evaluate: no usable generated shapes");
  if (ref.empty()) throw std::invalid_argument("evaluate: no usable reference shapes");
  r.n_gen = g.size();
  r.n_ref = ref.size();
  const std::vector<double> cd = chamfer_matrix(g, ref, config.workers);
  r.mmd_cd = mmd_from_matrix(cd, g.size(), ref.size());
  r.cov_cd = cov_from_matrix(cd, g.size(), ref.size());
  return r;
}

std::string report_to_string(const EvaluationReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "mmd_cd_x1000=%.17g\ncov_cd=%.17g\nn_gen=%zu\nn_ref=%zu\nn_points=%zu\nseed=%llu\nn_errors=%zu\n",
                r.mmd_cd * 1000.0, r.cov_cd, r.n_gen, r.n_ref, r.n_points, static_cast<unsigned long long>(r.seed),
                r.errors.size());
  std::string s = buf;
  for (const EvaluationError& e : r.errors) {
    std::string msg = e.message;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    s += "error=" + e.item + ": " + msg + "\n";
  }
  return s;
}

}  // namespace partgen
