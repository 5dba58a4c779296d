// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace partgen::testing {

Dataset small_dataset(std::uint64_t seed, std::size_t train, std::size_t val, std::size_t test,
                      std::vector<Category> categories, int clusters) {
  DatasetConfig c;
  c.seed = seed;
  c.categories = std::move(categories);
  c.train_per_category = train;
  c.val_per_category = val;
  c.test_per_category = test;
  c.kmeans.clusters = clusters;
  return make_dataset(c);
}

Dataset dataset_from_records(std::vector<ObjectRecord> records, int clusters) {
  Dataset ds;
  ds.manifest.vocabulary = default_vocabulary();
  ds.manifest.splits["train"] = {};
  ds.manifest.splits["val"] = {};
  ds.manifest.splits["test"] = {};
  for (const ObjectRecord& r : records) ds.manifest.splits["train"].push_back(r.id);
  ds.records = std::move(records);
  dist::KMeansOptions k;
  k.clusters = clusters;
  fit_manifest_statistics(ds, k, 0);
  return ds;
}

GeneratorConfig micro_generator_config() {
  GeneratorConfig c;
  c.embed_dim = 8;
  c.label_embed_dim = 8;
  c.concat_dim = 16;
  c.layers = 1;
  c.heads = 2;
  c.qkv_dim = 8;
  c.mlp_dim = 16;
  c.octaves = 2;
  c.mixtures = 2;
  c.head_hidden = 8;
  return c;
}

BlenderConfig micro_blender_config() {
  BlenderConfig c;
  c.embed_dim = 8;
  c.label_embed_dim = 8;
  c.concat_dim = 16;
  c.part_octaves = 2;
  c.layers = 1;
  c.heads = 2;
  c.qkv_dim = 8;
  c.mlp_dim = 16;
  c.point_octaves = 2;
  return c;
}

GradCheck gradient_check(nn::ParameterStore& store, const std::function<double()>& loss,
                         const std::function<std::vector<double>()>& gradient, dist::Rng& rng, std::size_t coords,
                         std::size_t directions, double eps) {
  const std::vector<double> base = store.values();
  const std::vector<double> analytic = gradient();
  store.set_values(base);
  auto eval_at = [&](const std::vector<double>& v) {
    store.set_values(v);
    return loss();
  };

  GradCheck out;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  std::vector<double> v = base;
  for (std::size_t c = 0; c < coords; ++c) {
    const std::size_t i = static_cast<std::size_t>(dist::uniform_index(rng, base.size()));
    v[i] = base[i] + eps;
    const double up = eval_at(v);
    v[i] = base[i] - eps;
    const double down = eval_at(v);
    v[i] = base[i];
    const double numeric = (up - down) / (2.0 * eps);
    diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
    a2 += analytic[i] * analytic[i];
    n2 += numeric * numeric;
  }
  out.relative_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});

  std::normal_distribution<double> normal;
  double ddiff2 = 0.0, da2 = 0.0, dn2 = 0.0;
  for (std::size_t d = 0; d < directions; ++d) {
    std::vector<double> dir(base.size());
    double norm = 0.0;
    for (double& x : dir) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    double along = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] /= norm;
      along += analytic[i] * dir[i];
    }
    std::vector<double> plus = base, minus = base;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      plus[i] += eps * dir[i];
      minus[i] -= eps * dir[i];
    }
    const double numeric = (eval_at(plus) - eval_at(minus)) / (2.0 * eps);
    ddiff2 += (numeric - along) * (numeric - along);
    da2 += along * along;
    dn2 += numeric * numeric;
  }
  out.directional_error = directions == 0 ? 0.0 : std::sqrt(ddiff2) / std::max({std::sqrt(da2), std::sqrt(dn2), 1e-12});
  out.probes = coords + directions;
  store.set_values(base);
  return out;
}

double brute_chamfer(const PointCloud& x, const PointCloud& y) {
  auto side = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double s = 0.0;
    for (const Vec3& p : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : b) {
        const double dx = p.x() - q.x();
        const double dy = p.y() - q.y();
        const double dz = p.z() - q.z();
        const double d = dx * dx + dy * dy + dz * dz;
        if (d < best) best = d;
      }
      s += best;
    }
    return s / static_cast<double>(a.size());
  };
  return side(x.points, y.points) + side(y.points, x.points);
}

std::vector<std::vector<double>> brute_cd_matrix(std::span<const PointCloud> g, std::span<const PointCloud> r) {
  std::vector<std::vector<double>> m(g.size(), std::vector<double>(r.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) m[i][j] = brute_chamfer(g[i], r[j]);
  }
  return m;
}

double brute_mmd(std::span<const PointCloud> g, std::span<const PointCloud> r) {
  const auto m = brute_cd_matrix(g, r);
  double s = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) best = std::min(best, m[i][j]);
    s += best;
  }
  return s / static_cast<double>(r.size());
}

double brute_cov(std::span<const PointCloud> g, std::span<const PointCloud> r) {
  const auto m = brute_cd_matrix(g, r);
  std::vector<int> hit(r.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < r.size(); ++j) {
      if (m[i][j] < m[i][arg]) arg = j;
    }
    hit[arg] = 1;
  }
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / static_cast<double>(r.size());
}

double exhaustive_tf_loss(const PartGenerator& g, const ObjectRecord& r, std::span<const double> condition) {
  const std::size_t n = r.parts.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double total = 0.0;
  std::size_t terms = 0;
  do {
    for (std::size_t m = 0; m <= n; ++m) {
      std::vector<Part> context;
      for (std::size_t i = 0; i < m; ++i) context.push_back(r.parts[perm[i]]);
      ad::Tape t(false);
      const ad::Matrix F = g.features(t, r.bbox, context, condition).value();
      total += g.next_part_nll(F, m < n ? &r.parts[perm[m]] : nullptr);
      ++terms;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total / static_cast<double>(terms);
}

namespace {

std::vector<double> flat_attributes(const AttributeStats& s, const Part& p) {
  const NormalizedAttributes a = normalize_part(s, p);
  std::vector<double> v;
  v.insert(v.end(), a.size.begin(), a.size.end());
  v.insert(v.end(), a.translation.begin(), a.translation.end());
  v.insert(v.end(), a.rotation.begin(), a.rotation.end());
  return v;
}

}  // namespace

double discretization_floor(const PartGenerator& g, const ObjectRecord& r) {
  const double h = g.config().bin_half_width;
  const double interior = -std::log(std::tanh(h / (2.0 * std::exp(g.config().log_scale_min))));
  const std::size_t n = r.parts.size();
  std::vector<std::vector<double>> attrs;
  for (const Part& p : r.parts) attrs.push_back(flat_attributes(g.context().stats, p));
  auto same = [&](std::size_t a, std::size_t b) {
    return r.parts[a].label == r.parts[b].label && attrs[a] == attrs[b];
  };
  std::vector<double> attribute_cost(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (double x : attrs[j]) attribute_cost[j] += dist::is_edge_bin(x, h) ? 0.0 : interior;
  }
  // Same enumeration as exhaustive_tf_loss, so the two are directly comparable.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double total = 0.0;
  std::size_t terms = 0;
  do {
    for (std::size_t m = 0; m <= n; ++m) {
      ++terms;
      if (m == n) continue;  // END is certain once every part is placed
      const std::size_t target = perm[m];
      std::size_t identical = 0;
      for (std::size_t i = m; i < n; ++i) identical += same(perm[i], target) ? 1 : 0;
      total += -std::log(static_cast<double>(identical) / static_cast<double>(n - m)) + attribute_cost[target];
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total / static_cast<double>(terms);
}

namespace {

Mat3 oracle_rotation(const Rotation6D& r) {
  const Vec3 a1(r[0], r[1], r[2]);
  const Vec3 a2(r[3], r[4], r[5]);
  const Vec3 b1 = a1.normalized();
  const Vec3 b2 = (a2 - b1.dot(a2) * b1).normalized();
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

}  // namespace

bool oracle_contains(const Part& p, const Vec3& x) {
  const Vec3 local = oracle_rotation(p.rotation).transpose() * (x - Vec3(p.translation[0], p.translation[1], p.translation[2]));
  for (int k = 0; k < 3; ++k) {
    if (std::abs(local[k]) > 0.5 * p.size[k]) return false;
  }
  return true;
}

bool oracle_union_contains(std::span<const Part> parts, const Vec3& x) {
  return std::any_of(parts.begin(), parts.end(), [&](const Part& p) { return oracle_contains(p, x); });
}

std::vector<Vec3> union_boundary_samples(std::span<const Part> parts, double spacing) {
  std::vector<Vec3> out;
  std::vector<Mat3> rot;
  for (const Part& p : parts) rot.push_back(oracle_rotation(p.rotation));
  auto strictly_inside = [&](std::size_t skip, const Vec3& x) {
    for (std::size_t q = 0; q < parts.size(); ++q) {
      if (q == skip) continue;
      const Vec3 local = rot[q].transpose() * (x - Vec3(parts[q].translation[0], parts[q].translation[1],
                                                        parts[q].translation[2]));
      bool inside = true;
      for (int k = 0; k < 3; ++k) inside = inside && std::abs(local[k]) < 0.5 * parts[q].size[k] - 1e-12;
      if (inside) return true;
    }
    return false;
  };
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Vec3 half(0.5 * parts[p].size[0], 0.5 * parts[p].size[1], 0.5 * parts[p].size[2]);
    const Vec3 t(parts[p].translation[0], parts[p].translation[1], parts[p].translation[2]);
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      const int nu = std::max(1, static_cast<int>(std::ceil(2.0 * half[u] / spacing)));
      const int nv = std::max(1, static_cast<int>(std::ceil(2.0 * half[v] / spacing)));
      for (int side = -1; side <= 1; side += 2) {
        for (int i = 0; i <= nu; ++i) {
          for (int j = 0; j <= nv; ++j) {
            Vec3 local;
            local[axis] = side * half[axis];
            local[u] = -half[u] + 2.0 * half[u] * i / nu;
            local[v] = -half[v] + 2.0 * half[v] * j / nv;
            const Vec3 x = rot[p] * local + t;
            if (!strictly_inside(p, x)) out.push_back(x);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace partgen::testing
