// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/marching_cubes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "marching_cubes_tables.hpp"

namespace partgen {

Vec3 ScalarGrid::position(int i, int j, int k) const {
  return {lo.x() + i * spacing(0), lo.y() + j * spacing(1), lo.z() + k * spacing(2)};
}

ScalarGrid sample_grid(int cells, const Vec3& lo, const Vec3& hi,
                       const std::function<void(std::span<const Vec3>, std::span<float>)>& field,
                       std::size_t chunk) {
  if (cells < 1) throw std::invalid_argument("sample_grid: need at least one cell");
  if (chunk == 0) chunk = 1;
  ScalarGrid g;
  g.n = cells + 1;
  g.lo = lo;
  g.hi = hi;
  const std::size_t total = static_cast<std::size_t>(g.n) * g.n * g.n;
  g.values.resize(total);
  std::vector<Vec3> pts;
  pts.reserve(chunk);
  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t end = std::min(total, start + chunk);
    pts.clear();
    for (std::size_t idx = start; idx < end; ++idx) {
      const int i = static_cast<int>(idx % g.n);
      const int j = static_cast<int>((idx / g.n) % g.n);
      const int k = static_cast<int>(idx / (static_cast<std::size_t>(g.n) * g.n));
      pts.push_back(g.position(i, j, k));
    }
    field(pts, std::span<float>(g.values.data() + start, end - start));
  }
  return g;
}

TriangleMesh marching_cubes(const ScalarGrid& grid, double iso) {
  TriangleMesh mesh;
  const int n = grid.n;
  if (n < 2 || grid.values.size() != static_cast<std::size_t>(n) * n * n) {
    throw std::invalid_argument("marching_cubes: malformed grid");
  }
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto vertex_on = [&](int i, int j, int k, int e, const std::array<double, 8>& v) {
    const auto& a = mc::kCorner[mc::kEdgeCorners[e][0]];
    const auto& b = mc::kCorner[mc::kEdgeCorners[e][1]];
    std::array<int, 3> pa = {i + a[0], j + a[1], k + a[2]};
    std::array<int, 3> pb = {i + b[0], j + b[1], k + b[2]};
    double va = v[mc::kEdgeCorners[e][0]];
    double vb = v[mc::kEdgeCorners[e][1]];
    // Canonical orientation so both cells sharing the edge compute the same vertex.
    if (pb < pa) {
      std::swap(pa, pb);
      std::swap(va, vb);
    }
    int axis = 0;
    while (pa[axis] == pb[axis]) ++axis;
    const std::uint64_t key = grid.index(pa[0], pa[1], pa[2]) * 3 + static_cast<std::uint64_t>(axis);
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double denom = vb - va;
    double t = std::abs(denom) < 1e-300 ? 0.5 : (iso - va) / denom;
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 xa = grid.position(pa[0], pa[1], pa[2]);
    const Vec3 xb = grid.position(pb[0], pb[1], pb[2]);
    mesh.vertices.push_back(xa + t * (xb - xa));
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, id);
    return id;
  };

  std::array<double, 8> v{};
  for (int k = 0; k + 1 < n; ++k) {
    for (int j = 0; j + 1 < n; ++j) {
      for (int i = 0; i + 1 < n; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = grid.at(i + mc::kCorner[c][0], j + mc::kCorner[c][1], k + mc::kCorner[c][2]);
          if (v[c] < iso) cube |= 1 << c;
        }
        if (mc::kEdgeTable[cube] == 0) continue;
        std::array<int, 12> ids{};
        for (int e = 0; e < 12; ++e) {
          if ((mc::kEdgeTable[cube] & (1 << e)) != 0) ids[e] = vertex_on(i, j, k, e, v);
        }
        const auto& tri = mc::kTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          // With below-iso corners flagged, table order is counter-clockwise seen
          // from the low (outside) side.
          mesh.faces.push_back({ids[tri[t]], ids[tri[t + 1]], ids[tri[t + 2]]});
        }
      }
    }
  }
  return mesh;
}

double signed_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& f : mesh.faces) {
    v += mesh.vertices[f[0]].dot(mesh.vertices[f[1]].cross(mesh.vertices[f[2]]));
  }
  return v / 6.0;
}

void write_obj(const std::filesystem::path& file, const TriangleMesh& mesh) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  char buf[128];
  if (mesh.empty()) out << "# empty isosurface\n";
  for (const Vec3& p : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

TriangleMesh read_obj(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open mesh " + file.string());
  TriangleMesh mesh;
  std::vector<std::size_t> face_lines;  // source line of each face, for late index checks
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) fail("bad vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int raw = std::atoi(tok.c_str());
        const int i = raw < 0 ? static_cast<int>(mesh.vertices.size()) + raw : raw - 1;
        if (raw == 0 || i < 0) fail("bad face index");
        idx.push_back(i);
      }
      if (idx.size() < 3) fail("face with fewer than 3 vertices");
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) {
        mesh.faces.push_back({idx[0], idx[t], idx[t + 1]});
        face_lines.push_back(lineno);
      }
    }
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int i : mesh.faces[f]) {
      if (i >= static_cast<int>(mesh.vertices.size())) {
        throw std::runtime_error(file.string() + ":" + std::to_string(face_lines[f]) + ": face index out of range");
      }
    }
  }
  return mesh;
}

void write_grid(const std::filesystem::path& file, const ScalarGrid& grid) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  char buf[256];
  std::snprintf(buf, sizeof(buf), "PGGRID1\n%d %.17g %.17g %.17g %.17g %.17g %.17g\n", grid.n, grid.lo.x(),
                grid.lo.y(), grid.lo.z(), grid.hi.x(), grid.hi.y(), grid.hi.z());
  out << buf;
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

ScalarGrid read_grid(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open grid " + file.string());
  std::string magic, header;
  std::getline(in, magic);
  std::getline(in, header);
  if (magic != "PGGRID1") throw std::runtime_error(file.string() + ": not a grid dump");
  ScalarGrid g;
  std::istringstream hs(header);
  if (!(hs >> g.n >> g.lo.x() >> g.lo.y() >> g.lo.z() >> g.hi.x() >> g.hi.y() >> g.hi.z()) || g.n < 2) {
    throw std::runtime_error(file.string() + ": bad grid header");
  }
  g.values.resize(static_cast<std::size_t>(g.n) * g.n * g.n);
  in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(float)));
  if (!in) throw std::runtime_error(file.string() + ": truncated grid");
  return g;
}

}  // namespace partgen
