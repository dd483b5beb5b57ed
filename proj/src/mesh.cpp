// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include "surfseg/parallel.hpp"

namespace surfseg {

namespace {

#include "marching_cubes_tables.inc"

// Corner offsets (x, y, z) in table order.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                               {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

double SurfaceMesh::area() const {
  double total = 0.0;
  for (const auto& t : triangles) total += triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
  return total;
}

bool SurfaceMesh::watertight() const {
  if (triangles.empty()) return false;
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  return std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.second == 2; });
}

double SurfaceMesh::signed_volume() const {
  double v = 0.0;
  for (const auto& t : triangles) {
    v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]])) / 6.0;
  }
  return v;
}

SurfaceMesh extract_mesh(const SdfBatchFn& sdf, int resolution, const NormTransform& norm) {
  if (resolution < 8) throw ContractError("mesh resolution must be >= 8");
  const int n = resolution + 1;
  const double h = 2.0 / resolution;
  auto index = [n](int i, int j, int k) {
    return (static_cast<std::size_t>(k) * n + j) * n + i;
  };
  auto point = [h](int i, int j, int k) { return Vec3(-1.0 + i * h, -1.0 + j * h, -1.0 + k * h); };

  std::vector<Vec3> grid(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) grid[index(i, j, k)] = point(i, j, k);
  const std::vector<double> values = sdf(grid);
  if (values.size() != grid.size()) throw ContractError("sdf returned the wrong number of values");

  SurfaceMesh mesh;
  // Welded vertices keyed by (grid point index, axis).
  std::unordered_map<std::size_t, int> welded;
  auto edge_vertex = [&](int i0, int j0, int k0, int i1, int j1, int k1) {
    std::size_t a = index(i0, j0, k0), b = index(i1, j1, k1);
    if (a > b) std::swap(a, b);
    const int axis = (i0 != i1) ? 0 : (j0 != j1) ? 1 : 2;
    const std::size_t key = a * 3 + axis;
    if (auto it = welded.find(key); it != welded.end()) return it->second;
    const double fa = values[a], fb = values[b];
    double t = fa / (fa - fb);
    t = std::clamp(t, 1e-6, 1.0 - 1e-6);
    const Vec3 p = grid[a] + t * (grid[b] - grid[a]);
    mesh.vertices.push_back(norm.invert(p));
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    welded.emplace(key, id);
    return id;
  };

  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          if (values[index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])] < 0.0) cube |= 1 << c;
        }
        if (kEdgeTable[cube] == 0) continue;
        int ids[12];
        for (int e = 0; e < 12; ++e) {
          if (!(kEdgeTable[cube] & (1 << e))) continue;
          const int* c0 = kCorner[kEdge[e][0]];
          const int* c1 = kCorner[kEdge[e][1]];
          ids[e] = edge_vertex(i + c0[0], j + c0[1], k + c0[2], i + c1[0], j + c1[1], k + c1[2]);
        }
        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          std::array<int, 3> tri{ids[kTriTable[cube][t]], ids[kTriTable[cube][t + 1]],
                                 ids[kTriTable[cube][t + 2]]};
          if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
          if (triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]) <= 1e-12) continue;
          mesh.triangles.push_back(tri);
        }
      }
    }
  }
  if (mesh.triangles.empty()) throw GeometryError("no surface found");
  return mesh;
}

SurfaceMesh extract_mesh(const FieldSet& fields, int resolution, const NormTransform& norm) {
  return extract_mesh(
      [&fields](const std::vector<Vec3>& pts) { return sdf_values(fields, FieldKind::kFocor, pts); },
      resolution, norm);
}

void write_obj(const std::filesystem::path& path, const SurfaceMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(9);
  out << "# surfseg mesh: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
      << " triangles\n";
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

// One-sided distance via a uniform bucket grid over `to`.
double directed_hausdorff(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  Vec3 lo = to.front(), hi = to.front();
  for (const auto& p : to) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double cell = std::max((hi - lo).maxCoeff() / 64.0, 1e-9);
  auto key = [&](const Vec3& p) {
    const Eigen::Vector3i c = ((p - lo) / cell).array().floor().cast<int>();
    return std::array<int, 3>{c.x(), c.y(), c.z()};
  };
  std::map<std::array<int, 3>, std::vector<int>> buckets;
  for (int i = 0; i < static_cast<int>(to.size()); ++i) buckets[key(to[i])].push_back(i);

  std::vector<double> best(from.size());
  parallel_for(0, from.size(), 1024, [&](std::size_t b, std::size_t e) {
    for (std::size_t q = b; q < e; ++q) {
      const auto c = key(from[q]);
      double d2 = std::numeric_limits<double>::infinity();
      // Grow the search shell until the nearest candidate is provably found.
      for (int r = 0;; ++r) {
        for (int dz = -r; dz <= r; ++dz)
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
              auto it = buckets.find({c[0] + dx, c[1] + dy, c[2] + dz});
              if (it == buckets.end()) continue;
              for (int i : it->second) d2 = std::min(d2, (to[i] - from[q]).squaredNorm());
            }
        if (std::isfinite(d2) && std::sqrt(d2) <= r * cell) break;
        if (r > 200) break;
      }
      best[q] = std::sqrt(d2);
    }
  });
  return *std::max_element(best.begin(), best.end());
}

}  // namespace

double hausdorff_distance(const SurfaceMesh& a, const SurfaceMesh& b) {
  if (a.vertices.empty() || b.vertices.empty()) throw ContractError("hausdorff distance of an empty mesh");
  return std::max(directed_hausdorff(a.vertices, b.vertices), directed_hausdorff(b.vertices, a.vertices));
}

}  // namespace surfseg
