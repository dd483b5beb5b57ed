// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

#include "surfseg/common.hpp"
#include "surfseg/fields.hpp"
#include "surfseg/scene_io.hpp"

namespace surfseg {

struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  double area() const;
  // Every undirected edge is shared by exactly two triangles.
  bool watertight() const;
  // Signed enclosed volume (positive for outward-facing triangles).
  double signed_volume() const;
};

// Batched SDF evaluation in the normalized frame.
using SdfBatchFn = std::function<std::vector<double>(const std::vector<Vec3>&)>;

// Marching cubes over [-1,1]^3 with `resolution` cells per axis. Vertices
// are mapped through norm.invert. Throws GeometryError("no surface found")
// when the zero-level set misses the grid, ContractError when resolution < 8.
SurfaceMesh extract_mesh(const SdfBatchFn& sdf, int resolution, const NormTransform& norm = {});
SurfaceMesh extract_mesh(const FieldSet& fields, int resolution, const NormTransform& norm = {});

void write_obj(const std::filesystem::path& path, const SurfaceMesh& mesh);

// Symmetric Hausdorff distance between the vertex sets.
double hausdorff_distance(const SurfaceMesh& a, const SurfaceMesh& b);

}  // namespace surfseg
