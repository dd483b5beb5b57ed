// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "surfseg/scene_io.hpp"

namespace surfseg {

// Descriptor of an analytic test scene: a textured primitive centered at the
// origin floating over a textured ground plane, seen by a ring of cameras that
// look at the origin. World frame is z-up.
struct SynthSpec {
  std::string primitive = "sphere";  // "sphere" or "box" (radius = half side)
  double radius = 0.5;
  int views = 12;
  double ring_radius = 3.0;  // camera distance from the origin
  int image_size = 128;
  std::uint64_t seed = 0;

  double elevation_deg = 35.0;
  double fov_deg = 30.0;
  double plane_height = -0.75;   // z of the ground plane
  double texture_extent = 1.0;   // textured square half-width on the plane
  bool coarse_masks = true;
  int sparse_points = 1500;

  static SynthSpec from_json_file(const std::filesystem::path& path);
  void save_json(const std::filesystem::path& path) const;
};

struct SynthScene {
  SceneBundle scene;
  std::vector<Image> gt_masks;        // H x W x 1, exact foreground coverage
  std::vector<Image> gt_backgrounds;  // H x W x 3, the scene with the primitive removed
};

// Renders the scene by analytic ray casting through pixel centers. Throws
// ContractError for a degenerate descriptor and GeometryError when the camera
// ring touches the primitive.
SynthScene synth_scene(const SynthSpec& spec);

// Distance along a world-space ray to the primitive, if it is hit.
std::optional<double> intersect_primitive(const SynthSpec& spec, const Vec3& origin,
                                          const Vec3& direction);

// Writes a scene directory: COLMAP text files, images/, masks/ (when the
// scene carries coarse masks) and gt_masks/.
void write_scene_dir(const std::filesystem::path& dir, const SynthScene& synth);

// Loads a scene directory in the layout written by write_scene_dir.
SceneBundle load_scene_dir(const std::filesystem::path& dir, bool with_masks = true);

}  // namespace surfseg
