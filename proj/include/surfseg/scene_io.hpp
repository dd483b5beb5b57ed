// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "surfseg/common.hpp"
#include "surfseg/image.hpp"

namespace surfseg {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  // Throws GeometryError when the invariants (positive focal lengths, principal
  // point inside the image) do not hold.
  void validate() const;
};

// World-to-camera rigid transform in the COLMAP convention (x right, y down,
// z forward).
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  void validate() const;
};

// Similarity that maps world coordinates into the normalized frame:
// q = scale * (p + translation).
struct NormTransform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (p + translation); }
  Vec3 invert(const Vec3& q) const { return q / scale - translation; }
  // Returns the transform equivalent to applying *this first, then `outer`.
  NormTransform then(const NormTransform& outer) const;
};

struct View {
  std::string name;
  Image image;  // H x W x 3
  CameraIntrinsics intrinsics;
  CameraPose pose;
  std::optional<Image> coarse_mask;  // H x W x 1, values in {0,1}
};

// A camera ray in the normalized frame. [t_near, t_far] is the foreground
// (unit sphere) segment; [bg_near, bg_far] is the background segment.
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 0.0;
  bool hits_foreground = false;
  double bg_near = 0.0;
  double bg_far = 0.0;
  bool hits_background = false;

  Vec3 at(double t) const { return origin + t * direction; }
};

// Half-width of the background box in normalized units.
inline constexpr double kBackgroundHalfExtent = 2.0;
// Upper clamp on the background far bound.
inline constexpr double kBackgroundFarClamp = 8.0;

// Builds a ray with foreground and background bounds from a normalized-frame
// origin and direction (normalized internally).
Ray make_ray(const Vec3& origin, const Vec3& direction);

struct SceneBundle {
  std::vector<View> views;
  std::vector<Vec3> sparse_points;  // world units
  NormTransform norm;
  Vec3 horizon_color = Vec3::Constant(0.5);

  bool has_masks() const;

  // Ray through the pixel center (px + 0.5, py + 0.5). Throws RangeError for
  // pixels outside the image.
  Ray pixel_ray(std::size_t view_index, double px, double py) const;

  // Projects a normalized-frame point to continuous pixel coordinates.
  std::optional<Eigen::Vector2d> project(std::size_t view_index, const Vec3& normalized) const;

  Vec3 camera_center(std::size_t view_index) const;
};

// Foreground bounding sphere: points inside a coarse mask in >= 2 views when
// masks exist (centered at their centroid), otherwise centered at the
// centroid of all points with the radius of the nearest 98%. The scale maps
// the radius to `margin`.
NormTransform compute_normalization(const std::vector<View>& views,
                                    const std::vector<Vec3>& sparse_points,
                                    double margin = 0.9);

// Per-channel median of all border pixels of all views.
Vec3 compute_horizon_color(const std::vector<View>& views);

// Reads cameras.txt / images.txt / points3D.txt from `sparse_dir`, images from
// `image_dir` and, when given, 8-bit gray masks named <image stem>.png from
// `mask_dir`.
SceneBundle load_colmap(const std::filesystem::path& sparse_dir,
                        const std::filesystem::path& image_dir,
                        const std::optional<std::filesystem::path>& mask_dir = std::nullopt);

// Writes the three COLMAP text files for `scene` (PINHOLE cameras, one per
// view). Images are not written.
void write_colmap(const std::filesystem::path& sparse_dir, const SceneBundle& scene);

}  // namespace surfseg
