// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace surfseg {
namespace {

constexpr double kPi = std::numbers::pi;
const Vec3 kGray(0.5, 0.5, 0.5);

struct Texture {
  double phase[6];
};

Texture make_texture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  Texture t{};
  for (double& p : t.phase) p = angle(rng);
  return t;
}

Vec3 primitive_normal(const SynthSpec& spec, const Vec3& p) {
  if (spec.primitive == "sphere") return p.normalized();
  int axis = 0;
  p.cwiseAbs().maxCoeff(&axis);
  Vec3 n = Vec3::Zero();
  n[axis] = p[axis] > 0.0 ? 1.0 : -1.0;
  return n;
}

Vec3 object_color(const SynthSpec& spec, const Texture& tex, const Vec3& p) {
  const double pattern = std::sin(7.0 * p.x() + tex.phase[0]) *
                         std::sin(7.0 * p.y() + tex.phase[1]) *
                         std::sin(7.0 * p.z() + tex.phase[2]);
  const Vec3 albedo = Vec3(0.85, 0.32, 0.22) + 0.12 * pattern * Vec3(1.0, 1.0, 0.6);
  const Vec3 light = Vec3(0.4, -0.3, 0.85).normalized();
  const double shade = 0.45 + 0.55 * std::max(0.0, primitive_normal(spec, p).dot(light));
  return (shade * albedo).cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 plane_color(const SynthSpec& spec, const Texture& tex, const Vec3& p) {
  if (std::abs(p.x()) > spec.texture_extent || std::abs(p.y()) > spec.texture_extent) {
    return kGray;
  }
  const double a = std::sin(2.0 * kPi * p.x() / 0.7 + tex.phase[3]);
  const double b = std::cos(2.0 * kPi * p.y() / 0.9 + tex.phase[4]);
  const Vec3 c = Vec3(0.25, 0.55, 0.5) + 0.15 * a * Vec3(1.0, 0.4, -0.6) +
                 0.12 * b * Vec3(-0.5, 0.5, 1.0);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

void validate(const SynthSpec& spec) {
  if (spec.views <= 0) throw ContractError("synthetic scene needs at least one view");
  if (spec.image_size <= 0) throw ContractError("image_size must be positive");
  if (!(spec.radius > 0.0)) throw ContractError("radius must be positive");
  if (spec.primitive != "sphere" && spec.primitive != "box") {
    throw ContractError("unknown primitive '" + spec.primitive + "'");
  }
  if (!(spec.fov_deg > 0.0 && spec.fov_deg < 180.0)) throw ContractError("fov_deg out of range");
  const double bound = spec.primitive == "sphere" ? spec.radius : spec.radius * std::sqrt(3.0);
  if (!(spec.ring_radius > bound)) {
    throw GeometryError("camera ring of radius " + std::to_string(spec.ring_radius) +
                        " intersects the primitive");
  }
  if (spec.plane_height >= -bound) {
    throw GeometryError("ground plane intersects the primitive");
  }
}

CameraPose look_at_origin(const Vec3& center) {
  const Vec3 forward = (-center).normalized();
  const Vec3 up = Vec3::UnitZ();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  CameraPose pose;
  pose.rotation.row(0) = right;
  pose.rotation.row(1) = down;
  pose.rotation.row(2) = forward;
  pose.translation = -pose.rotation * center;
  return pose;
}

std::vector<Vec3> surface_points(const SynthSpec& spec, std::mt19937_64& rng) {
  std::vector<Vec3> points;
  points.reserve(static_cast<std::size_t>(spec.sparse_points));
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_int_distribution<int> face(0, 5);
  for (int i = 0; i < spec.sparse_points; ++i) {
    if (spec.primitive == "sphere") {
      Vec3 d(gauss(rng), gauss(rng), gauss(rng));
      points.push_back(spec.radius * d.normalized());
    } else {
      const int f = face(rng);
      Vec3 p(uni(rng), uni(rng), uni(rng));
      p[f / 2] = (f % 2 == 0) ? 1.0 : -1.0;
      points.push_back(spec.radius * p);
    }
  }
  return points;
}

}  // namespace

std::optional<double> intersect_primitive(const SynthSpec& spec, const Vec3& origin,
                                          const Vec3& direction) {
  const Vec3 d = direction.normalized();
  if (spec.primitive == "sphere") {
    const double half_b = origin.dot(d);
    const double c = origin.squaredNorm() - spec.radius * spec.radius;
    const double disc = half_b * half_b - c;
    if (disc < 0.0) return std::nullopt;
    const double t = -half_b - std::sqrt(disc);
    if (t <= 0.0) return std::nullopt;
    return t;
  }
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-300) {
      if (std::abs(origin[axis]) > spec.radius) return std::nullopt;
      continue;
    }
    double ta = (-spec.radius - origin[axis]) / d[axis];
    double tb = (spec.radius - origin[axis]) / d[axis];
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
  }
  if (!(lo < hi) || lo <= 0.0) return std::nullopt;
  return lo;
}

SynthScene synth_scene(const SynthSpec& spec) {
  validate(spec);
  const Texture tex = make_texture(spec.seed);
  std::mt19937_64 rng(spec.seed ^ 0x5eedf00dULL);

  const int size = spec.image_size;
  CameraIntrinsics k;
  k.width = k.height = size;
  k.fx = k.fy = 0.5 * size / std::tan(0.5 * spec.fov_deg * kPi / 180.0);
  k.cx = k.cy = 0.5 * size;

  SynthScene out;
  const double elevation = spec.elevation_deg * kPi / 180.0;
  for (int v = 0; v < spec.views; ++v) {
    const double azimuth = 2.0 * kPi * v / spec.views;
    const Vec3 center = spec.ring_radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                                std::cos(elevation) * std::sin(azimuth),
                                                std::sin(elevation));
    View view;
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d.png", v);
    view.name = name;
    view.intrinsics = k;
    view.pose = look_at_origin(center);
    view.image = Image(size, size, 3);
    Image mask(size, size, 1);
    Image background(size, size, 3);
    const Mat3 cam_to_world = view.pose.rotation.transpose();
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const Vec3 d =
            (cam_to_world * Vec3((x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0))
                .normalized();
        Vec3 behind = kGray;
        if (d.z() < 0.0) {
          const double t_plane = (spec.plane_height - center.z()) / d.z();
          behind = plane_color(spec, tex, center + t_plane * d);
        }
        Vec3 color = behind;
        if (const auto t = intersect_primitive(spec, center, d)) {
          color = object_color(spec, tex, center + *t * d);
          mask.at(x, y) = 1.0f;
        }
        // Quantize to 8-bit levels so in-memory scenes match their PNG export.
        for (int c = 0; c < 3; ++c) {
          view.image.at(x, y, c) = static_cast<float>(std::lround(color[c] * 255.0)) / 255.0f;
          background.at(x, y, c) = static_cast<float>(std::lround(behind[c] * 255.0)) / 255.0f;
        }
      }
    }
    if (spec.coarse_masks) view.coarse_mask = mask;
    out.gt_masks.push_back(std::move(mask));
    out.gt_backgrounds.push_back(std::move(background));
    out.scene.views.push_back(std::move(view));
  }
  out.scene.sparse_points = surface_points(spec, rng);
  out.scene.norm = compute_normalization(out.scene.views, out.scene.sparse_points);
  out.scene.horizon_color = compute_horizon_color(out.scene.views);
  return out;
}

SynthSpec SynthSpec::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  SynthSpec s;
  try {
    s.primitive = j.value("primitive", s.primitive);
    s.radius = j.value("radius", s.radius);
    s.views = j.value("views", s.views);
    s.ring_radius = j.value("ring_radius", s.ring_radius);
    s.image_size = j.value("image_size", s.image_size);
    s.seed = j.value("seed", s.seed);
    s.elevation_deg = j.value("elevation_deg", s.elevation_deg);
    s.fov_deg = j.value("fov_deg", s.fov_deg);
    s.plane_height = j.value("plane_height", s.plane_height);
    s.texture_extent = j.value("texture_extent", s.texture_extent);
    s.coarse_masks = j.value("coarse_masks", s.coarse_masks);
    s.sparse_points = j.value("sparse_points", s.sparse_points);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return s;
}

void SynthSpec::save_json(const std::filesystem::path& path) const {
  nlohmann::json j = {{"primitive", primitive},       {"radius", radius},
                      {"views", views},               {"ring_radius", ring_radius},
                      {"image_size", image_size},     {"seed", seed},
                      {"elevation_deg", elevation_deg}, {"fov_deg", fov_deg},
                      {"plane_height", plane_height}, {"texture_extent", texture_extent},
                      {"coarse_masks", coarse_masks}, {"sparse_points", sparse_points}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_scene_dir(const std::filesystem::path& dir, const SynthScene& synth) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "gt_masks");
  write_colmap(dir, synth.scene);
  const bool masks = synth.scene.has_masks();
  if (masks) fs::create_directories(dir / "masks");
  for (std::size_t i = 0; i < synth.scene.views.size(); ++i) {
    const View& v = synth.scene.views[i];
    write_png(dir / "images" / v.name, v.image);
    const std::string stem = fs::path(v.name).stem().string() + ".png";
    write_png(dir / "gt_masks" / stem, synth.gt_masks[i]);
    if (v.coarse_mask) write_png(dir / "masks" / stem, *v.coarse_mask);
  }
}

SceneBundle load_scene_dir(const std::filesystem::path& dir, bool with_masks) {
  std::optional<std::filesystem::path> masks;
  if (with_masks && std::filesystem::is_directory(dir / "masks")) masks = dir / "masks";
  return load_colmap(dir, dir / "images", masks);
}

}  // namespace surfseg
