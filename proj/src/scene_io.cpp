// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace surfseg {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw GeometryError("focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw GeometryError("image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw GeometryError("principal point outside the image");
  }
}

void CameraPose::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6 || std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw GeometryError("camera rotation is not a proper rotation");
  }
}

NormTransform NormTransform::then(const NormTransform& outer) const {
  // outer(this(p)) = s2 * (s1 * (p + t1) + t2) = s1 s2 * (p + t1 + t2 / s1)
  NormTransform out;
  out.scale = scale * outer.scale;
  out.translation = translation + outer.translation / scale;
  return out;
}

Ray make_ray(const Vec3& origin, const Vec3& direction) {
  Ray ray;
  ray.origin = origin;
  ray.direction = direction.normalized();
  const Vec3& o = ray.origin;
  const Vec3& d = ray.direction;

  // Unit sphere.
  const double half_b = o.dot(d);
  const double c = o.squaredNorm() - 1.0;
  const double disc = half_b * half_b - c;
  if (disc > 0.0) {
    const double root = std::sqrt(disc);
    const double t0 = -half_b - root;
    const double t1 = -half_b + root;
    if (t1 > 0.0) {
      ray.t_near = std::max(t0, 0.0);
      ray.t_far = t1;
      ray.hits_foreground = ray.t_near < ray.t_far;
    }
  }

  // Background box, capped at twice the distance to the sphere exit (or to
  // the point of closest approach for rays that miss it).
  const double reference = ray.hits_foreground ? ray.t_far : std::max(-half_b, 0.0);
  const double t_cap = std::min(2.0 * reference, kBackgroundFarClamp);
  double lo = 0.0;
  double hi = t_cap;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-300) {
      if (std::abs(o[axis]) > kBackgroundHalfExtent) {
        lo = 1.0;
        hi = 0.0;
      }
      continue;
    }
    double ta = (-kBackgroundHalfExtent - o[axis]) / d[axis];
    double tb = (kBackgroundHalfExtent - o[axis]) / d[axis];
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
  }
  if (lo < hi) {
    ray.bg_near = lo;
    ray.bg_far = hi;
    ray.hits_background = true;
  }
  return ray;
}

bool SceneBundle::has_masks() const {
  return std::any_of(views.begin(), views.end(),
                     [](const View& v) { return v.coarse_mask.has_value(); });
}

Vec3 SceneBundle::camera_center(std::size_t view_index) const {
  return norm.apply(views.at(view_index).pose.center());
}

Ray SceneBundle::pixel_ray(std::size_t view_index, double px, double py) const {
  if (view_index >= views.size()) {
    throw RangeError("view index " + std::to_string(view_index) + " out of range");
  }
  const View& view = views[view_index];
  const CameraIntrinsics& k = view.intrinsics;
  if (!(px >= 0.0 && px < k.width && py >= 0.0 && py < k.height)) {
    throw RangeError("pixel (" + std::to_string(px) + ", " + std::to_string(py) +
                     ") outside " + std::to_string(k.width) + "x" + std::to_string(k.height));
  }
  const Vec3 d_cam((px + 0.5 - k.cx) / k.fx, (py + 0.5 - k.cy) / k.fy, 1.0);
  const Vec3 d_world = view.pose.rotation.transpose() * d_cam;
  return make_ray(norm.apply(view.pose.center()), d_world);
}

std::optional<Eigen::Vector2d> SceneBundle::project(std::size_t view_index,
                                                    const Vec3& normalized) const {
  const View& view = views.at(view_index);
  const Vec3 cam = view.pose.to_camera(norm.invert(normalized));
  if (cam.z() <= 1e-12) return std::nullopt;
  const CameraIntrinsics& k = view.intrinsics;
  return Eigen::Vector2d(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy);
}

namespace {

NormTransform sphere_to_transform(const std::vector<Vec3>& points, double margin) {
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  double radius = 0.0;
  for (const Vec3& p : points) radius = std::max(radius, (p - centroid).norm());
  if (!(radius > 0.0)) {
    throw GeometryError("degenerate sparse point cloud (zero extent)");
  }
  NormTransform t;
  t.scale = margin / radius;
  t.translation = -centroid;
  return t;
}

bool inside_mask(const View& view, const Vec3& world) {
  const Vec3 cam = view.pose.to_camera(world);
  if (cam.z() <= 1e-12) return false;
  const CameraIntrinsics& k = view.intrinsics;
  const double u = k.fx * cam.x() / cam.z() + k.cx;
  const double v = k.fy * cam.y() / cam.z() + k.cy;
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) return false;
  return view.coarse_mask->at(static_cast<int>(u), static_cast<int>(v)) > 0.5f;
}

}  // namespace

NormTransform compute_normalization(const std::vector<View>& views,
                                    const std::vector<Vec3>& sparse_points, double margin) {
  if (sparse_points.empty()) {
    throw GeometryError("no sparse points to normalize the scene");
  }
  const bool masks = std::any_of(views.begin(), views.end(),
                                 [](const View& v) { return v.coarse_mask.has_value(); });
  if (masks) {
    std::vector<Vec3> kept;
    for (const Vec3& p : sparse_points) {
      int hits = 0;
      for (const View& view : views) {
        if (view.coarse_mask && inside_mask(view, p) && ++hits >= 2) break;
      }
      if (hits >= 2) kept.push_back(p);
    }
    if (!kept.empty()) return sphere_to_transform(kept, margin);
  }

  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : sparse_points) centroid += p;
  centroid /= static_cast<double>(sparse_points.size());
  std::vector<std::pair<double, std::size_t>> by_distance;
  by_distance.reserve(sparse_points.size());
  for (std::size_t i = 0; i < sparse_points.size(); ++i) {
    by_distance.emplace_back((sparse_points[i] - centroid).squaredNorm(), i);
  }
  std::sort(by_distance.begin(), by_distance.end());
  const std::size_t drop = sparse_points.size() * 2 / 100;
  const double radius = std::sqrt(by_distance[by_distance.size() - drop - 1].first);
  if (!(radius > 0.0)) throw GeometryError("sparse points are degenerate");
  NormTransform t;
  t.scale = margin / radius;
  t.translation = -centroid;
  return t;
}

Vec3 compute_horizon_color(const std::vector<View>& views) {
  std::vector<float> channel[3];
  for (const View& view : views) {
    const Image& img = view.image;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (x != 0 && y != 0 && x != img.width - 1 && y != img.height - 1) continue;
        for (int c = 0; c < 3; ++c) channel[c].push_back(img.at(x, y, c));
      }
    }
  }
  Vec3 out = Vec3::Constant(0.5);
  for (int c = 0; c < 3; ++c) {
    auto& values = channel[c];
    if (values.empty()) continue;
    auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    out[c] = *mid;
  }
  return out;
}

namespace {

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  // Next non-empty, non-comment line.
  bool next_record(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  }

  // The raw next line (may be empty); false at end of file.
  bool next_raw(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(path_.filename().string() + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  int line_no_ = 0;
};

struct ColmapCamera {
  CameraIntrinsics intrinsics;
};

std::map<long, ColmapCamera> read_cameras(const std::filesystem::path& path) {
  LineReader reader(path);
  std::map<long, ColmapCamera> cameras;
  std::string line;
  while (reader.next_record(line)) {
    std::istringstream ss(line);
    long id = 0;
    std::string model;
    int width = 0;
    int height = 0;
    if (!(ss >> id >> model >> width >> height)) reader.fail("malformed camera line");
    std::vector<double> params;
    double value = 0.0;
    while (ss >> value) params.push_back(value);
    if (!ss.eof()) reader.fail("malformed camera parameters");
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    if (model == "SIMPLE_PINHOLE") {
      if (params.size() != 3) reader.fail("SIMPLE_PINHOLE expects 3 parameters");
      k.fx = k.fy = params[0];
      k.cx = params[1];
      k.cy = params[2];
    } else if (model == "PINHOLE") {
      if (params.size() != 4) reader.fail("PINHOLE expects 4 parameters");
      k.fx = params[0];
      k.fy = params[1];
      k.cx = params[2];
      k.cy = params[3];
    } else {
      throw UnsupportedModelError(path.filename().string() + ": unsupported camera model " + model +
                                  " (only PINHOLE and SIMPLE_PINHOLE)");
    }
    try {
      k.validate();
    } catch (const GeometryError& e) {
      reader.fail(e.what());
    }
    if (!cameras.emplace(id, ColmapCamera{k}).second) reader.fail("duplicate camera id");
  }
  return cameras;
}

struct ColmapImage {
  long camera_id = 0;
  CameraPose pose;
  std::string name;
};

std::vector<ColmapImage> read_images(const std::filesystem::path& path) {
  LineReader reader(path);
  std::vector<ColmapImage> images;
  std::string line;
  while (reader.next_record(line)) {
    std::istringstream ss(line);
    long id = 0;
    double qw = 0, qx = 0, qy = 0, qz = 0, tx = 0, ty = 0, tz = 0;
    ColmapImage img;
    if (!(ss >> id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> img.camera_id >> img.name)) {
      reader.fail("malformed image line");
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!(q.norm() > 0.0)) reader.fail("zero quaternion");
    img.pose.rotation = q.normalized().toRotationMatrix();
    img.pose.translation = Vec3(tx, ty, tz);
    images.push_back(std::move(img));
    // Observation line; its content is not used.
    std::string points;
    reader.next_raw(points);
  }
  return images;
}

std::vector<Vec3> read_points(const std::filesystem::path& path) {
  LineReader reader(path);
  std::vector<Vec3> points;
  std::string line;
  while (reader.next_record(line)) {
    std::istringstream ss(line);
    long id = 0;
    double x = 0, y = 0, z = 0;
    if (!(ss >> id >> x >> y >> z)) reader.fail("malformed point line");
    points.emplace_back(x, y, z);
  }
  return points;
}

}  // namespace

SceneBundle load_colmap(const std::filesystem::path& sparse_dir,
                        const std::filesystem::path& image_dir,
                        const std::optional<std::filesystem::path>& mask_dir) {
  const auto cameras = read_cameras(sparse_dir / "cameras.txt");
  const auto images = read_images(sparse_dir / "images.txt");
  if (images.empty()) throw ParseError("images.txt: no registered views");

  SceneBundle scene;
  scene.sparse_points = read_points(sparse_dir / "points3D.txt");
  for (const ColmapImage& entry : images) {
    const auto cam = cameras.find(entry.camera_id);
    if (cam == cameras.end()) {
      throw ParseError("images.txt: image " + entry.name + " references unknown camera " +
                       std::to_string(entry.camera_id));
    }
    View view;
    view.name = entry.name;
    view.intrinsics = cam->second.intrinsics;
    view.pose = entry.pose;
    view.image = read_png(image_dir / entry.name, 3);
    if (view.image.width != view.intrinsics.width || view.image.height != view.intrinsics.height) {
      throw DimensionError(entry.name + ": image is " + std::to_string(view.image.width) + "x" +
                           std::to_string(view.image.height) + ", camera expects " +
                           std::to_string(view.intrinsics.width) + "x" +
                           std::to_string(view.intrinsics.height));
    }
    if (mask_dir) {
      const auto mask_path =
          *mask_dir / (std::filesystem::path(entry.name).stem().string() + ".png");
      if (std::filesystem::exists(mask_path)) {
        Image mask = read_png(mask_path, 1);
        if (mask.width != view.intrinsics.width || mask.height != view.intrinsics.height) {
          throw DimensionError(mask_path.filename().string() + ": mask is " +
                               std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                               ", camera expects " + std::to_string(view.intrinsics.width) + "x" +
                               std::to_string(view.intrinsics.height));
        }
        for (float& v : mask.data) v = std::lround(v * 255.0f) >= 128 ? 1.0f : 0.0f;
        view.coarse_mask = std::move(mask);
      }
    }
    scene.views.push_back(std::move(view));
  }
  scene.norm = compute_normalization(scene.views, scene.sparse_points);
  scene.horizon_color = compute_horizon_color(scene.views);
  return scene;
}

void write_colmap(const std::filesystem::path& sparse_dir, const SceneBundle& scene) {
  std::filesystem::create_directories(sparse_dir);
  auto open = [&](const char* name) {
    std::ofstream out(sparse_dir / name);
    if (!out) throw IoError("cannot write " + (sparse_dir / name).string());
    out.precision(17);
    return out;
  };
  {
    auto out = open("cameras.txt");
    out << "# Camera list with one line of data per camera:\n"
        << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
      const CameraIntrinsics& k = scene.views[i].intrinsics;
      out << i + 1 << " PINHOLE " << k.width << ' ' << k.height << ' ' << k.fx << ' ' << k.fy
          << ' ' << k.cx << ' ' << k.cy << '\n';
    }
  }
  {
    auto out = open("images.txt");
    out << "# Image list with two lines of data per image:\n"
        << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
        << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
      const View& v = scene.views[i];
      const Eigen::Quaterniond q(v.pose.rotation);
      const Vec3& t = v.pose.translation;
      out << i + 1 << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << t.x()
          << ' ' << t.y() << ' ' << t.z() << ' ' << i + 1 << ' ' << v.name << "\n\n";
    }
  }
  {
    auto out = open("points3D.txt");
    out << "# 3D point list with one line of data per point:\n"
        << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[]\n";
    for (std::size_t i = 0; i < scene.sparse_points.size(); ++i) {
      const Vec3& p = scene.sparse_points[i];
      out << i + 1 << ' ' << p.x() << ' ' << p.y() << ' ' << p.z() << " 128 128 128 0\n";
    }
  }
}

}  // namespace surfseg
