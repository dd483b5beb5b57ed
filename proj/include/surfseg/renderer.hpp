// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "surfseg/autodiff.hpp"
#include "surfseg/fields.hpp"
#include "surfseg/scene_io.hpp"

namespace surfseg {

// Section opacity from the SDF at both ends of a section:
// alpha = max(1 - Phi_b(f_next) / Phi_b(f_i), 0), Phi_b the logistic CDF with
// slope b. Evaluated as a log-space ratio.
double alpha_from_sdf(double f_i, double f_next, double b);

struct AlphaGrad {
  double alpha = 0.0;
  double d_fi = 0.0;
  double d_fnext = 0.0;
  double d_b = 0.0;
};
AlphaGrad alpha_from_sdf_grad(double f_i, double f_next, double b);

struct Accumulation {
  Vec3 color = Vec3::Zero();   // sum of w_i c_i
  double alpha = 0.0;          // sum of w_i
  std::vector<double> transmittance;
  std::vector<double> weights;
};

// Front-to-back accumulation of per-section alphas and colors.
Accumulation accumulate(std::span<const double> alphas, std::span<const Vec3> colors);

// Per-ray sample record (one entry per section start, plus the final point).
struct RaySamples {
  std::vector<double> t;
  std::vector<Vec3> positions;
  std::vector<double> sdf;
  std::vector<double> alpha;          // one per section: size t.size() - 1
  std::vector<double> transmittance;  // per section
  std::vector<double> weights;        // per section
};

// Builds the samples of a ray from point SDF values.
RaySamples make_ray_samples(const Ray& ray, std::span<const double> t, std::span<const double> sdf,
                            double b);

struct OccupancyConfig {
  int resolution = 128;
  double decay = 0.95;
  double threshold = 0.01;
  int update_period = 16;

  void validate() const;
};

// Occupancy cache over the FoCoR domain [-1,1]^3. Before the first update
// every voxel counts as occupied.
class OccupancyGrid {
 public:
  using SdfFn = std::function<std::vector<double>(const std::vector<Vec3>&)>;

  explicit OccupancyGrid(OccupancyConfig config = {});

  const OccupancyConfig& config() const { return config_; }
  int resolution() const { return config_.resolution; }
  double voxel_size() const { return 2.0 / config_.resolution; }
  double voxel_diagonal() const { return voxel_size() * std::sqrt(3.0); }
  Vec3 voxel_center(int i, int j, int k) const;
  std::vector<Vec3> voxel_centers() const;

  // densities <- max(decay * old, fresh) with fresh the alpha of a
  // voxel-diagonal step toward the surface at the current b, forced to 1
  // within two voxel diagonals of the zero level set. Negative voxels
  // connected to the unit-sphere boundary through negative neighbors are
  // also forced to 1.
  void update(const SdfFn& sdf, double b);

  bool initialized() const { return initialized_; }
  bool occupied(const Vec3& p) const;
  bool occupied_index(std::size_t index) const { return !initialized_ || flags_[index]; }
  std::size_t occupied_count() const;

  const std::vector<float>& densities() const { return densities_; }
  // Restores a saved state; flags are rederived from the densities.
  void set_state(std::vector<float> densities, bool initialized);

 private:
  void refresh_flags();

  OccupancyConfig config_;
  std::vector<float> densities_;
  std::vector<std::uint8_t> flags_;
  bool initialized_ = false;
};

// Fields as seen by the renderer. Implemented by the neural FieldSet and by
// analytic stand-ins in tests.
class RadianceField {
 public:
  virtual ~RadianceField() = default;
  virtual double sharpness() const = 0;
  // SDF per point and, when `colors` is non-null, RGB per point.
  // `overridden` (BaCo only) marks points forced transparent.
  virtual void evaluate(FieldKind kind, const std::vector<Vec3>& points,
                        const std::vector<Vec3>& directions,
                        const std::vector<std::uint8_t>* overridden, std::vector<double>& sdf,
                        std::vector<Vec3>* colors) const = 0;
};

class NeuralField final : public RadianceField {
 public:
  explicit NeuralField(const FieldSet& fields) : fields_(fields) {}
  double sharpness() const override { return surfseg::sharpness(fields_); }
  void evaluate(FieldKind kind, const std::vector<Vec3>& points,
                const std::vector<Vec3>& directions, const std::vector<std::uint8_t>* overridden,
                std::vector<double>& sdf, std::vector<Vec3>* colors) const override;

 private:
  const FieldSet& fields_;
};

// Sphere foreground with constant colors; the background is the outside of a
// sphere of radius `bg_radius` (transparent near the camera, opaque behind
// the foreground).
class AnalyticSphereField final : public RadianceField {
 public:
  double radius = 0.5;
  double b = 400.0;
  double bg_radius = 1.8;
  Vec3 fg_color = Vec3(1, 0, 0);
  Vec3 bg_color = Vec3(0, 0, 1);

  double sharpness() const override { return b; }
  void evaluate(FieldKind kind, const std::vector<Vec3>& points,
                const std::vector<Vec3>& directions, const std::vector<std::uint8_t>* overridden,
                std::vector<double>& sdf, std::vector<Vec3>* colors) const override;
};

struct RenderSettings {
  int n_focor = 128;
  int n_baco = 64;
  Vec3 horizon = Vec3::Constant(0.5);
  const OccupancyGrid* occupancy = nullptr;
  std::mt19937_64* jitter = nullptr;  // stratified offsets; section midpoints when null
};

// Sample layout of a ray batch. Points are stored per field in ray order;
// sections reference their two end points.
struct SamplePlan {
  int rays = 0;
  std::vector<Vec3> f_points, f_dirs;
  std::vector<double> f_t;
  std::vector<int> f_start, f_end;  // per section, indices into f_points
  std::vector<int> f_offset;        // rays + 1 offsets into sections
  std::vector<Vec3> b_points, b_dirs;
  std::vector<double> b_t;
  std::vector<std::uint8_t> b_overridden;
  std::vector<int> b_start, b_end;
  std::vector<int> b_offset;
  std::size_t f_candidate_sections = 0;
};

// `fg_region[r]` says whether ray r's pixel lies in the (dilated) coarse
// mask; BaCo points of such rays inside the unit sphere are overridden.
SamplePlan plan_samples(const std::vector<Ray>& rays, const std::vector<std::uint8_t>& fg_region,
                        const RenderSettings& settings, bool with_background = true);

struct CompositeResult {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
  Vec3 fg_color = Vec3::Zero();
  Vec3 bg_color = Vec3::Zero();
  double bg_weight = 0.0;
  bool used_horizon = true;
  int argmax_section = -1;  // FoCoR section with the largest weight
};

// C = C_F + (1 - A) * C_B with C_B the BaCo color normalized by its weight,
// or the horizon color when that weight is below 1e-4.
CompositeResult composite_ray(std::span<const double> f_alpha, std::span<const Vec3> f_color,
                              std::span<const double> b_alpha, std::span<const Vec3> b_color,
                              const Vec3& horizon);

inline constexpr double kMinBackgroundWeight = 1e-4;

struct PixelRender {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
  Vec3 fg_color = Vec3::Zero();
  Vec3 bg_color = Vec3::Zero();
  double depth = 0.0;  // t of the max-weight FoCoR section, 0 when none
  bool flagged_miss = false;  // ray misses both domains
};

struct RenderStats {
  std::size_t focor_points = 0;
  std::size_t baco_points = 0;
  std::size_t focor_sections = 0;
  std::size_t focor_candidate_sections = 0;
};

// Renders a batch of rays. With `alpha_only`, the background and all colors
// are skipped and only pixel alpha (and depth) is filled in.
std::vector<PixelRender> render_rays(const RadianceField& field, const std::vector<Ray>& rays,
                                     const std::vector<std::uint8_t>& fg_region,
                                     const RenderSettings& settings, bool alpha_only = false,
                                     RenderStats* stats = nullptr);

PixelRender render_pixel(const RadianceField& field, const Ray& ray, bool fg_region,
                         const RenderSettings& settings);

// Tape nodes for training.
template <class T>
struct RenderGraph {
  ad::Var rgba;  // m x 4: composite color and pixel alpha
  FieldGraph focor;
  FieldGraph baco;
  bool has_focor = false;
  bool has_baco = false;
};

// Records the full render of a planned batch: both fields with normals and
// colors, section alphas and the pixel-level composite.
template <class T>
RenderGraph<T> build_render_graph(ad::Tape<T>& tape, const FieldSet& fields, const SamplePlan& plan,
                                  const Vec3& horizon);

// Node computing per-section alphas from a point SDF column and b (1 x 1).
template <class T>
ad::Var alpha_node(ad::Tape<T>& tape, ad::Var sdf, ad::Var b, std::shared_ptr<const std::vector<int>> start,
                   std::shared_ptr<const std::vector<int>> end);

struct CompositeLayout {
  int rays = 0;
  std::vector<int> f_offset, b_offset;  // rays + 1 offsets into sections
  std::vector<int> f_color_row, b_color_row;  // per section, row of the point color matrix
  Vec3 horizon = Vec3::Constant(0.5);
};

// m x 4 composite node over per-section alphas and per-point colors.
template <class T>
ad::Var composite_node(ad::Tape<T>& tape, std::shared_ptr<const CompositeLayout> layout,
                       ad::Var f_alpha, ad::Var f_color, ad::Var b_alpha, ad::Var b_color);

}  // namespace surfseg
