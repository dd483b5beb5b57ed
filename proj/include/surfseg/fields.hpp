// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "surfseg/autodiff.hpp"
#include "surfseg/common.hpp"
#include "surfseg/hash_encoding.hpp"

namespace surfseg {

enum class FieldKind { kFocor, kBaco };

inline constexpr int kFocorGeoDim = 12;
inline constexpr int kBacoGeoDim = 7;
inline constexpr double kSoftplusBeta = 100.0;
inline constexpr double kOverrideSdf = 1.0;

inline int geo_dim(FieldKind kind) { return kind == FieldKind::kFocor ? kFocorGeoDim : kBacoGeoDim; }

struct FieldConfig {
  HashGridConfig focor_grid;
  HashGridConfig baco_grid;
  int hidden = 64;
  double init_radius = 0.5;       // FoCoR zero level set after init
  double baco_init_radius = 1.8;  // BaCo starts as the outside of this sphere
  double init_beta = 0.3;
  double normal_eps = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const FieldConfig&) const = default;
};

struct FieldOutput {
  double sdf = 0.0;
  Eigen::VectorXd geo_feature;
  Vec3 color = Vec3::Zero();
  double alpha_head = 0.0;  // FoCoR only
  Vec3 normal = Vec3::Zero();
};

// Parameter handles of one field.
struct FieldParams {
  ad::ParamId grid;
  ad::ParamId sdf_w0, sdf_b0, sdf_w1, sdf_b1;
  ad::ParamId rgb_w0, rgb_b0, rgb_w1, rgb_b1, rgb_w2, rgb_b2;
};

class FieldSet {
 public:
  explicit FieldSet(FieldConfig config = {});

  const FieldConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const HashGrid& grid(FieldKind kind) const {
    return kind == FieldKind::kFocor ? focor_grid_ : baco_grid_;
  }
  const FieldParams& ids(FieldKind kind) const {
    return kind == FieldKind::kFocor ? focor_ : baco_;
  }
  ad::ParamId beta_id() const { return beta_; }

  double beta() const;
  void set_beta(double beta);

  // Parameter count implied by the layer sizes.
  std::size_t expected_parameter_count() const;

 private:
  void geometric_init(FieldKind kind, std::uint64_t seed);

  FieldConfig config_;
  HashGrid focor_grid_;
  HashGrid baco_grid_;
  ad::ParamStore params_;
  FieldParams focor_;
  FieldParams baco_;
  ad::ParamId beta_;
};

// b = exp(10 * beta).
double sharpness(const FieldSet& fields);

// Axis-aligned domain box of each field in normalized units.
double domain_half_extent(FieldKind kind);

// Input dimensions of the two MLPs of a field.
int sdf_input_dim(const FieldSet& fields, FieldKind kind);
int rgb_input_dim(FieldKind kind);
int rgb_output_dim(FieldKind kind);

// Tape variables produced for a batch of points.
struct FieldGraph {
  ad::Var sdf;         // n x 1, after the BaCo override
  ad::Var geo;         // n x geo_dim
  ad::Var normals;     // n x 3 (valid when normals were requested)
  ad::Var color;       // n x 3 (valid when directions were given)
  ad::Var alpha_head;  // n x 1, FoCoR with color only
  bool has_normals = false;
  bool has_color = false;
};

// Central-difference stencil for FD normals. Rows of the stacked position
// matrix are [centers; +x; -x; +y; -y; +z; -z], where the six offset blocks
// hold one row per active center. `map` turns the stacked SDF column into
// n x 3 normals; inactive centers get a zero normal.
struct NormalStencil {
  int centers = 0;
  std::vector<int> active;
  double eps = 1e-3;
  std::shared_ptr<const ad::SparseMap> map;

  int stacked_rows() const { return centers + 6 * static_cast<int>(active.size()); }
  template <class T>
  ad::Matrix<T> stack(const ad::Matrix<T>& positions) const;
};

// `skip` (optional) marks centers that get no stencil.
NormalStencil make_normal_stencil(int centers, const std::vector<std::uint8_t>* skip, double eps);

template <class T>
struct FieldQuery {
  const ad::Matrix<T>* positions = nullptr;   // n x 3, normalized frame
  const ad::Matrix<T>* directions = nullptr;  // n x 3; color is computed when set
  const std::vector<std::uint8_t>* overridden = nullptr;  // BaCo: 1 = forced transparent
  bool normals = false;  // forced on when color is requested
};

// Records the field evaluation of a point batch on `tape`. Normals come from
// a 6-point central-difference stencil of the SDF network; overridden BaCo
// points get sdf = 1 and a zero normal.
template <class T>
FieldGraph build_field_graph(ad::Tape<T>& tape, const FieldSet& fields, FieldKind kind,
                             const FieldQuery<T>& query);

// Single-point evaluation. `p` is in the normalized frame and must lie in the
// field's domain box (DomainError otherwise).
FieldOutput focor_eval(const FieldSet& fields, const Vec3& p, const Vec3& v);
FieldOutput baco_eval(const FieldSet& fields, const Vec3& p, const Vec3& v, bool inside_fg_region);

// SDF values only, for many points, without normals or colors.
std::vector<double> sdf_values(const FieldSet& fields, FieldKind kind,
                               const std::vector<Vec3>& points);

}  // namespace surfseg
