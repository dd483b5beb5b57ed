// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/fields.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <random>

#include "surfseg/parallel.hpp"

namespace surfseg {

using ad::Matrix;
using ad::ParamId;
using ad::Tape;
using ad::Var;

void FieldConfig::validate() const {
  focor_grid.validate();
  baco_grid.validate();
  if (hidden < 1) throw ContractError("hidden width must be >= 1");
  if (!(init_radius > 0.0 && init_radius < 1.0)) {
    throw ContractError("init_radius must lie in (0, 1)");
  }
  if (!(baco_init_radius > 1.0)) throw ContractError("baco_init_radius must exceed 1");
  if (!(normal_eps > 0.0)) throw ContractError("normal_eps must be positive");
}

double domain_half_extent(FieldKind kind) {
  return kind == FieldKind::kFocor ? 1.0 : 2.0;
}

int sdf_input_dim(const FieldSet& fields, FieldKind kind) {
  return 3 + fields.grid(kind).output_dim();
}

int rgb_input_dim(FieldKind kind) { return 3 + 3 + 3 + 1 + geo_dim(kind); }

int rgb_output_dim(FieldKind kind) { return kind == FieldKind::kFocor ? 4 : 3; }

namespace {

// Positions seen by the MLPs: the domain box scaled to [-1,1]^3.
template <class T>
Matrix<T> mlp_position(const Matrix<T>& p, FieldKind kind) {
  return p / static_cast<T>(domain_half_extent(kind));
}

// Positions seen by the hash grid: the domain box mapped to [0,1]^3.
template <class T>
Matrix<T> grid_position(const Matrix<T>& p, FieldKind kind) {
  const T h = static_cast<T>(domain_half_extent(kind));
  return ((p.array() + h) / (T(2) * h)).matrix();
}

std::vector<Vec3> fibonacci_directions(int n) {
  std::vector<Vec3> dirs(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - 2.0 * (k + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    dirs[k] = Vec3(r * std::cos(golden * k), r * std::sin(golden * k), z);
  }
  return dirs;
}

double softplus(double x, double beta) {
  const double z = beta * x;
  return z > 20.0 ? x : std::log1p(std::exp(z)) / beta;
}

void fill_normal(std::vector<float>& values, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (float& v : values) v = static_cast<float>(dist(rng));
}

}  // namespace

FieldSet::FieldSet(FieldConfig config)
    : config_(config), focor_grid_(config.focor_grid), baco_grid_(config.baco_grid) {
  config_.validate();
  const int h = config_.hidden;
  auto add_field = [&](const std::string& prefix, FieldKind kind) {
    FieldParams ids;
    const HashGrid& g = grid(kind);
    ids.grid = params_.add(prefix + ".grid", 1, static_cast<int>(g.table_floats()));
    ids.sdf_w0 = params_.add(prefix + ".sdf.w0", h, 3 + g.output_dim());
    ids.sdf_b0 = params_.add(prefix + ".sdf.b0", 1, h);
    ids.sdf_w1 = params_.add(prefix + ".sdf.w1", 1 + geo_dim(kind), h);
    ids.sdf_b1 = params_.add(prefix + ".sdf.b1", 1, 1 + geo_dim(kind));
    ids.rgb_w0 = params_.add(prefix + ".rgb.w0", h, rgb_input_dim(kind));
    ids.rgb_b0 = params_.add(prefix + ".rgb.b0", 1, h);
    ids.rgb_w1 = params_.add(prefix + ".rgb.w1", h, h);
    ids.rgb_b1 = params_.add(prefix + ".rgb.b1", 1, h);
    ids.rgb_w2 = params_.add(prefix + ".rgb.w2", rgb_output_dim(kind), h);
    ids.rgb_b2 = params_.add(prefix + ".rgb.b2", 1, rgb_output_dim(kind));
    return ids;
  };
  focor_ = add_field("focor", FieldKind::kFocor);
  baco_ = add_field("baco", FieldKind::kBaco);
  beta_ = params_.add("beta", 1, 1, static_cast<float>(config_.init_beta));

  geometric_init(FieldKind::kFocor, config_.seed * 2 + 1);
  geometric_init(FieldKind::kBaco, config_.seed * 2 + 2);
}

void FieldSet::geometric_init(FieldKind kind, std::uint64_t seed) {
  const FieldParams& id = ids(kind);
  const int h = config_.hidden;
  const int enc = grid(kind).output_dim();
  std::mt19937_64 rng(seed);

  params_[id.grid].values = grid(kind).init_table(rng());

  // First layer: unit directions on the position inputs, small random weights
  // on the encoding inputs, zero bias.
  auto& w0 = params_[id.sdf_w0].values;
  const auto dirs = fibonacci_directions(h);
  std::normal_distribution<double> enc_dist(0.0, std::sqrt(2.0 / h));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < 3; ++c) w0[r * (3 + enc) + c] = static_cast<float>(dirs[r][c]);
    for (int c = 0; c < enc; ++c) w0[r * (3 + enc) + 3 + c] = static_cast<float>(enc_dist(rng));
  }

  // Output layer: the SDF row is a least-squares fit of the target sphere SDF
  // on the hidden activations; geometry features start as small random
  // combinations.
  const int samples = 4096;
  const double half = domain_half_extent(kind);
  std::uniform_real_distribution<double> unif(-half, half);
  Eigen::MatrixXd design(samples, h + 1);
  Eigen::VectorXd target(samples);
  for (int s = 0; s < samples; ++s) {
    const Vec3 p(unif(rng), unif(rng), unif(rng));
    const Vec3 x = p / half;
    for (int r = 0; r < h; ++r) {
      double pre = 0.0;
      for (int c = 0; c < 3; ++c) pre += double(w0[r * (3 + enc) + c]) * x[c];
      design(s, r) = softplus(pre, kSoftplusBeta);
    }
    design(s, h) = 1.0;
    target[s] = kind == FieldKind::kFocor ? p.norm() - config_.init_radius
                                          : config_.baco_init_radius - p.norm();
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);

  auto& w1 = params_[id.sdf_w1].values;
  auto& b1 = params_[id.sdf_b1].values;
  fill_normal(w1, rng, 1.0 / std::sqrt(double(h)));
  for (int r = 0; r < h; ++r) w1[r] = static_cast<float>(coef[r]);
  b1[0] = static_cast<float>(coef[h]);

  fill_normal(params_[id.rgb_w0].values, rng, std::sqrt(2.0 / rgb_input_dim(kind)));
  fill_normal(params_[id.rgb_w1].values, rng, std::sqrt(2.0 / h));
  fill_normal(params_[id.rgb_w2].values, rng, std::sqrt(1.0 / h));
}

double FieldSet::beta() const { return params_[beta_].values[0]; }

void FieldSet::set_beta(double beta) { params_[beta_].values[0] = static_cast<float>(beta); }

std::size_t FieldSet::expected_parameter_count() const {
  const std::size_t h = config_.hidden;
  std::size_t total = 1;  // beta
  for (FieldKind kind : {FieldKind::kFocor, FieldKind::kBaco}) {
    const std::size_t in = 3 + grid(kind).output_dim();
    const std::size_t geo = 1 + geo_dim(kind);
    const std::size_t rin = rgb_input_dim(kind);
    const std::size_t rout = rgb_output_dim(kind);
    total += grid(kind).table_floats();
    total += h * in + h + geo * h + geo;
    total += h * rin + h + h * h + h + rout * h + rout;
  }
  return total;
}

double sharpness(const FieldSet& fields) { return std::exp(10.0 * fields.beta()); }

NormalStencil make_normal_stencil(int centers, const std::vector<std::uint8_t>* skip,
                                  double eps) {
  if (skip && static_cast<int>(skip->size()) != centers) {
    throw ContractError("normal stencil: skip mask size mismatch");
  }
  NormalStencil st;
  st.centers = centers;
  st.eps = eps;
  for (int k = 0; k < centers; ++k) {
    if (!skip || !(*skip)[k]) st.active.push_back(k);
  }
  const int na = static_cast<int>(st.active.size());
  auto map = std::make_shared<ad::SparseMap>();
  map->out_rows = centers;
  map->out_cols = 3;
  map->terms.reserve(6 * na);
  const double inv = 1.0 / (2.0 * eps);
  for (int axis = 0; axis < 3; ++axis) {
    const int plus = centers + (2 * axis) * na;
    const int minus = centers + (2 * axis + 1) * na;
    for (int j = 0; j < na; ++j) {
      map->terms.push_back({st.active[j], axis, plus + j, 0, inv});
      map->terms.push_back({st.active[j], axis, minus + j, 0, -inv});
    }
  }
  st.map = std::move(map);
  return st;
}

template <class T>
Matrix<T> NormalStencil::stack(const Matrix<T>& positions) const {
  const int na = static_cast<int>(active.size());
  Matrix<T> out(stacked_rows(), 3);
  out.topRows(centers) = positions;
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign = 0; sign < 2; ++sign) {
      const int base = centers + (2 * axis + sign) * na;
      const T delta = static_cast<T>(sign == 0 ? eps : -eps);
      for (int j = 0; j < na; ++j) {
        out.row(base + j) = positions.row(active[j]);
        out(base + j, axis) += delta;
      }
    }
  }
  return out;
}

template Matrix<float> NormalStencil::stack(const Matrix<float>&) const;
template Matrix<double> NormalStencil::stack(const Matrix<double>&) const;

namespace {

// Hash-grid lookup of every row as a leaf node whose backward writes straight
// into the table gradient.
template <class T>
Var encode_node(Tape<T>& tape, const FieldSet& fields, FieldKind kind, const Matrix<T>& positions) {
  const HashGrid& grid = fields.grid(kind);
  const ParamId table_id = fields.ids(kind).grid;
  const auto& table = fields.params()[table_id].values;
  auto u = std::make_shared<Matrix<T>>(grid_position(positions, kind));
  Matrix<T> out(u->rows(), grid.output_dim());
  grid.encode_batch<T>(table, u->data(), static_cast<std::size_t>(u->rows()), out.data());
  return tape.custom({}, std::move(out),
                     [&grid, table_id, u](const Matrix<T>& adj, ad::BackwardScope<T>& scope) {
                       auto& g = scope.grads()[table_id];
                       grid.encode_batch_backward<T>(u->data(), static_cast<std::size_t>(u->rows()),
                                                     adj.data(), g);
                     });
}

template <class T>
Var param(Tape<T>& tape, const FieldSet& fields, ParamId id) {
  return tape.parameter(fields.params(), id);
}

}  // namespace

template <class T>
FieldGraph build_field_graph(Tape<T>& tape, const FieldSet& fields, FieldKind kind,
                             const FieldQuery<T>& query) {
  if (!query.positions || query.positions->cols() != 3) {
    throw ContractError("field query needs an n x 3 position matrix");
  }
  const Matrix<T>& pos = *query.positions;
  const int n = static_cast<int>(pos.rows());
  if (query.directions && (query.directions->rows() != n || query.directions->cols() != 3)) {
    throw ContractError("field query: direction matrix shape mismatch");
  }
  if (query.overridden && static_cast<int>(query.overridden->size()) != n) {
    throw ContractError("field query: override mask size mismatch");
  }
  const bool want_color = query.directions != nullptr;
  const bool want_normals = query.normals || want_color;
  const FieldParams& id = fields.ids(kind);
  const int g = geo_dim(kind);

  // SDF network over centers, plus stencil rows when normals are needed.
  NormalStencil stencil;
  const Matrix<T>* sdf_pos = &pos;
  Matrix<T> stacked;
  if (want_normals) {
    stencil = make_normal_stencil(n, query.overridden, fields.config().normal_eps);
    stacked = stencil.stack(pos);
    sdf_pos = &stacked;
  }
  const Var enc = encode_node(tape, fields, kind, *sdf_pos);
  const Var xin = tape.concat_cols({tape.constant(mlp_position(*sdf_pos, kind)), enc});
  const Var hid = tape.softplus(
      tape.affine(xin, param(tape, fields, id.sdf_w0), param(tape, fields, id.sdf_b0)),
      static_cast<T>(kSoftplusBeta));
  const Var out =
      tape.affine(hid, param(tape, fields, id.sdf_w1), param(tape, fields, id.sdf_b1));

  FieldGraph graph;
  const Var center_out = want_normals ? tape.slice_rows(out, 0, n) : out;
  Var sdf = tape.slice_cols(center_out, 0, 1);
  graph.geo = tape.slice_cols(center_out, 1, g);

  if (want_normals) {
    graph.normals = tape.sparse_linear(tape.slice_cols(out, 0, 1), stencil.map);
    graph.has_normals = true;
  }

  if (query.overridden) {
    Matrix<T> keep(n, 1), fill(n, 1);
    for (int k = 0; k < n; ++k) {
      const bool o = (*query.overridden)[k] != 0;
      keep(k, 0) = o ? T(0) : T(1);
      fill(k, 0) = o ? static_cast<T>(kOverrideSdf) : T(0);
    }
    sdf = tape.add(tape.mul(sdf, tape.constant(std::move(keep))), tape.constant(std::move(fill)));
  }
  graph.sdf = sdf;

  if (want_color) {
    const Var rin = tape.concat_cols({tape.constant(mlp_position(pos, kind)), graph.normals,
                                      tape.constant(*query.directions), sdf, graph.geo});
    const Var h0 = tape.relu(
        tape.affine(rin, param(tape, fields, id.rgb_w0), param(tape, fields, id.rgb_b0)));
    const Var h1 = tape.relu(
        tape.affine(h0, param(tape, fields, id.rgb_w1), param(tape, fields, id.rgb_b1)));
    const Var rgb = tape.sigmoid(
        tape.affine(h1, param(tape, fields, id.rgb_w2), param(tape, fields, id.rgb_b2)));
    graph.color = tape.slice_cols(rgb, 0, 3);
    if (kind == FieldKind::kFocor) graph.alpha_head = tape.slice_cols(rgb, 3, 1);
    graph.has_color = true;
  }
  return graph;
}

template FieldGraph build_field_graph<float>(Tape<float>&, const FieldSet&, FieldKind,
                                             const FieldQuery<float>&);
template FieldGraph build_field_graph<double>(Tape<double>&, const FieldSet&, FieldKind,
                                              const FieldQuery<double>&);

namespace {

FieldOutput eval_point(const FieldSet& fields, FieldKind kind, const Vec3& p, const Vec3& v,
                       bool overridden) {
  const double h = domain_half_extent(kind);
  for (int a = 0; a < 3; ++a) {
    if (!(std::abs(p[a]) <= h + 1e-9)) throw DomainError("point outside the field domain");
  }
  Matrix<double> pos(1, 3), dir(1, 3);
  pos.row(0) = p.transpose();
  dir.row(0) = v.normalized().transpose();
  std::vector<std::uint8_t> mask{static_cast<std::uint8_t>(overridden ? 1 : 0)};
  Tape<double> tape;
  FieldQuery<double> q;
  q.positions = &pos;
  q.directions = &dir;
  if (kind == FieldKind::kBaco) q.overridden = &mask;
  const FieldGraph g = build_field_graph(tape, fields, kind, q);
  FieldOutput out;
  out.sdf = tape.value(g.sdf)(0, 0);
  out.geo_feature = tape.value(g.geo).row(0).transpose();
  out.color = tape.value(g.color).row(0).transpose();
  out.normal = tape.value(g.normals).row(0).transpose();
  if (kind == FieldKind::kFocor) out.alpha_head = tape.value(g.alpha_head)(0, 0);
  return out;
}

}  // namespace

FieldOutput focor_eval(const FieldSet& fields, const Vec3& p, const Vec3& v) {
  return eval_point(fields, FieldKind::kFocor, p, v, false);
}

FieldOutput baco_eval(const FieldSet& fields, const Vec3& p, const Vec3& v,
                      bool inside_fg_region) {
  return eval_point(fields, FieldKind::kBaco, p, v, inside_fg_region);
}

std::vector<double> sdf_values(const FieldSet& fields, FieldKind kind,
                               const std::vector<Vec3>& points) {
  std::vector<double> out(points.size());
  const std::size_t chunk = 8192;
  const std::size_t chunks = (points.size() + chunk - 1) / chunk;
  parallel_for(0, chunks, 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const std::size_t begin = c * chunk;
      const std::size_t end = std::min(points.size(), begin + chunk);
      Matrix<float> pos(end - begin, 3);
      for (std::size_t i = begin; i < end; ++i) pos.row(i - begin) = points[i].cast<float>();
      Tape<float> tape;
      FieldQuery<float> q;
      q.positions = &pos;
      const FieldGraph g = build_field_graph(tape, fields, kind, q);
      const auto& s = tape.value(g.sdf);
      for (std::size_t i = begin; i < end; ++i) out[i] = s(i - begin, 0);
    }
  });
  return out;
}

}  // namespace surfseg
