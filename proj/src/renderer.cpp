// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "surfseg/parallel.hpp"

namespace surfseg {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double alpha_from_sdf(double f_i, double f_next, double b) {
  const double log_ratio = softplus(-b * f_i) - softplus(-b * f_next);
  return log_ratio < 0.0 ? -std::expm1(log_ratio) : 0.0;
}

AlphaGrad alpha_from_sdf_grad(double f_i, double f_next, double b) {
  AlphaGrad g;
  const double log_ratio = softplus(-b * f_i) - softplus(-b * f_next);
  if (!(log_ratio < 0.0)) return g;
  g.alpha = -std::expm1(log_ratio);
  const double d_alpha = -(1.0 - g.alpha);
  const double s_i = sigmoid(-b * f_i);
  const double s_n = sigmoid(-b * f_next);
  g.d_fi = d_alpha * (-b * s_i);
  g.d_fnext = d_alpha * (b * s_n);
  g.d_b = d_alpha * (f_next * s_n - f_i * s_i);
  return g;
}

Accumulation accumulate(std::span<const double> alphas, std::span<const Vec3> colors) {
  if (!colors.empty() && colors.size() != alphas.size()) {
    throw ContractError("accumulate: alpha and color counts differ");
  }
  Accumulation acc;
  acc.transmittance.resize(alphas.size());
  acc.weights.resize(alphas.size());
  double trans = 1.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    acc.transmittance[i] = trans;
    const double w = trans * alphas[i];
    acc.weights[i] = w;
    acc.alpha += w;
    if (!colors.empty()) acc.color += w * colors[i];
    trans *= 1.0 - alphas[i];
  }
  return acc;
}

RaySamples make_ray_samples(const Ray& ray, std::span<const double> t, std::span<const double> sdf,
                            double b) {
  if (t.size() != sdf.size()) throw ContractError("make_ray_samples: size mismatch");
  RaySamples s;
  s.t.assign(t.begin(), t.end());
  s.sdf.assign(sdf.begin(), sdf.end());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0 && !(t[i] > t[i - 1])) throw ContractError("sample t must be strictly increasing");
    s.positions.push_back(ray.at(t[i]));
  }
  for (std::size_t i = 0; i + 1 < t.size(); ++i) s.alpha.push_back(alpha_from_sdf(sdf[i], sdf[i + 1], b));
  const Accumulation acc = accumulate(s.alpha, {});
  s.transmittance = acc.transmittance;
  s.weights = acc.weights;
  return s;
}

void OccupancyConfig::validate() const {
  if (resolution < 1) throw ContractError("occupancy resolution must be >= 1");
  if (!(decay >= 0.0 && decay <= 1.0)) throw ContractError("occupancy decay must lie in [0,1]");
  if (!(threshold > 0.0)) throw ContractError("occupancy threshold must be positive");
  if (update_period < 1) throw ContractError("occupancy update period must be >= 1");
}

OccupancyGrid::OccupancyGrid(OccupancyConfig config) : config_(config) {
  config_.validate();
  const std::size_t n = static_cast<std::size_t>(config_.resolution) * config_.resolution *
                        config_.resolution;
  densities_.assign(n, 0.0f);
  flags_.assign(n, 0);
}

Vec3 OccupancyGrid::voxel_center(int i, int j, int k) const {
  const double s = voxel_size();
  return Vec3(-1.0 + (i + 0.5) * s, -1.0 + (j + 0.5) * s, -1.0 + (k + 0.5) * s);
}

std::vector<Vec3> OccupancyGrid::voxel_centers() const {
  const int g = config_.resolution;
  std::vector<Vec3> out;
  out.reserve(densities_.size());
  for (int k = 0; k < g; ++k) {
    for (int j = 0; j < g; ++j) {
      for (int i = 0; i < g; ++i) out.push_back(voxel_center(i, j, k));
    }
  }
  return out;
}

void OccupancyGrid::update(const SdfFn& sdf, double b) {
  const std::vector<Vec3> centers = voxel_centers();
  const std::vector<double> f = sdf(centers);
  if (f.size() != densities_.size()) throw ContractError("occupancy update: SDF count mismatch");
  const double diag = voxel_diagonal();
  std::vector<double> fresh(f.size());
  for (std::size_t v = 0; v < f.size(); ++v) {
    const double a = std::abs(f[v]);
    fresh[v] = a < 2.0 * diag ? 1.0 : alpha_from_sdf(a + 0.5 * diag, a - 0.5 * diag, b);
  }

  // Flood fill from negative voxels on the unit-sphere boundary through
  // negative neighbors; every voxel reached is forced occupied.
  const int g = config_.resolution;
  auto negative = [&](std::size_t v) { return f[v] < 0.0 && centers[v].norm() <= 1.0 + diag; };
  std::vector<std::size_t> stack;
  for (std::size_t v = 0; v < f.size(); ++v) {
    if (negative(v) && centers[v].norm() >= 1.0 - diag) {
      fresh[v] = 2.0;
      stack.push_back(v);
    }
  }
  const std::size_t stride[3] = {1, static_cast<std::size_t>(g), static_cast<std::size_t>(g) * g};
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    const int idx[3] = {static_cast<int>(v % g), static_cast<int>(v / g % g), static_cast<int>(v / stride[2])};
    for (int axis = 0; axis < 3; ++axis) {
      for (int step : {-1, 1}) {
        const int n = idx[axis] + step;
        if (n < 0 || n >= g) continue;
        const std::size_t u = step < 0 ? v - stride[axis] : v + stride[axis];
        if (fresh[u] < 2.0 && negative(u)) {
          fresh[u] = 2.0;
          stack.push_back(u);
        }
      }
    }
  }

  for (std::size_t v = 0; v < f.size(); ++v) {
    const double old = initialized_ ? config_.decay * densities_[v] : 0.0;
    densities_[v] = static_cast<float>(std::max(old, std::min(fresh[v], 1.0)));
  }
  initialized_ = true;
  refresh_flags();
}

void OccupancyGrid::refresh_flags() {
  for (std::size_t v = 0; v < densities_.size(); ++v) {
    flags_[v] = densities_[v] > config_.threshold ? 1 : 0;
  }
}

bool OccupancyGrid::occupied(const Vec3& p) const {
  if (!initialized_) return true;
  const int g = config_.resolution;
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= -1.0 && p[a] <= 1.0)) return false;
    idx[a] = std::min(g - 1, static_cast<int>((p[a] + 1.0) / voxel_size()));
  }
  return flags_[idx[0] + static_cast<std::size_t>(g) * (idx[1] + static_cast<std::size_t>(g) * idx[2])];
}

std::size_t OccupancyGrid::occupied_count() const {
  if (!initialized_) return densities_.size();
  return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), std::uint8_t{1}));
}

void OccupancyGrid::set_state(std::vector<float> densities, bool initialized) {
  if (densities.size() != densities_.size()) throw ContractError("occupancy state size mismatch");
  densities_ = std::move(densities);
  initialized_ = initialized;
  refresh_flags();
}

void NeuralField::evaluate(FieldKind kind, const std::vector<Vec3>& points,
                           const std::vector<Vec3>& directions,
                           const std::vector<std::uint8_t>* overridden, std::vector<double>& sdf,
                           std::vector<Vec3>* colors) const {
  const std::size_t n = points.size();
  sdf.assign(n, 0.0);
  if (colors) colors->assign(n, Vec3::Zero());
  const std::size_t chunk = 4096;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const int rows = static_cast<int>(end - begin);
    Matrix<float> pos(rows, 3), dir(rows, 3);
    std::vector<std::uint8_t> mask;
    for (int r = 0; r < rows; ++r) {
      pos.row(r) = points[begin + r].cast<float>().transpose();
      if (colors) dir.row(r) = directions[begin + r].cast<float>().transpose();
    }
    if (overridden) mask.assign(overridden->begin() + begin, overridden->begin() + end);
    Tape<float> tape;
    FieldQuery<float> q;
    q.positions = &pos;
    if (colors) q.directions = &dir;
    if (overridden) q.overridden = &mask;
    const FieldGraph g = build_field_graph(tape, fields_, kind, q);
    const auto& s = tape.value(g.sdf);
    for (int r = 0; r < rows; ++r) sdf[begin + r] = s(r, 0);
    if (colors) {
      const auto& c = tape.value(g.color);
      for (int r = 0; r < rows; ++r) (*colors)[begin + r] = c.row(r).transpose().cast<double>();
    }
  }
}

void AnalyticSphereField::evaluate(FieldKind kind, const std::vector<Vec3>& points,
                                   const std::vector<Vec3>&,
                                   const std::vector<std::uint8_t>* overridden,
                                   std::vector<double>& sdf, std::vector<Vec3>* colors) const {
  sdf.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (kind == FieldKind::kFocor) {
      sdf[i] = points[i].norm() - radius;
    } else {
      sdf[i] = (overridden && (*overridden)[i]) ? kOverrideSdf : bg_radius - points[i].norm();
    }
  }
  if (colors) colors->assign(points.size(), kind == FieldKind::kFocor ? fg_color : bg_color);
}

namespace {

void plan_segment(double t0, double t1, int n, std::mt19937_64* jitter,
                  std::vector<double>& t) {
  t.resize(n);
  const double dt = (t1 - t0) / n;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? unif(*jitter) : 0.5;
    t[i] = t0 + (i + u) * dt;
  }
}

}  // namespace

SamplePlan plan_samples(const std::vector<Ray>& rays, const std::vector<std::uint8_t>& fg_region,
                        const RenderSettings& settings, bool with_background) {
  if (fg_region.size() != rays.size()) throw ContractError("plan_samples: fg_region size mismatch");
  if (settings.n_focor < 2 || settings.n_baco < 2) {
    throw ContractError("sample counts must be at least 2");
  }
  SamplePlan plan;
  plan.rays = static_cast<int>(rays.size());
  plan.f_offset.push_back(0);
  plan.b_offset.push_back(0);
  std::vector<double> t;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const Ray& ray = rays[r];
    if (ray.hits_foreground) {
      plan_segment(ray.t_near, ray.t_far, settings.n_focor, settings.jitter, t);
      int last_point = -1;  // index of the point at t[i] if already added
      for (int i = 0; i + 1 < settings.n_focor; ++i) {
        ++plan.f_candidate_sections;
        const Vec3 mid = ray.at(0.5 * (t[i] + t[i + 1]));
        if (settings.occupancy && !settings.occupancy->occupied(mid)) {
          last_point = -1;
          continue;
        }
        if (last_point < 0) {
          last_point = static_cast<int>(plan.f_points.size());
          plan.f_points.push_back(ray.at(t[i]));
          plan.f_dirs.push_back(ray.direction);
          plan.f_t.push_back(t[i]);
        }
        const int next = static_cast<int>(plan.f_points.size());
        plan.f_points.push_back(ray.at(t[i + 1]));
        plan.f_dirs.push_back(ray.direction);
        plan.f_t.push_back(t[i + 1]);
        plan.f_start.push_back(last_point);
        plan.f_end.push_back(next);
        last_point = next;
      }
    }
    plan.f_offset.push_back(static_cast<int>(plan.f_start.size()));

    if (with_background && ray.hits_background) {
      plan_segment(ray.bg_near, ray.bg_far, settings.n_baco, settings.jitter, t);
      const int first = static_cast<int>(plan.b_points.size());
      for (int i = 0; i < settings.n_baco; ++i) {
        const Vec3 p = ray.at(t[i]);
        plan.b_points.push_back(p);
        plan.b_dirs.push_back(ray.direction);
        plan.b_t.push_back(t[i]);
        plan.b_overridden.push_back(fg_region[r] && p.norm() < 1.0 ? 1 : 0);
      }
      for (int i = 0; i + 1 < settings.n_baco; ++i) {
        plan.b_start.push_back(first + i);
        plan.b_end.push_back(first + i + 1);
      }
    }
    plan.b_offset.push_back(static_cast<int>(plan.b_start.size()));
  }
  return plan;
}

CompositeResult composite_ray(std::span<const double> f_alpha, std::span<const Vec3> f_color,
                              std::span<const double> b_alpha, std::span<const Vec3> b_color,
                              const Vec3& horizon) {
  CompositeResult out;
  const Accumulation fg = accumulate(f_alpha, f_color);
  out.fg_color = fg.color;
  out.alpha = fg.alpha;
  double best = 0.0;
  for (std::size_t j = 0; j < fg.weights.size(); ++j) {
    if (fg.weights[j] > best) {
      best = fg.weights[j];
      out.argmax_section = static_cast<int>(j);
    }
  }
  const Accumulation bg = accumulate(b_alpha, b_color);
  out.bg_weight = bg.alpha;
  if (bg.alpha >= kMinBackgroundWeight) {
    out.bg_color = bg.color / bg.alpha;
    out.used_horizon = false;
  } else {
    out.bg_color = horizon;
    out.used_horizon = true;
  }
  out.color = out.fg_color + (1.0 - out.alpha) * out.bg_color;
  return out;
}

std::vector<PixelRender> render_rays(const RadianceField& field, const std::vector<Ray>& rays,
                                     const std::vector<std::uint8_t>& fg_region,
                                     const RenderSettings& settings, bool alpha_only,
                                     RenderStats* stats) {
  if (fg_region.size() != rays.size()) throw ContractError("render_rays: fg_region size mismatch");
  std::vector<PixelRender> out(rays.size());
  const std::size_t chunk = 256;
  const std::size_t chunks = (rays.size() + chunk - 1) / chunk;
  std::vector<RenderStats> chunk_stats(chunks);
  const double b = field.sharpness();

  auto run = [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(rays.size(), begin + chunk);
    const std::vector<Ray> sub(rays.begin() + begin, rays.begin() + end);
    const std::vector<std::uint8_t> region(fg_region.begin() + begin, fg_region.begin() + end);
    const SamplePlan plan = plan_samples(sub, region, settings, !alpha_only);

    std::vector<double> f_sdf, b_sdf;
    std::vector<Vec3> f_col, b_col;
    field.evaluate(FieldKind::kFocor, plan.f_points, plan.f_dirs, nullptr, f_sdf,
                   alpha_only ? nullptr : &f_col);
    if (!alpha_only) {
      field.evaluate(FieldKind::kBaco, plan.b_points, plan.b_dirs, &plan.b_overridden, b_sdf,
                     &b_col);
    }
    RenderStats& st = chunk_stats[c];
    st.focor_points = plan.f_points.size();
    st.baco_points = plan.b_points.size();
    st.focor_sections = plan.f_start.size();
    st.focor_candidate_sections = plan.f_candidate_sections;

    std::vector<double> fa, ba;
    std::vector<Vec3> fc, bc;
    for (std::size_t r = 0; r < sub.size(); ++r) {
      fa.clear();
      fc.clear();
      ba.clear();
      bc.clear();
      for (int s = plan.f_offset[r]; s < plan.f_offset[r + 1]; ++s) {
        fa.push_back(alpha_from_sdf(f_sdf[plan.f_start[s]], f_sdf[plan.f_end[s]], b));
        if (!alpha_only) fc.push_back(f_col[plan.f_start[s]]);
      }
      for (int s = plan.b_offset[r]; s < plan.b_offset[r + 1]; ++s) {
        ba.push_back(alpha_from_sdf(b_sdf[plan.b_start[s]], b_sdf[plan.b_end[s]], b));
        bc.push_back(b_col[plan.b_start[s]]);
      }
      const CompositeResult cr = composite_ray(fa, fc, ba, bc, settings.horizon);
      PixelRender& px = out[begin + r];
      px.alpha = cr.alpha;
      px.color = cr.color;
      px.fg_color = cr.fg_color;
      px.bg_color = cr.bg_color;
      px.flagged_miss = !sub[r].hits_foreground && !sub[r].hits_background;
      if (cr.argmax_section >= 0) {
        px.depth = plan.f_t[plan.f_start[plan.f_offset[r] + cr.argmax_section]];
      }
    }
  };

  if (settings.jitter) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
  } else {
    parallel_for(0, chunks, 1, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t c = lo; c < hi; ++c) run(c);
    });
  }
  if (stats) {
    *stats = {};
    for (const auto& s : chunk_stats) {
      stats->focor_points += s.focor_points;
      stats->baco_points += s.baco_points;
      stats->focor_sections += s.focor_sections;
      stats->focor_candidate_sections += s.focor_candidate_sections;
    }
  }
  return out;
}

PixelRender render_pixel(const RadianceField& field, const Ray& ray, bool fg_region,
                         const RenderSettings& settings) {
  return render_rays(field, {ray}, {static_cast<std::uint8_t>(fg_region ? 1 : 0)}, settings)[0];
}

template <class T>
Var alpha_node(Tape<T>& tape, Var sdf, Var b, std::shared_ptr<const std::vector<int>> start,
               std::shared_ptr<const std::vector<int>> end) {
  const Matrix<T>& f = tape.value(sdf);
  const double bv = static_cast<double>(tape.value(b)(0, 0));
  const int k = static_cast<int>(start->size());
  Matrix<T> alpha(k, 1);
  for (int s = 0; s < k; ++s) {
    alpha(s, 0) = static_cast<T>(
        alpha_from_sdf(double(f((*start)[s], 0)), double(f((*end)[s], 0)), bv));
  }
  return tape.custom({sdf, b}, std::move(alpha),
                     [sdf, b, start, end](const Matrix<T>& adj, ad::BackwardScope<T>& scope) {
                       const Matrix<T>& fv = scope.value(sdf);
                       const double bval = static_cast<double>(scope.value(b)(0, 0));
                       Matrix<T>& df = scope.adjoint(sdf);
                       double db = 0.0;
                       for (std::size_t s = 0; s < start->size(); ++s) {
                         const double g = static_cast<double>(adj(s, 0));
                         if (g == 0.0) continue;
                         const int i = (*start)[s], j = (*end)[s];
                         const AlphaGrad ag = alpha_from_sdf_grad(double(fv(i, 0)), double(fv(j, 0)), bval);
                         df(i, 0) += static_cast<T>(g * ag.d_fi);
                         df(j, 0) += static_cast<T>(g * ag.d_fnext);
                         db += g * ag.d_b;
                       }
                       scope.adjoint(b)(0, 0) += static_cast<T>(db);
                     });
}

template <class T>
Var composite_node(Tape<T>& tape, std::shared_ptr<const CompositeLayout> layout, Var f_alpha,
                   Var f_color, Var b_alpha, Var b_color) {
  const int m = layout->rays;
  auto gather = [&](Var alpha, Var color, const std::vector<int>& offset,
                    const std::vector<int>& color_row, int r, std::vector<double>& a,
                    std::vector<Vec3>& c) {
    a.clear();
    c.clear();
    if (alpha.id < 0) return;
    const Matrix<T>& av = tape.value(alpha);
    for (int s = offset[r]; s < offset[r + 1]; ++s) {
      a.push_back(double(av(s, 0)));
      if (color.id >= 0) {
        const Matrix<T>& cv = tape.value(color);
        c.push_back(cv.row(color_row[s]).transpose().template cast<double>());
      } else {
        c.push_back(Vec3::Zero());
      }
    }
  };

  Matrix<T> out(m, 4);
  std::vector<double> fa, ba;
  std::vector<Vec3> fc, bc;
  for (int r = 0; r < m; ++r) {
    gather(f_alpha, f_color, layout->f_offset, layout->f_color_row, r, fa, fc);
    gather(b_alpha, b_color, layout->b_offset, layout->b_color_row, r, ba, bc);
    const CompositeResult cr = composite_ray(fa, fc, ba, bc, layout->horizon);
    for (int c = 0; c < 3; ++c) out(r, c) = static_cast<T>(cr.color[c]);
    out(r, 3) = static_cast<T>(cr.alpha);
  }

  std::vector<Var> inputs;
  for (Var v : {f_alpha, f_color, b_alpha, b_color}) {
    if (v.id >= 0) inputs.push_back(v);
  }

  auto backward = [layout, f_alpha, f_color, b_alpha, b_color](const Matrix<T>& adj,
                                                               ad::BackwardScope<T>& scope) {
    // Reverse pass through one front-to-back accumulation with per-section
    // coefficients q_j: L = sum_j w_j q_j.
    auto through_alphas = [](const std::vector<double>& a, const std::vector<double>& q,
                             std::vector<double>& d_alpha) {
      const std::size_t k = a.size();
      d_alpha.assign(k, 0.0);
      std::vector<double> trans(k);
      double t = 1.0;
      for (std::size_t j = 0; j < k; ++j) {
        trans[j] = t;
        t *= 1.0 - a[j];
      }
      double suffix = 0.0;
      for (std::size_t j = k; j-- > 0;) {
        d_alpha[j] = trans[j] * (q[j] - suffix);
        suffix = a[j] * q[j] + (1.0 - a[j]) * suffix;
      }
    };

    const Matrix<T>* fav = f_alpha.id >= 0 ? &scope.value(f_alpha) : nullptr;
    const Matrix<T>* fcv = f_color.id >= 0 ? &scope.value(f_color) : nullptr;
    const Matrix<T>* bav = b_alpha.id >= 0 ? &scope.value(b_alpha) : nullptr;
    const Matrix<T>* bcv = b_color.id >= 0 ? &scope.value(b_color) : nullptr;
    Matrix<T>* dfa = fav ? &scope.adjoint(f_alpha) : nullptr;
    Matrix<T>* dfc = fcv ? &scope.adjoint(f_color) : nullptr;
    Matrix<T>* dba = bav ? &scope.adjoint(b_alpha) : nullptr;
    Matrix<T>* dbc = bcv ? &scope.adjoint(b_color) : nullptr;

    std::vector<double> fa, ba, q, da;
    std::vector<Vec3> fc, bc;
    for (int r = 0; r < layout->rays; ++r) {
      const Vec3 g(double(adj(r, 0)), double(adj(r, 1)), double(adj(r, 2)));
      const double g_alpha = double(adj(r, 3));
      fa.clear(); fc.clear(); ba.clear(); bc.clear();
      if (fav) {
        for (int s = layout->f_offset[r]; s < layout->f_offset[r + 1]; ++s) {
          fa.push_back(double((*fav)(s, 0)));
          fc.push_back(fcv ? Vec3((*fcv).row(layout->f_color_row[s]).transpose().template cast<double>())
                           : Vec3::Zero());
        }
      }
      if (bav) {
        for (int s = layout->b_offset[r]; s < layout->b_offset[r + 1]; ++s) {
          ba.push_back(double((*bav)(s, 0)));
          bc.push_back(bcv ? Vec3((*bcv).row(layout->b_color_row[s]).transpose().template cast<double>())
                           : Vec3::Zero());
        }
      }
      const CompositeResult cr = composite_ray(fa, fc, ba, bc, layout->horizon);
      const double d_total_alpha = g_alpha - g.dot(cr.bg_color);
      const Vec3 h = (1.0 - cr.alpha) * g;

      if (!fa.empty()) {
        q.resize(fa.size());
        for (std::size_t j = 0; j < fa.size(); ++j) q[j] = g.dot(fc[j]) + d_total_alpha;
        through_alphas(fa, q, da);
        const Accumulation acc = accumulate(fa, {});
        for (std::size_t j = 0; j < fa.size(); ++j) {
          const int s = layout->f_offset[r] + static_cast<int>(j);
          (*dfa)(s, 0) += static_cast<T>(da[j]);
          if (dfc) {
            for (int c = 0; c < 3; ++c) {
              (*dfc)(layout->f_color_row[s], c) += static_cast<T>(acc.weights[j] * g[c]);
            }
          }
        }
      }
      if (!ba.empty() && !cr.used_horizon) {
        const double inv_w = 1.0 / cr.bg_weight;
        q.resize(ba.size());
        for (std::size_t j = 0; j < ba.size(); ++j) q[j] = h.dot(bc[j] - cr.bg_color) * inv_w;
        through_alphas(ba, q, da);
        const Accumulation acc = accumulate(ba, {});
        for (std::size_t j = 0; j < ba.size(); ++j) {
          const int s = layout->b_offset[r] + static_cast<int>(j);
          (*dba)(s, 0) += static_cast<T>(da[j]);
          if (dbc) {
            for (int c = 0; c < 3; ++c) {
              (*dbc)(layout->b_color_row[s], c) += static_cast<T>(acc.weights[j] * h[c] * inv_w);
            }
          }
        }
      }
    }
  };
  return tape.custom(std::move(inputs), std::move(out), std::move(backward));
}

template <class T>
RenderGraph<T> build_render_graph(Tape<T>& tape, const FieldSet& fields, const SamplePlan& plan,
                                  const Vec3& horizon) {
  RenderGraph<T> graph;
  const Var beta = tape.parameter(fields.params(), fields.beta_id());
  const Var b = tape.exp(tape.scale(beta, T(10)));

  auto to_matrix = [](const std::vector<Vec3>& v) {
    Matrix<T> m(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(i) = v[i].cast<T>().transpose();
    return m;
  };

  auto layout = std::make_shared<CompositeLayout>();
  layout->rays = plan.rays;
  layout->f_offset = plan.f_offset;
  layout->b_offset = plan.b_offset;
  layout->f_color_row = plan.f_start;
  layout->b_color_row = plan.b_start;
  layout->horizon = horizon;

  Var fa{-1}, fc{-1}, ba{-1}, bc{-1};
  if (!plan.f_points.empty()) {
    const Matrix<T> pos = to_matrix(plan.f_points);
    const Matrix<T> dir = to_matrix(plan.f_dirs);
    FieldQuery<T> q;
    q.positions = &pos;
    q.directions = &dir;
    graph.focor = build_field_graph(tape, fields, FieldKind::kFocor, q);
    graph.has_focor = true;
    fa = alpha_node(tape, graph.focor.sdf, b, std::make_shared<const std::vector<int>>(plan.f_start),
                    std::make_shared<const std::vector<int>>(plan.f_end));
    fc = graph.focor.color;
  }
  if (!plan.b_points.empty()) {
    const Matrix<T> pos = to_matrix(plan.b_points);
    const Matrix<T> dir = to_matrix(plan.b_dirs);
    FieldQuery<T> q;
    q.positions = &pos;
    q.directions = &dir;
    q.overridden = &plan.b_overridden;
    graph.baco = build_field_graph(tape, fields, FieldKind::kBaco, q);
    graph.has_baco = true;
    ba = alpha_node(tape, graph.baco.sdf, b, std::make_shared<const std::vector<int>>(plan.b_start),
                    std::make_shared<const std::vector<int>>(plan.b_end));
    bc = graph.baco.color;
  }
  graph.rgba = composite_node(tape, std::move(layout), fa, fc, ba, bc);
  return graph;
}

template Var alpha_node<float>(Tape<float>&, Var, Var, std::shared_ptr<const std::vector<int>>,
                               std::shared_ptr<const std::vector<int>>);
template Var alpha_node<double>(Tape<double>&, Var, Var, std::shared_ptr<const std::vector<int>>,
                                std::shared_ptr<const std::vector<int>>);
template Var composite_node<float>(Tape<float>&, std::shared_ptr<const CompositeLayout>, Var, Var,
                                   Var, Var);
template Var composite_node<double>(Tape<double>&, std::shared_ptr<const CompositeLayout>, Var,
                                    Var, Var, Var);
template RenderGraph<float> build_render_graph<float>(Tape<float>&, const FieldSet&,
                                                      const SamplePlan&, const Vec3&);
template RenderGraph<double> build_render_graph<double>(Tape<double>&, const FieldSet&,
                                                        const SamplePlan&, const Vec3&);

}  // namespace surfseg
