// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace surfseg {

using ad::Matrix;
using ad::Tape;
using ad::Var;

std::vector<Image> foreground_regions(const SceneBundle& scene, int dilation) {
  std::vector<Image> out;
  out.reserve(scene.views.size());
  for (const View& v : scene.views) {
    out.push_back(v.coarse_mask ? dilate_mask(*v.coarse_mask, dilation) : Image());
  }
  return out;
}

RayBatch sample_batch(const SceneBundle& scene, std::mt19937_64& rng, int m,
                      const BatchOptions& options) {
  if (scene.views.empty()) throw ContractError("sample_batch: scene has no views");
  if (m < 1) throw ContractError("sample_batch: m must be >= 1");
  RayBatch batch;
  if (options.view) {
    if (*options.view >= scene.views.size()) throw RangeError("sample_batch: view index out of range");
    batch.view = *options.view;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, scene.views.size() - 1);
    batch.view = pick(rng);
  }
  const View& view = scene.views[batch.view];
  const int w = view.image.width, h = view.image.height;
  const std::size_t pixels = static_cast<std::size_t>(w) * h;

  std::vector<std::size_t> chosen(m);
  if (options.without_replacement) {
    if (static_cast<std::size_t>(m) > pixels) {
      throw ContractError("sample_batch: more rays than pixels without replacement");
    }
    std::vector<std::size_t> idx(pixels);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (int k = 0; k < m; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pixels - 1);
      std::swap(idx[k], idx[pick(rng)]);
      chosen[k] = idx[k];
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pixels - 1);
    for (int k = 0; k < m; ++k) chosen[k] = pick(rng);
  }

  const bool masks = options.use_masks && view.coarse_mask.has_value();
  const Image* region = nullptr;
  if (options.use_masks && options.fg_regions && batch.view < options.fg_regions->size() &&
      !(*options.fg_regions)[batch.view].empty()) {
    region = &(*options.fg_regions)[batch.view];
  }
  if (masks) batch.mask.emplace();
  for (int k = 0; k < m; ++k) {
    const int px = static_cast<int>(chosen[k] % w);
    const int py = static_cast<int>(chosen[k] / w);
    batch.px.push_back(px);
    batch.py.push_back(py);
    batch.rays.push_back(scene.pixel_ray(batch.view, px, py));
    batch.colors.emplace_back(view.image.at(px, py, 0), view.image.at(px, py, 1),
                              view.image.at(px, py, 2));
    if (masks) batch.mask->push_back(view.coarse_mask->at(px, py) >= 0.5f ? 1.0 : 0.0);
    batch.fg_region.push_back(region ? (region->at(px, py) >= 0.5f ? 1 : 0) : 1);
  }
  return batch;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,L_color,L_eik,L_sparse,L_mask,b\n";
  out << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.step << ',' << r.color << ',' << r.eikonal << ',' << r.sparsity << ',';
    if (std::isnan(r.mask)) {
      out << "";
    } else {
      out << r.mask;
    }
    out << ',' << r.b << '\n';
  }
}

namespace {

// Tape buffers are large and reallocated every step; keeping them on the
// heap instead of fresh mmap regions avoids repeated page faults.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
    return true;
  }();
  (void)done;
#endif
}

TrainConfig checked(TrainConfig config) {
  tune_allocator();
  config.validate();
  config.fields.seed = config.seed;
  return config;
}

}  // namespace

Trainer::Trainer(const SceneBundle& scene, TrainConfig config)
    : scene_(scene),
      config_(checked(std::move(config))),
      weights_(config_.effective_loss()),
      fields_(config_.fields),
      adam_(fields_.params()),
      grads_(fields_.params()),
      occupancy_(config_.occupancy),
      rng_(config_.seed ^ 0x5eedf00dULL),
      fg_regions_(foreground_regions(scene, config_.mask_dilation)) {
  if (scene_.views.empty()) throw ContractError("cannot train on a scene without views");
}

Trainer::Trainer(const SceneBundle& scene, const Checkpoint& ckpt) : Trainer(scene, ckpt.config) {
  auto& params = fields_.params();
  if (ckpt.tensors.size() != params.size()) throw ParseError("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    ad::Tensor& dst = params[ad::ParamId{static_cast<int>(i)}];
    const ad::Tensor& src = ckpt.tensors[i];
    if (dst.name != src.name || dst.rows != src.rows || dst.cols != src.cols) {
      throw ParseError("checkpoint: tensor '" + src.name + "' does not match the configuration");
    }
    dst.values = src.values;
  }
  adam_.first_moment = ckpt.adam_m;
  adam_.second_moment = ckpt.adam_v;
  adam_.set_steps(ckpt.adam_steps);
  occupancy_.set_state(ckpt.occupancy, ckpt.occupancy_initialized);
  std::istringstream rs(ckpt.rng_state);
  rs >> rng_;
  if (!rs) throw ParseError("checkpoint: invalid RNG state");
  iteration_ = ckpt.iteration;
}

bool Trainer::occupancy_active() const {
  return config_.use_occupancy && iteration_ >= config_.occupancy_warmup;
}

RenderSettings Trainer::render_settings() const {
  RenderSettings s;
  s.n_focor = config_.n_focor;
  s.n_baco = config_.n_baco;
  s.horizon = scene_.horizon_color;
  s.occupancy = occupancy_active() ? &occupancy_ : nullptr;
  return s;
}

void Trainer::update_occupancy() {
  occupancy_.update(
      [this](const std::vector<Vec3>& pts) { return sdf_values(fields_, FieldKind::kFocor, pts); },
      sharpness(fields_));
}

LossParts Trainer::step() {
  const long it = iteration_;
  const double lr =
      config_.lr * (config_.warmup_steps > 0
                        ? std::min(1.0, double(it + 1) / double(config_.warmup_steps))
                        : 1.0);

  BatchOptions opts;
  opts.use_masks = config_.use_masks;
  opts.fg_regions = &fg_regions_;
  const RayBatch batch = sample_batch(scene_, rng_, config_.batch_rays, opts);

  RenderSettings settings = render_settings();
  settings.jitter = &rng_;
  const SamplePlan plan = plan_samples(batch.rays, batch.fg_region, settings);

  Tape<float> tape;
  const RenderGraph<float> graph = build_render_graph(tape, fields_, plan, scene_.horizon_color);
  const int m = static_cast<int>(batch.rays.size());
  Matrix<float> target(m, 3);
  for (int k = 0; k < m; ++k) target.row(k) = batch.colors[k].cast<float>().transpose();

  LossParts parts;
  Var total = color_loss(tape, tape.slice_cols(graph.rgba, 0, 3), target);
  parts.color = tape.value(total)(0, 0);
  if (graph.has_focor) {
    const Var eik = eikonal_loss(tape, graph.focor.normals);
    const Var sparse = sparsity_loss(tape, graph.focor.sdf, weights_.tau);
    parts.eikonal = tape.value(eik)(0, 0);
    parts.sparsity = tape.value(sparse)(0, 0);
    if (weights_.eikonal > 0.0) total = tape.add(total, tape.scale(eik, float(weights_.eikonal)));
    if (weights_.sparsity > 0.0) {
      total = tape.add(total, tape.scale(sparse, float(weights_.sparsity)));
    }
  }
  if (mask_term_active(weights_, it, batch.mask.has_value())) {
    Matrix<float> mvals(m, 1);
    for (int k = 0; k < m; ++k) mvals(k, 0) = static_cast<float>((*batch.mask)[k]);
    const Var lm = mask_loss(tape, tape.slice_cols(graph.rgba, 3, 1), mvals);
    parts.mask = tape.value(lm)(0, 0);
    total = tape.add(total, tape.scale(lm, float(weights_.mask)));
  }

  auto check = [it](double v, const char* term) {
    if (!std::isfinite(v)) {
      throw NumericError("iteration " + std::to_string(it) + ": non-finite " + term + " loss");
    }
  };
  check(parts.color, "color");
  check(parts.eikonal, "eikonal");
  check(parts.sparsity, "sparsity");
  if (parts.mask) check(*parts.mask, "mask");

  grads_.zero();
  tape.backward(total, grads_);
  const double gnorm = ad::clip_grad_norm(grads_, config_.grad_clip);
  check(gnorm, "gradient of the total");
  adam_.step(fields_.params(), grads_, lr);
  ++iteration_;

  if (config_.use_occupancy && iteration_ >= config_.occupancy_warmup &&
      (iteration_ - config_.occupancy_warmup) % config_.occupancy.update_period == 0) {
    update_occupancy();
  }

  window_.color += parts.color;
  window_.eikonal += parts.eikonal;
  window_.sparsity += parts.sparsity;
  if (parts.mask) {
    window_.mask += *parts.mask;
    ++window_mask_steps_;
  }
  ++window_steps_;
  if (iteration_ % config_.log_every == 0 || iteration_ == config_.iterations) {
    HistoryRow row;
    row.step = iteration_;
    row.color = window_.color / window_steps_;
    row.eikonal = window_.eikonal / window_steps_;
    row.sparsity = window_.sparsity / window_steps_;
    row.mask = window_mask_steps_ > 0 ? window_.mask / window_mask_steps_
                                      : std::numeric_limits<double>::quiet_NaN();
    row.b = sharpness(fields_);
    history_.push_back(row);
    window_ = {};
    window_steps_ = 0;
    window_mask_steps_ = 0;
  }
  return parts;
}

void Trainer::run(long until, const std::function<void(const Trainer&)>& on_step) {
  while (iteration_ < until) {
    step();
    if (on_step) on_step(*this);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.tensors = fields_.params().tensors();
  c.adam_m = adam_.first_moment;
  c.adam_v = adam_.second_moment;
  c.adam_steps = adam_.steps();
  c.occupancy_resolution = occupancy_.resolution();
  c.occupancy_initialized = occupancy_.initialized();
  c.occupancy = occupancy_.densities();
  c.iteration = iteration_;
  std::ostringstream rs;
  rs << rng_;
  c.rng_state = rs.str();
  c.norm = scene_.norm;
  c.horizon = scene_.horizon_color;
  return c;
}

TrainResult train(const SceneBundle& scene, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& checkpoint_path) {
  Trainer trainer(scene, config);
  while (trainer.iteration() < trainer.config().iterations) {
    trainer.step();
    const long every = trainer.config().checkpoint_every;
    if (checkpoint_path && every > 0 && trainer.iteration() % every == 0) {
      trainer.checkpoint().save(*checkpoint_path);
    }
  }
  TrainResult result{trainer.checkpoint(), trainer.history()};
  if (checkpoint_path) result.checkpoint.save(*checkpoint_path);
  return result;
}

FieldSet fields_from_checkpoint(const Checkpoint& ckpt) {
  FieldConfig fc = ckpt.config.fields;
  fc.seed = ckpt.config.seed;
  FieldSet fields(fc);
  auto& params = fields.params();
  if (ckpt.tensors.size() != params.size()) throw ParseError("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    ad::Tensor& dst = params[ad::ParamId{static_cast<int>(i)}];
    const ad::Tensor& src = ckpt.tensors[i];
    if (dst.name != src.name || dst.rows != src.rows || dst.cols != src.cols) {
      throw ParseError("checkpoint: tensor '" + src.name + "' does not match the configuration");
    }
    dst.values = src.values;
  }
  return fields;
}

OccupancyGrid occupancy_from_checkpoint(const Checkpoint& ckpt) {
  OccupancyGrid grid(ckpt.config.occupancy);
  grid.set_state(ckpt.occupancy, ckpt.occupancy_initialized);
  return grid;
}

TrainedModel::TrainedModel(const Checkpoint& ckpt)
    : config_(ckpt.config),
      fields_(std::make_unique<FieldSet>(fields_from_checkpoint(ckpt))),
      field_(std::make_unique<NeuralField>(*fields_)),
      occupancy_(occupancy_from_checkpoint(ckpt)),
      iteration_(ckpt.iteration),
      norm_(ckpt.norm),
      horizon_(ckpt.horizon) {}

RenderSettings TrainedModel::render_settings(bool use_occupancy) const {
  RenderSettings s;
  s.n_focor = config_.n_focor;
  s.n_baco = config_.n_baco;
  s.horizon = horizon_;
  const bool active = config_.use_occupancy && iteration_ >= config_.occupancy_warmup &&
                      occupancy_.initialized();
  s.occupancy = (use_occupancy && active) ? &occupancy_ : nullptr;
  return s;
}

BTrajectory b_trajectory(const std::vector<HistoryRow>& history, long window) {
  if (history.empty()) throw ContractError("no snapshots");
  if (window < 1) throw ContractError("b_trajectory: window must be >= 1");
  BTrajectory t;
  for (const auto& r : history) {
    t.steps.push_back(r.step);
    t.b.push_back(r.b);
  }
  t.initial = t.b.front();
  t.final = t.b.back();
  // b at the last snapshot taken at or before `step`.
  auto b_at = [&](long step) {
    double v = t.b.front();
    for (std::size_t i = 0; i < t.steps.size() && t.steps[i] <= step; ++i) v = t.b[i];
    return v;
  };
  const long first = t.steps.front();
  long windows = 0, increased = 0;
  for (long s = first; s + window <= t.steps.back(); s += window) {
    ++windows;
    if (b_at(s + window) > b_at(s)) ++increased;
  }
  t.increasing_fraction = windows > 0 ? double(increased) / double(windows)
                                      : (t.final > t.initial ? 1.0 : 0.0);
  return t;
}

}  // namespace surfseg
