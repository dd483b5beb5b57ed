// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the unit tests and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "surfseg/config.hpp"
#include "surfseg/metrics.hpp"
#include "surfseg/segmenter.hpp"
#include "surfseg/synth.hpp"
#include "surfseg/trainer.hpp"

namespace surfseg::testing {

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f around x with step h.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Central difference for a float-stored parameter. The effective steps are the
// float-rounded perturbations, measured exactly in double.
inline double float_param_derivative(float& slot, double h, const std::function<double()>& f) {
  const float original = slot;
  const float up = static_cast<float>(original + h);
  const float down = static_cast<float>(original - h);
  slot = up;
  const double f_up = f();
  slot = down;
  const double f_down = f();
  slot = original;
  return (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
}

inline SynthSpec sphere_spec(int image_size = 128, int views = 12, std::uint64_t seed = 1) {
  SynthSpec s;
  s.primitive = "sphere";
  s.radius = 0.5;
  s.views = views;
  s.image_size = image_size;
  s.seed = seed;
  return s;
}

// Desk-scale training configuration used by the acceptance runs.
inline TrainConfig desk_config(long iterations, std::uint64_t seed, bool use_masks = true) {
  TrainConfig c;
  c.iterations = iterations;
  c.batch_rays = 256;
  c.lr = 0.01;
  c.warmup_steps = 100;
  c.seed = seed;
  c.n_focor = 64;
  c.n_baco = 32;
  c.log_every = 50;
  c.use_masks = use_masks;
  c.occupancy.resolution = 64;
  c.occupancy_warmup = 100;
  for (HashGridConfig* g : {&c.fields.focor_grid, &c.fields.baco_grid}) {
    g->levels = 8;
    g->features_per_level = 2;
    g->table_size = 1u << 15;
    g->n_min = 16;
    g->n_max = 256;
  }
  return c;
}

// Mean foreground IoU of thresholded alpha against ground truth over the
// selected views, rendered on a stride grid.
inline double mean_iou(const RadianceField& field, const SceneBundle& scene,
                       const std::vector<Image>& gt, const RenderSettings& settings,
                       const std::vector<std::size_t>& views, int stride) {
  std::vector<Image> pred, truth;
  for (std::size_t v : views) {
    pred.push_back(render_alpha(field, scene, v, settings, stride));
    truth.push_back(subsample(gt[v], stride));
  }
  return evaluate(pred, truth).mean.iou;
}

}  // namespace surfseg::testing
