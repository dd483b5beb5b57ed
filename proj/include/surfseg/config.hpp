// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "surfseg/fields.hpp"
#include "surfseg/losses.hpp"
#include "surfseg/renderer.hpp"

namespace surfseg {

struct TrainConfig {
  long iterations = 40000;
  int batch_rays = 1024;
  double lr = 0.01;
  long warmup_steps = 500;
  double grad_clip = 10.0;
  std::uint64_t seed = 0;
  LossWeights loss;
  // Negative: 20% of `iterations`.
  long mask_phase_end = -1;
  int n_focor = 128;
  int n_baco = 64;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints
  long log_every = 100;
  bool use_occupancy = true;
  OccupancyConfig occupancy;
  long occupancy_warmup = 0;  // the grid is ignored before this step
  bool use_masks = true;
  int mask_dilation = 2;  // pixels
  FieldConfig fields;

  void validate() const;
  long effective_mask_phase_end() const;
  LossWeights effective_loss() const;

  // JSON round trip. Unknown keys are rejected; missing keys keep defaults.
  static TrainConfig from_json_string(const std::string& text);
  static TrainConfig from_json_file(const std::filesystem::path& path);
  std::string to_json_string() const;
};

}  // namespace surfseg
