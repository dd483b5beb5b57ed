// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "surfseg/autodiff.hpp"
#include "surfseg/config.hpp"
#include "surfseg/scene_io.hpp"

namespace surfseg {

inline constexpr int kCheckpointVersion = 1;

// Complete training state. File layout: one line of JSON (format, version,
// config, scalar state, tensor names and shapes) followed by little-endian
// float32 blobs in header order: parameters, Adam first moments, Adam second
// moments, occupancy densities.
struct Checkpoint {
  int version = kCheckpointVersion;
  TrainConfig config;
  std::vector<ad::Tensor> tensors;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  long adam_steps = 0;
  int occupancy_resolution = 0;
  bool occupancy_initialized = false;
  std::vector<float> occupancy;
  long iteration = 0;
  std::string rng_state;
  NormTransform norm;
  Vec3 horizon = Vec3::Constant(0.5);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace surfseg
