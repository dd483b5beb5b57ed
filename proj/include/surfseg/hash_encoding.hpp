// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "surfseg/common.hpp"

namespace surfseg {

struct HashGridConfig {
  int levels = 16;
  int features_per_level = 2;
  std::uint32_t table_size = 1u << 19;  // entries per level, power of two
  int n_min = 16;
  int n_max = 2048;

  void validate() const;
  bool operator==(const HashGridConfig&) const = default;
};

// N_i = floor(n_min * g^i), g = exp((ln n_max - ln n_min) / (L - 1)).
std::vector<int> level_resolutions(const HashGridConfig& config);

// Multi-resolution hash grid layout. The feature tables themselves are plain
// float arrays of size levels * table_size * features_per_level (level-major,
// then slot, then feature), owned by the caller (normally a ParamStore).
class HashGrid {
 public:
  explicit HashGrid(HashGridConfig config);

  const HashGridConfig& config() const { return config_; }
  const std::vector<int>& resolutions() const { return resolutions_; }
  int output_dim() const { return config_.levels * config_.features_per_level; }
  std::size_t table_floats() const {
    return static_cast<std::size_t>(config_.levels) * config_.table_size *
           config_.features_per_level;
  }

  // Levels whose (N+1)^3 vertices fit in the table are indexed densely.
  bool dense(int level) const { return dense_[level]; }
  std::uint32_t slot(int level, std::uint32_t x, std::uint32_t y, std::uint32_t z) const;

  // Uniform in [-1e-4, 1e-4].
  std::vector<float> init_table(std::uint64_t seed) const;

  // Trilinear lookup of every level, concatenated in level order. `p` must lie
  // in [0,1]^3 (1e-9 tolerance, DomainError otherwise); `out` has output_dim()
  // entries.
  template <class T>
  void encode(std::span<const float> table, const Vec3& p, std::span<T> out) const;

  // Adds upstream-slice * trilinear weight into every touched table entry of
  // `grad` (same layout as the table).
  template <class T>
  void encode_backward(const Vec3& p, std::span<const T> upstream, std::span<T> grad) const;

  // Row-major batches: `positions` is n x 3 in [0,1]^3 (clamped), `out` and
  // `upstream` are n x output_dim(). The forward pass may use several threads;
  // the backward scatter is serial and in row order.
  template <class T>
  void encode_batch(std::span<const float> table, const T* positions, std::size_t n,
                    T* out) const;
  template <class T>
  void encode_batch_backward(const T* positions, std::size_t n, const T* upstream,
                             std::span<T> grad) const;

 private:
  struct Corners {
    std::size_t offset[8];  // float index of feature 0 of each corner
    double weight[8];
  };
  void corners(int level, const double* p, Corners& c) const;

  HashGridConfig config_;
  std::vector<int> resolutions_;
  std::vector<bool> dense_;
};

}  // namespace surfseg
