// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/hash_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "surfseg/parallel.hpp"

namespace surfseg {

void HashGridConfig::validate() const {
  if (levels < 1) throw ContractError("hash grid needs at least one level");
  if (features_per_level < 1) throw ContractError("features_per_level must be >= 1");
  if (table_size == 0 || (table_size & (table_size - 1)) != 0) {
    throw ContractError("table_size must be a power of two");
  }
  if (n_min < 2) throw ContractError("n_min must be >= 2");
  if (n_max < n_min) throw ContractError("n_max must be >= n_min");
}

std::vector<int> level_resolutions(const HashGridConfig& config) {
  config.validate();
  if (config.levels == 1) return {config.n_min};
  const double growth =
      std::exp((std::log(double(config.n_max)) - std::log(double(config.n_min))) /
               (config.levels - 1));
  std::vector<int> out(config.levels);
  for (int i = 0; i < config.levels; ++i) {
    // The epsilon absorbs rounding in g^i so the last level lands on n_max.
    out[i] = static_cast<int>(std::floor(config.n_min * std::pow(growth, i) + 1e-6));
  }
  if (config.n_max > config.n_min) {
    for (int i = 1; i < config.levels; ++i) {
      if (out[i] <= out[i - 1]) {
        throw ContractError("resolution range too narrow for the number of levels");
      }
    }
  }
  return out;
}

HashGrid::HashGrid(HashGridConfig config)
    : config_(config), resolutions_(level_resolutions(config)) {
  dense_.resize(config_.levels);
  for (int l = 0; l < config_.levels; ++l) {
    const std::uint64_t side = static_cast<std::uint64_t>(resolutions_[l]) + 1;
    dense_[l] = side * side * side <= config_.table_size;
  }
}

std::uint32_t HashGrid::slot(int level, std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
  if (dense_[level]) {
    const std::uint32_t side = static_cast<std::uint32_t>(resolutions_[level]) + 1;
    return x + side * (y + side * z);
  }
  const std::uint32_t h = (x * 1u) ^ (y * 2654435761u) ^ (z * 805459861u);
  return h & (config_.table_size - 1);
}

std::vector<float> HashGrid::init_table(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1e-4f, 1e-4f);
  std::vector<float> table(table_floats());
  for (float& v : table) v = dist(rng);
  return table;
}

void HashGrid::corners(int level, const double* p, Corners& c) const {
  const int res = resolutions_[level];
  std::uint32_t base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double x = std::clamp(p[a], 0.0, 1.0) * res;
    const int i = std::min(static_cast<int>(x), res - 1);
    base[a] = static_cast<std::uint32_t>(i);
    frac[a] = x - i;
  }
  const std::size_t level_offset =
      static_cast<std::size_t>(level) * config_.table_size * config_.features_per_level;
  for (int k = 0; k < 8; ++k) {
    const std::uint32_t dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
    c.weight[k] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                  (dz ? frac[2] : 1.0 - frac[2]);
    c.offset[k] = level_offset + static_cast<std::size_t>(slot(level, base[0] + dx, base[1] + dy,
                                                                base[2] + dz)) *
                                     config_.features_per_level;
  }
}

namespace {

void check_domain(const Vec3& p) {
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= -1e-9 && p[a] <= 1.0 + 1e-9)) {
      throw DomainError("hash grid position outside [0,1]^3");
    }
  }
}

}  // namespace

template <class T>
void HashGrid::encode(std::span<const float> table, const Vec3& p, std::span<T> out) const {
  check_domain(p);
  if (table.size() != table_floats() || out.size() != static_cast<std::size_t>(output_dim())) {
    throw ContractError("hash grid encode: size mismatch");
  }
  const int d = config_.features_per_level;
  Corners c;
  for (int l = 0; l < config_.levels; ++l) {
    corners(l, p.data(), c);
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += c.weight[k] * table[c.offset[k] + j];
      out[l * d + j] = static_cast<T>(acc);
    }
  }
}

template <class T>
void HashGrid::encode_backward(const Vec3& p, std::span<const T> upstream,
                               std::span<T> grad) const {
  if (grad.size() != table_floats() || upstream.size() != static_cast<std::size_t>(output_dim())) {
    throw ContractError("hash grid backward: size mismatch");
  }
  const int d = config_.features_per_level;
  Corners c;
  for (int l = 0; l < config_.levels; ++l) {
    corners(l, p.data(), c);
    for (int k = 0; k < 8; ++k) {
      for (int j = 0; j < d; ++j) {
        grad[c.offset[k] + j] += static_cast<T>(c.weight[k] * upstream[l * d + j]);
      }
    }
  }
}

template <class T>
void HashGrid::encode_batch(std::span<const float> table, const T* positions, std::size_t n,
                            T* out) const {
  const int d = config_.features_per_level;
  const int dim = output_dim();
  parallel_for(0, n, 2048, [&](std::size_t lo, std::size_t hi) {
    Corners c;
    for (std::size_t r = lo; r < hi; ++r) {
      const double p[3] = {double(positions[3 * r]), double(positions[3 * r + 1]),
                           double(positions[3 * r + 2])};
      T* row = out + r * dim;
      for (int l = 0; l < config_.levels; ++l) {
        corners(l, p, c);
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int k = 0; k < 8; ++k) acc += c.weight[k] * table[c.offset[k] + j];
          row[l * d + j] = static_cast<T>(acc);
        }
      }
    }
  });
}

template <class T>
void HashGrid::encode_batch_backward(const T* positions, std::size_t n, const T* upstream,
                                     std::span<T> grad) const {
  const int d = config_.features_per_level;
  const int dim = output_dim();
  Corners c;
  for (std::size_t r = 0; r < n; ++r) {
    const double p[3] = {double(positions[3 * r]), double(positions[3 * r + 1]),
                         double(positions[3 * r + 2])};
    const T* up = upstream + r * dim;
    for (int l = 0; l < config_.levels; ++l) {
      bool any = false;
      for (int j = 0; j < d; ++j) any = any || up[l * d + j] != T(0);
      if (!any) continue;
      corners(l, p, c);
      for (int k = 0; k < 8; ++k) {
        for (int j = 0; j < d; ++j) {
          grad[c.offset[k] + j] += static_cast<T>(c.weight[k] * up[l * d + j]);
        }
      }
    }
  }
}

template void HashGrid::encode<float>(std::span<const float>, const Vec3&, std::span<float>) const;
template void HashGrid::encode<double>(std::span<const float>, const Vec3&,
                                       std::span<double>) const;
template void HashGrid::encode_backward<float>(const Vec3&, std::span<const float>,
                                               std::span<float>) const;
template void HashGrid::encode_backward<double>(const Vec3&, std::span<const double>,
                                                std::span<double>) const;
template void HashGrid::encode_batch<float>(std::span<const float>, const float*, std::size_t,
                                            float*) const;
template void HashGrid::encode_batch<double>(std::span<const float>, const double*, std::size_t,
                                             double*) const;
template void HashGrid::encode_batch_backward<float>(const float*, std::size_t, const float*,
                                                     std::span<float>) const;
template void HashGrid::encode_batch_backward<double>(const double*, std::size_t, const double*,
                                                      std::span<double>) const;

}  // namespace surfseg
