// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>

#include "surfseg/autodiff.hpp"
#include "surfseg/common.hpp"

namespace surfseg {

struct LossWeights {
  double eikonal = 0.1;
  double sparsity = 0.01;
  double tau = 10.0;
  double mask = 0.5;
  long mask_phase_end = 0;  // mask term active for step < mask_phase_end

  void validate() const;
};

inline constexpr double kMaskAlphaEps = 1e-7;

// Mean over the batch of the squared L2 distance per pixel.
double color_loss(std::span<const Vec3> rendered, std::span<const Vec3> target);
// Mean of (|n| - 1)^2.
double eikonal_loss(std::span<const Vec3> normals);
// Mean of exp(-tau |sdf|)^2.
double sparsity_loss(std::span<const double> sdf, double tau);
// Mean binary cross entropy with alpha clamped to [eps, 1 - eps].
double mask_loss(std::span<const double> alpha, std::span<const double> mask);

struct LossParts {
  double color = 0.0;
  double eikonal = 0.0;
  double sparsity = 0.0;
  std::optional<double> mask;  // absent when the batch has no mask
};

bool mask_term_active(const LossWeights& weights, long step, bool batch_has_mask);

double total_loss(const LossParts& parts, const LossWeights& weights, long step);

// Tape versions; every result is a 1 x 1 node.
template <class T>
ad::Var color_loss(ad::Tape<T>& tape, ad::Var rendered, const ad::Matrix<T>& target);
template <class T>
ad::Var eikonal_loss(ad::Tape<T>& tape, ad::Var normals);
template <class T>
ad::Var sparsity_loss(ad::Tape<T>& tape, ad::Var sdf, double tau);
template <class T>
ad::Var mask_loss(ad::Tape<T>& tape, ad::Var alpha, const ad::Matrix<T>& mask);

}  // namespace surfseg
