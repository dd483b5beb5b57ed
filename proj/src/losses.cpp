// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace surfseg {

using ad::Matrix;
using ad::Tape;
using ad::Var;

void LossWeights::validate() const {
  if (!(eikonal >= 0.0) || !(sparsity >= 0.0) || !(mask >= 0.0)) {
    throw ContractError("loss weights must be non-negative");
  }
  if (!(tau > 0.0)) throw ContractError("tau must be positive");
}

double color_loss(std::span<const Vec3> rendered, std::span<const Vec3> target) {
  if (rendered.size() != target.size()) {
    throw ContractError("color_loss: " + std::to_string(rendered.size()) + " rendered vs " +
                        std::to_string(target.size()) + " target pixels");
  }
  if (rendered.empty()) throw ContractError("color_loss: empty batch");
  double sum = 0.0;
  for (std::size_t k = 0; k < rendered.size(); ++k) sum += (rendered[k] - target[k]).squaredNorm();
  return sum / static_cast<double>(rendered.size());
}

double eikonal_loss(std::span<const Vec3> normals) {
  if (normals.empty()) throw ContractError("eikonal_loss: no normals");
  double sum = 0.0;
  for (const Vec3& n : normals) {
    const double d = n.norm() - 1.0;
    sum += d * d;
  }
  return sum / static_cast<double>(normals.size());
}

double sparsity_loss(std::span<const double> sdf, double tau) {
  if (!(tau > 0.0)) throw ContractError("sparsity_loss: tau must be positive");
  if (sdf.empty()) throw ContractError("sparsity_loss: no samples");
  double sum = 0.0;
  for (double s : sdf) sum += std::exp(-2.0 * tau * std::abs(s));
  return sum / static_cast<double>(sdf.size());
}

double mask_loss(std::span<const double> alpha, std::span<const double> mask) {
  if (alpha.size() != mask.size()) throw ContractError("mask_loss: size mismatch");
  if (alpha.empty()) throw ContractError("mask_loss: empty batch");
  double sum = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double a = std::clamp(alpha[k], kMaskAlphaEps, 1.0 - kMaskAlphaEps);
    sum -= mask[k] * std::log(a) + (1.0 - mask[k]) * std::log(1.0 - a);
  }
  return sum / static_cast<double>(alpha.size());
}

bool mask_term_active(const LossWeights& weights, long step, bool batch_has_mask) {
  return batch_has_mask && weights.mask > 0.0 && step < weights.mask_phase_end;
}

double total_loss(const LossParts& parts, const LossWeights& weights, long step) {
  double total = parts.color + weights.eikonal * parts.eikonal + weights.sparsity * parts.sparsity;
  if (mask_term_active(weights, step, parts.mask.has_value())) total += weights.mask * *parts.mask;
  return total;
}

template <class T>
Var color_loss(Tape<T>& tape, Var rendered, const Matrix<T>& target) {
  const Matrix<T>& r = tape.value(rendered);
  if (r.rows() != target.rows() || r.cols() != target.cols()) {
    throw ContractError("color_loss: " + std::to_string(r.rows()) + " rendered vs " +
                        std::to_string(target.rows()) + " target pixels");
  }
  const Var diff = tape.sub(rendered, tape.constant(target));
  return tape.scale(tape.sum(tape.square(diff)), T(1) / static_cast<T>(target.rows()));
}

template <class T>
Var eikonal_loss(Tape<T>& tape, Var normals) {
  return tape.mean(tape.square(tape.add_const(tape.row_norm(normals), T(-1))));
}

template <class T>
Var sparsity_loss(Tape<T>& tape, Var sdf, double tau) {
  if (!(tau > 0.0)) throw ContractError("sparsity_loss: tau must be positive");
  return tape.mean(tape.exp(tape.scale(tape.abs(sdf), static_cast<T>(-2.0 * tau))));
}

template <class T>
Var mask_loss(Tape<T>& tape, Var alpha, const Matrix<T>& mask) {
  const Matrix<T>& a = tape.value(alpha);
  if (a.rows() != mask.rows() || a.cols() != mask.cols()) {
    throw ContractError("mask_loss: size mismatch");
  }
  const T eps = static_cast<T>(kMaskAlphaEps);
  const Var ac = tape.clamp(alpha, eps, T(1) - eps);
  const Var log_a = tape.log(ac);
  const Var log_1ma = tape.log(tape.add_const(tape.scale(ac, T(-1)), T(1)));
  const Matrix<T> one_minus = (T(1) - mask.array()).matrix();
  const Var bce = tape.add(tape.mul(log_a, tape.constant(mask)),
                           tape.mul(log_1ma, tape.constant(one_minus)));
  return tape.scale(tape.mean(bce), T(-1));
}

template Var color_loss<float>(Tape<float>&, Var, const Matrix<float>&);
template Var color_loss<double>(Tape<double>&, Var, const Matrix<double>&);
template Var eikonal_loss<float>(Tape<float>&, Var);
template Var eikonal_loss<double>(Tape<double>&, Var);
template Var sparsity_loss<float>(Tape<float>&, Var, double);
template Var sparsity_loss<double>(Tape<double>&, Var, double);
template Var mask_loss<float>(Tape<float>&, Var, const Matrix<float>&);
template Var mask_loss<double>(Tape<double>&, Var, const Matrix<double>&);

}  // namespace surfseg
