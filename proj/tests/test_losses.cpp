// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "surfseg/fields.hpp"
#include "surfseg/losses.hpp"
#include "test_support.hpp"

using namespace surfseg;
using Mat = ad::Matrix<double>;

namespace {

Mat random_mat(std::mt19937_64& rng, int r, int c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

std::vector<Vec3> rows_of(const Mat& m) {
  std::vector<Vec3> out;
  for (int r = 0; r < m.rows(); ++r) out.emplace_back(m(r, 0), m(r, 1), m(r, 2));
  return out;
}

// Compares tape gradients of a scalar loss against central differences.
double tape_fd_error(const Mat& input, const std::function<ad::Var(ad::Tape<double>&, ad::Var)>& loss) {
  ad::Tape<double> tape;
  ad::Var x = tape.constant(input);
  ad::Var root = loss(tape, x);
  tape.backward(root);
  const Mat grad = tape.adjoint(x);
  double worst = 0.0;
  for (int i = 0; i < input.size(); ++i) {
    auto eval = [&](double shift) {
      Mat m = input;
      m.data()[i] += shift;
      ad::Tape<double> t;
      return t.value(loss(t, t.constant(m)))(0, 0);
    };
    const double h = 1e-6;
    const double fd = (eval(h) - eval(-h)) / (2 * h);
    worst = std::max(worst, testing::rel_error(grad.data()[i], fd, 1e-6));
  }
  return worst;
}

}  // namespace

TEST_CASE("color loss") {
  const std::vector<Vec3> a = {Vec3(0.1, 0.2, 0.3), Vec3(0.9, 0.5, 0.0)};
  CHECK(color_loss(a, a) == 0.0);
  CHECK(color_loss(std::vector<Vec3>{Vec3(1, 0, 0)}, std::vector<Vec3>{Vec3::Zero()}) == 1.0);
  CHECK_THROWS_AS(color_loss(a, std::vector<Vec3>{Vec3::Zero()}), ContractError);

  std::mt19937_64 rng(21);
  const Mat r = random_mat(rng, 37, 3, 0, 1), t = random_mat(rng, 37, 3, 0, 1);
  double naive = 0.0;
  for (int i = 0; i < 37; ++i) {
    for (int c = 0; c < 3; ++c) naive += (r(i, c) - t(i, c)) * (r(i, c) - t(i, c));
  }
  naive /= 37;
  CHECK(std::abs(color_loss(rows_of(r), rows_of(t)) - naive) < 1e-12);

  ad::Tape<double> tape;
  CHECK(std::abs(tape.value(color_loss(tape, tape.constant(r), t))(0, 0) - naive) < 1e-12);
  CHECK(tape_fd_error(r, [&](ad::Tape<double>& tp, ad::Var x) { return color_loss(tp, x, t); }) < 1e-4);
}

TEST_CASE("eikonal loss") {
  CHECK(eikonal_loss(std::vector<Vec3>{Vec3(1, 0, 0), Vec3(0, 0.6, 0.8)}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(eikonal_loss(std::vector<Vec3>{Vec3(0, 2, 0)}) == 1.0);

  SUBCASE("exact sphere SDF through the finite-difference stencil") {
    std::mt19937_64 rng(22);
    const Mat centers = random_mat(rng, 200, 3, -0.9, 0.9);
    const NormalStencil st = make_normal_stencil(200, nullptr, 1e-3);
    const Mat stacked = st.stack(centers);
    Mat sdf(stacked.rows(), 1);
    for (int r = 0; r < stacked.rows(); ++r) sdf(r, 0) = stacked.row(r).norm() - 0.5;
    ad::Tape<double> tape;
    ad::Var normals = tape.sparse_linear(tape.constant(sdf), st.map);
    CHECK(tape.value(eikonal_loss(tape, normals))(0, 0) <= 1e-5);
    CHECK(eikonal_loss(rows_of(tape.value(normals))) <= 1e-5);
  }
  SUBCASE("gradients") {
    std::mt19937_64 rng(23);
    const Mat n = random_mat(rng, 20, 3, -1.5, 1.5);
    CHECK(tape_fd_error(n, [](ad::Tape<double>& tp, ad::Var x) { return eikonal_loss(tp, x); }) < 1e-4);
  }
}

TEST_CASE("sparsity loss") {
  CHECK(sparsity_loss(std::vector<double>(4, 0.0), 10.0) == 1.0);
  CHECK(sparsity_loss(std::vector<double>(4, 0.1), 10.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(sparsity_loss(std::vector<double>(4, -0.1), 10.0) == doctest::Approx(0.13534).epsilon(1e-4));
  CHECK(sparsity_loss(std::vector<double>{1e6, -1e6}, 10.0) == 0.0);

  double prev = 2.0;
  for (double s = 0.0; s < 2.0; s += 0.01) {
    const double v = sparsity_loss(std::vector<double>{s}, 10.0);
    CHECK(v < prev);
    prev = v;
  }

  std::mt19937_64 rng(24);
  const Mat sdf = random_mat(rng, 30, 1, -0.4, 0.4);
  CHECK(tape_fd_error(sdf, [](ad::Tape<double>& tp, ad::Var x) { return sparsity_loss(tp, x, 10.0); }) < 1e-4);
}

TEST_CASE("mask loss") {
  const double eps = kMaskAlphaEps;
  CHECK(mask_loss(std::vector<double>{1.0 - eps}, std::vector<double>{1.0}) < 1e-6);
  CHECK(mask_loss(std::vector<double>{0.5}, std::vector<double>{1.0}) == doctest::Approx(std::log(2.0)));
  CHECK(mask_loss(std::vector<double>{0.9}, std::vector<double>{0.0}) == doctest::Approx(-std::log(0.1)));
  CHECK(std::isfinite(mask_loss(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 0.0})));
  CHECK_THROWS_AS(mask_loss(std::vector<double>{0.5}, std::vector<double>{}), ContractError);

  SUBCASE("convex in the logit") {
    for (double m : {0.0, 1.0}) {
      auto at = [&](double z) { return mask_loss(std::vector<double>{1.0 / (1.0 + std::exp(-z))}, std::vector<double>{m}); };
      const double h = 0.05;
      for (double z = -8.0; z <= 8.0; z += 0.1) CHECK(at(z + h) - 2 * at(z) + at(z - h) >= -1e-9);
    }
  }
  SUBCASE("gradients") {
    std::mt19937_64 rng(25);
    const Mat alpha = random_mat(rng, 25, 1, 0.05, 0.95);
    Mat mask(25, 1);
    for (int i = 0; i < 25; ++i) mask(i, 0) = i % 2;
    CHECK(tape_fd_error(alpha, [&](ad::Tape<double>& tp, ad::Var x) { return mask_loss(tp, x, mask); }) < 1e-4);
  }
}

TEST_CASE("total loss") {
  LossWeights w;
  w.eikonal = 0.1;
  w.sparsity = 0.01;
  w.mask = 0.5;
  w.mask_phase_end = 100;
  LossParts p;
  p.color = 0.5;
  p.eikonal = 0.2;
  p.sparsity = 0.3;
  CHECK(total_loss(p, w, 0) == doctest::Approx(0.523).epsilon(1e-12));

  p.mask = 0.8;
  CHECK(total_loss(p, w, 99) == doctest::Approx(0.523 + 0.4).epsilon(1e-12));
  CHECK(total_loss(p, w, 100) == doctest::Approx(0.523).epsilon(1e-12));
  CHECK(mask_term_active(w, 99, true));
  CHECK_FALSE(mask_term_active(w, 100, true));
  CHECK_FALSE(mask_term_active(w, 5, false));

  LossWeights zero;
  zero.eikonal = zero.sparsity = zero.mask = 0.0;
  zero.mask_phase_end = 100;
  CHECK(total_loss(p, zero, 0) == p.color);

  SUBCASE("exact weighted sum, linear in each weight") {
    for (double k : {0.0, 0.5, 2.0, 7.0}) {
      LossWeights v = w;
      v.eikonal = k * w.eikonal;
      CHECK(total_loss(p, v, 0) - total_loss(p, w, 0) == doctest::Approx((k - 1) * w.eikonal * p.eikonal));
      v = w;
      v.sparsity = k * w.sparsity;
      CHECK(total_loss(p, v, 0) - total_loss(p, w, 0) == doctest::Approx((k - 1) * w.sparsity * p.sparsity));
    }
  }
  SUBCASE("weight validation") {
    LossWeights bad = w;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = w;
    bad.eikonal = -1.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }
}

TEST_CASE("every loss is non-negative") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat a = random_mat(rng, 10, 3, -2, 2), b = random_mat(rng, 10, 3, 0, 1);
    CHECK(color_loss(rows_of(a), rows_of(b)) >= 0.0);
    CHECK(eikonal_loss(rows_of(a)) >= 0.0);
    std::vector<double> s(a.data(), a.data() + 10), al(b.data(), b.data() + 10), m(10);
    for (int i = 0; i < 10; ++i) m[i] = i % 2;
    CHECK(sparsity_loss(s, 10.0) >= 0.0);
    CHECK(mask_loss(al, m) >= 0.0);
  }
}
