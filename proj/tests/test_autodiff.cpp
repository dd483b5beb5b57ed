// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "surfseg/autodiff.hpp"
#include "test_support.hpp"

using namespace surfseg;
using namespace surfseg::ad;
using Mat = Matrix<double>;

namespace {

Mat random_mat(std::mt19937_64& rng, int r, int c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

using Graph = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

// Reduces the graph output against a fixed random weight so that every output
// entry contributes a distinct amount.
double evaluate(const Graph& g, const std::vector<Mat>& inputs, const Mat* weight,
                std::vector<Mat>* adjoints) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.constant(m));
  Var out = g(tape, vars);
  Mat w = weight && weight->rows() == tape.value(out).rows() && weight->cols() == tape.value(out).cols()
              ? *weight
              : Mat::Ones(tape.value(out).rows(), tape.value(out).cols());
  Var root = tape.sum(tape.mul(out, tape.constant(w)));
  const double value = tape.value(root)(0, 0);
  if (adjoints) {
    tape.backward(root);
    adjoints->clear();
    for (Var v : vars) {
      Mat a = tape.adjoint(v);
      if (a.size() == 0) a = Mat::Zero(tape.value(v).rows(), tape.value(v).cols());
      adjoints->push_back(a);
    }
  }
  return value;
}

double gradient_error(const Graph& g, const std::vector<Mat>& inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tape<double> probe;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(probe.constant(m));
  const Mat& shape = probe.value(g(probe, vars));
  const Mat weight = random_mat(rng, shape.rows(), shape.cols(), -1.0, 1.0);

  std::vector<Mat> adjoints;
  evaluate(g, inputs, &weight, &adjoints);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (int i = 0; i < inputs[k].size(); ++i) {
      auto shifted = inputs;
      const double h = 1e-6;
      shifted[k].data()[i] += h;
      const double up = evaluate(g, shifted, &weight, nullptr);
      shifted[k].data()[i] -= 2 * h;
      const double down = evaluate(g, shifted, &weight, nullptr);
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, testing::rel_error(adjoints[k].data()[i], fd, 1e-4));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("per-op gradients match central differences") {
  std::mt19937_64 rng(17);
  const Mat x = random_mat(rng, 3, 4, -2.0, 2.0);
  const Mat y = random_mat(rng, 3, 4, -2.0, 2.0);
  const Mat pos = random_mat(rng, 3, 4, 0.5, 3.0);
  const double tol = 1e-6;

  struct Case {
    const char* name;
    Graph graph;
    std::vector<Mat> inputs;
  };
  auto sparse = std::make_shared<SparseMap>();
  sparse->out_rows = 3;
  sparse->out_cols = 2;
  sparse->terms = {{0, 0, 0, 1, 0.5}, {0, 1, 2, 3, -1.5}, {2, 1, 1, 1, 2.0}, {1, 0, 1, 2, 1.0}, {2, 1, 0, 0, 0.25}};

  const std::vector<Case> cases = {
      {"softplus", [](Tape<double>& t, const std::vector<Var>& v) { return t.softplus(v[0], 3.0); }, {x}},
      {"relu", [](Tape<double>& t, const std::vector<Var>& v) { return t.relu(v[0]); }, {x}},
      {"sigmoid", [](Tape<double>& t, const std::vector<Var>& v) { return t.sigmoid(v[0]); }, {x}},
      {"exp", [](Tape<double>& t, const std::vector<Var>& v) { return t.exp(v[0]); }, {x}},
      {"log", [](Tape<double>& t, const std::vector<Var>& v) { return t.log(v[0]); }, {pos}},
      {"abs", [](Tape<double>& t, const std::vector<Var>& v) { return t.abs(v[0]); }, {x}},
      {"square", [](Tape<double>& t, const std::vector<Var>& v) { return t.square(v[0]); }, {x}},
      {"max_const", [](Tape<double>& t, const std::vector<Var>& v) { return t.max_const(v[0], 0.3); }, {x}},
      {"clamp", [](Tape<double>& t, const std::vector<Var>& v) { return t.clamp(v[0], -1.0, 1.0); }, {x}},
      {"add", [](Tape<double>& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); }, {x, y}},
      {"sub", [](Tape<double>& t, const std::vector<Var>& v) { return t.sub(v[0], v[1]); }, {x, y}},
      {"mul", [](Tape<double>& t, const std::vector<Var>& v) { return t.mul(v[0], v[1]); }, {x, y}},
      {"scale", [](Tape<double>& t, const std::vector<Var>& v) { return t.scale(v[0], -2.5); }, {x}},
      {"add_const", [](Tape<double>& t, const std::vector<Var>& v) { return t.add_const(v[0], 4.0); }, {x}},
      {"concat_cols",
       [](Tape<double>& t, const std::vector<Var>& v) { return t.concat_cols({v[0], t.square(v[1]), v[0]}); },
       {x, y}},
      {"slice_cols", [](Tape<double>& t, const std::vector<Var>& v) { return t.slice_cols(v[0], 1, 2); }, {x}},
      {"slice_rows", [](Tape<double>& t, const std::vector<Var>& v) { return t.slice_rows(v[0], 1, 2); }, {x}},
      {"sum", [](Tape<double>& t, const std::vector<Var>& v) { return t.sum(t.square(v[0])); }, {x}},
      {"mean", [](Tape<double>& t, const std::vector<Var>& v) { return t.mean(t.square(v[0])); }, {x}},
      {"row_sum", [](Tape<double>& t, const std::vector<Var>& v) { return t.row_sum(v[0]); }, {x}},
      {"row_norm", [](Tape<double>& t, const std::vector<Var>& v) { return t.row_norm(v[0]); }, {x}},
      {"affine",
       [](Tape<double>& t, const std::vector<Var>& v) { return t.affine(v[0], v[1], v[2]); },
       {x, random_mat(rng, 5, 4, -1, 1), random_mat(rng, 1, 5, -1, 1)}},
      {"sparse_linear", [sparse](Tape<double>& t, const std::vector<Var>& v) { return t.sparse_linear(v[0], sparse); },
       {x}},
      {"custom cube",
       [](Tape<double>& t, const std::vector<Var>& v) {
         const Mat in = t.value(v[0]);
         Var x0 = v[0];
         return t.custom({x0}, in.array().cube().matrix(),
                         [x0](const Mat& adj, BackwardScope<double>& s) {
                           s.adjoint(x0).array() += adj.array() * 3.0 * s.value(x0).array().square();
                         });
       },
       {x}},
      {"reused node",
       [](Tape<double>& t, const std::vector<Var>& v) {
         Var s = t.sigmoid(v[0]);
         return t.mul(s, t.add(s, t.exp(v[1])));
       },
       {x, y}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(gradient_error(c.graph, c.inputs, 99) < tol);
  }
}

TEST_CASE("closed-form examples") {
  Tape<double> t;
  SUBCASE("sigmoid slope at zero") {
    Var x = t.constant(Mat::Zero(1, 1));
    Var root = t.sum(t.sigmoid(x));
    t.backward(root);
    CHECK(t.value(root)(0, 0) == doctest::Approx(0.5));
    CHECK(t.adjoint(x)(0, 0) == doctest::Approx(0.25));
  }
  SUBCASE("weighted sum returns the weights") {
    Mat w(1, 3);
    w << 2.0, -1.0, 0.5;
    Var x = t.constant(Mat::Ones(1, 3));
    Var root = t.sum(t.mul(x, t.constant(w)));
    t.backward(root);
    CHECK(t.adjoint(x) == w);
  }
  SUBCASE("softplus with large beta approaches relu") {
    Mat v(1, 3);
    v << -1.0, 0.0, 2.0;
    Var s = t.softplus(t.constant(v), 100.0);
    CHECK(t.value(s)(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.value(s)(0, 1) == doctest::Approx(std::log(2.0) / 100.0));
    CHECK(t.value(s)(0, 2) == doctest::Approx(2.0));
  }
  SUBCASE("softplus stays finite for extreme inputs") {
    Mat v(1, 2);
    v << -1e4, 1e4;
    Var s = t.softplus(t.constant(v), 100.0);
    CHECK(std::isfinite(t.value(s)(0, 0)));
    CHECK(t.value(s)(0, 1) == doctest::Approx(1e4));
  }
  SUBCASE("non-scalar root is rejected") {
    Var x = t.constant(Mat::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(x), ContractError);
  }
}

TEST_CASE("backward is linear in the root") {
  std::mt19937_64 rng(3);
  const Mat x = random_mat(rng, 2, 3, -1, 1);
  auto grad_of = [&](double k) {
    Tape<double> t;
    Var v = t.constant(x);
    Var root = t.scale(t.sum(t.square(t.sigmoid(v))), k);
    t.backward(root);
    return Mat(t.adjoint(v));
  };
  const Mat g1 = grad_of(1.0), g3 = grad_of(3.0);
  CHECK((g3 - 3.0 * g1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("parameter gradients") {
  ParamStore params;
  const ParamId w = params.add("w", 2, 3, 0.0f);
  const ParamId b = params.add("b", 1, 2, 0.0f);
  std::mt19937_64 rng(8);
  for (auto& v : params[w].values) v = std::uniform_real_distribution<float>(-1, 1)(rng);
  params[b].values = {0.25f, -0.5f};
  const Mat x = random_mat(rng, 4, 3, -1, 1);

  auto loss = [&](GradStore<double>* grads) {
    Tape<double> t;
    Var out = t.affine(t.constant(x), t.parameter(params, w), t.parameter(params, b));
    Var root = t.mean(t.square(t.sigmoid(out)));
    if (grads) t.backward(root, *grads);
    return t.value(root)(0, 0);
  };
  GradStore<double> grads(params);
  loss(&grads);
  double worst = 0.0;
  for (ParamId id : {w, b}) {
    for (std::size_t i = 0; i < params[id].values.size(); ++i) {
      const double fd = testing::float_param_derivative(params[id].values[i], 1e-3, [&] { return loss(nullptr); });
      worst = std::max(worst, testing::rel_error(grads[id][i], fd, 1e-4));
    }
  }
  CHECK(worst < 1e-4);

  SUBCASE("gradients accumulate across backward calls") {
    GradStore<double> twice(params);
    loss(&twice);
    loss(&twice);
    for (std::size_t i = 0; i < twice[w].size(); ++i) CHECK(twice[w][i] == doctest::Approx(2 * grads[w][i]));
    twice.zero();
    CHECK(twice.norm() == 0.0);
  }
}

TEST_CASE("parameter store") {
  ParamStore p;
  const ParamId a = p.add("a", 2, 2, 1.5f);
  CHECK(p.find("a").index == a.index);
  CHECK_THROWS_AS(p.find("missing"), ContractError);
  CHECK(p.total_floats() == 4);
  CHECK(p[a].values == std::vector<float>(4, 1.5f));
  CHECK_THROWS_AS(p.add("a", 1, 1), ContractError);
  CHECK_THROWS_AS(p.add("empty", 0, 3), ContractError);

  ParamStore q;
  q.add("a", 2, 2);
  CHECK(p.same_layout(q));
  q.add("b", 1, 1);
  CHECK_FALSE(p.same_layout(q));
}

TEST_CASE("adam") {
  ParamStore p;
  const ParamId id = p.add("x", 1, 4, 1.0f);
  GradStore<float> g(p);
  g[id] = {0.5f, -2.0f, 1e-3f, 0.0f};
  Adam adam(p);
  adam.step(p, g, 0.01);
  CHECK(adam.steps() == 1);
  // Bias-corrected first step moves each entry by lr * sign(g).
  CHECK(p[id].values[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p[id].values[1] == doctest::Approx(1.01).epsilon(1e-6));
  CHECK(p[id].values[2] == doctest::Approx(0.99).epsilon(1e-5));
  CHECK(p[id].values[3] == 1.0f);

  SUBCASE("zero gradients leave fresh parameters unchanged") {
    ParamStore q;
    const ParamId qi = q.add("y", 3, 1, 2.0f);
    GradStore<float> zero(q);
    Adam fresh(q);
    for (int i = 0; i < 5; ++i) fresh.step(q, zero, 0.1);
    CHECK(q[qi].values == std::vector<float>(3, 2.0f));
  }
  SUBCASE("layout mismatch is rejected") {
    ParamStore other;
    other.add("z", 3, 2);
    GradStore<float> wrong(other);
    CHECK_THROWS_AS(adam.step(p, wrong, 0.01), ContractError);
  }
}

TEST_CASE("gradient clipping") {
  ParamStore p;
  const ParamId id = p.add("x", 1, 2);
  GradStore<float> g(p);
  g[id] = {3.0f, 4.0f};
  CHECK(clip_grad_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g[id][0] == 3.0f);
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-6));
}
