// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "surfseg/common.hpp"

namespace surfseg::ad {

struct ParamId {
  int index = -1;
  bool valid() const { return index >= 0; }
};

struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<float> values;  // row-major
};

// Owns every learnable tensor. Names are unique; shapes are fixed at creation.
class ParamStore {
 public:
  ParamId add(std::string name, int rows, int cols, float fill = 0.0f);
  ParamId find(std::string_view name) const;

  std::size_t size() const { return tensors_.size(); }
  std::size_t total_floats() const;
  Tensor& operator[](ParamId id) { return tensors_.at(id.index); }
  const Tensor& operator[](ParamId id) const { return tensors_.at(id.index); }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  // Same names and shapes, in the same order.
  bool same_layout(const ParamStore& other) const;

 private:
  std::vector<Tensor> tensors_;
};

template <class T>
class GradStore {
 public:
  explicit GradStore(const ParamStore& params);

  std::vector<T>& operator[](ParamId id) { return grads_.at(id.index); }
  const std::vector<T>& operator[](ParamId id) const { return grads_.at(id.index); }
  std::size_t size() const { return grads_.size(); }

  void zero();
  double norm() const;
  void scale(double factor);

 private:
  std::vector<std::vector<T>> grads_;
};

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
};

// One entry of a sparse linear map: out(out_row, out_col) += coeff * in(in_row, in_col).
struct SparseTerm {
  int out_row;
  int out_col;
  int in_row;
  int in_col;
  double coeff;
};

struct SparseMap {
  int out_rows = 0;
  int out_cols = 0;
  std::vector<SparseTerm> terms;
};

template <class T>
class Tape;

// Handed to custom backward functions.
template <class T>
class BackwardScope {
 public:
  BackwardScope(Tape<T>& tape, GradStore<T>* grads) : tape_(tape), grads_(grads) {}
  // Zero-initialized on first use.
  Matrix<T>& adjoint(Var v);
  GradStore<T>& grads();
  const Matrix<T>& value(Var v) const;

 private:
  Tape<T>& tape_;
  GradStore<T>* grads_;
};

// Reverse-mode tape over row-batched matrices. Nodes are appended in
// evaluation order and may only reference earlier nodes.
template <class T>
class Tape {
 public:
  using Mat = Matrix<T>;
  using BackwardFn = std::function<void(const Mat& adjoint, BackwardScope<T>& scope)>;

  Var constant(Mat value);
  Var parameter(const ParamStore& params, ParamId id);

  // x * w^T + b, with x: n x in, w: out x in, b: 1 x out.
  Var affine(Var x, Var w, Var b);
  Var softplus(Var x, T beta);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var abs(Var x);
  Var square(Var x);
  Var max_const(Var x, T c);
  Var clamp(Var x, T lo, T hi);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, T c);
  Var add_const(Var x, T c);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var x, int start, int count);
  Var slice_rows(Var x, int start, int count);
  Var sum(Var x);
  Var mean(Var x);
  Var row_sum(Var x);
  Var row_norm(Var x);
  Var sparse_linear(Var x, std::shared_ptr<const SparseMap> map);
  Var custom(std::vector<Var> inputs, Mat value, BackwardFn backward);

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  // Empty (0 x 0) when the node was not reached by backward().
  const Mat& adjoint(Var v) const { return nodes_.at(v.id).adjoint; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d root / d root = 1 and propagates; parameter adjoints are added to
  // `grads`. Throws ContractError unless root is 1 x 1.
  void backward(Var root, GradStore<T>& grads);
  // Same, without parameter gradients (inputs only).
  void backward(Var root);

 private:
  friend class BackwardScope<T>;

  enum class Op {
    kConstant, kParameter, kAffine, kSoftplus, kRelu, kSigmoid, kExp, kLog, kAbs, kSquare,
    kMaxConst, kClamp, kAdd, kSub, kMul, kScale, kAddConst, kConcat, kSliceCols, kSliceRows,
    kSum, kMean, kRowSum, kRowNorm, kSparse, kCustom
  };

  struct Node {
    Op op = Op::kConstant;
    std::vector<int> inputs;
    Mat value;
    Mat adjoint;
    T a = T(0);
    T b = T(0);
    int start = 0;
    ParamId param;
    std::shared_ptr<const SparseMap> sparse;
    BackwardFn custom;
  };

  Var push(Node node);
  Mat& adjoint_ref(int id);
  void run_backward(Var root, GradStore<T>* grads);

  std::vector<Node> nodes_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-15;
};

// Adam with bias correction. Moments start at zero.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& params, AdamConfig config = {});

  // One update with step index t = steps() + 1. Throws ContractError on a
  // layout mismatch between params, grads and state.
  void step(ParamStore& params, const GradStore<float>& grads, double lr);

  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;

  void set_steps(long t) { steps_ = t; }

 private:
  AdamConfig config_;
  long steps_ = 0;
};

// Rescales `grads` so that its global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(GradStore<float>& grads, double max_norm);

}  // namespace surfseg::ad
