// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/autodiff.hpp"

#include <cmath>
#include <string>

namespace surfseg::ad {

ParamId ParamStore::add(std::string name, int rows, int cols, float fill) {
  if (rows <= 0 || cols <= 0) throw ContractError("parameter '" + name + "' has an empty shape");
  for (const auto& t : tensors_) {
    if (t.name == name) throw ContractError("duplicate parameter name '" + name + "'");
  }
  Tensor t;
  t.name = std::move(name);
  t.rows = rows;
  t.cols = cols;
  t.values.assign(static_cast<std::size_t>(rows) * cols, fill);
  tensors_.push_back(std::move(t));
  return ParamId{static_cast<int>(tensors_.size()) - 1};
}

ParamId ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return ParamId{static_cast<int>(i)};
  }
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParamStore::total_floats() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

template <class T>
GradStore<T>::GradStore(const ParamStore& params) {
  grads_.reserve(params.size());
  for (const auto& t : params.tensors()) grads_.emplace_back(t.values.size(), T(0));
}

template <class T>
void GradStore<T>::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), T(0));
}

template <class T>
double GradStore<T>::norm() const {
  double s = 0.0;
  for (const auto& g : grads_) {
    for (T v : g) s += double(v) * double(v);
  }
  return std::sqrt(s);
}

template <class T>
void GradStore<T>::scale(double factor) {
  const T f = static_cast<T>(factor);
  for (auto& g : grads_) {
    for (T& v : g) v *= f;
  }
}

template <class T>
Matrix<T>& BackwardScope<T>::adjoint(Var v) {
  return tape_.adjoint_ref(v.id);
}

template <class T>
GradStore<T>& BackwardScope<T>::grads() {
  if (!grads_) throw ContractError("parameter gradients requested without a gradient store");
  return *grads_;
}

template <class T>
const Matrix<T>& BackwardScope<T>::value(Var v) const {
  return tape_.value(v);
}

namespace {

template <class M>
void require_same_shape(const M& a, const M& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
  }
}

}  // namespace

template <class T>
Var Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
typename Tape<T>::Mat& Tape<T>::adjoint_ref(int id) {
  Node& n = nodes_.at(id);
  if (n.adjoint.size() == 0 && n.value.size() != 0) {
    n.adjoint = Mat::Zero(n.value.rows(), n.value.cols());
  }
  return n.adjoint;
}

template <class T>
Var Tape<T>::constant(Mat value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::parameter(const ParamStore& params, ParamId id) {
  const Tensor& t = params[id];
  Node n;
  n.op = Op::kParameter;
  n.value = Eigen::Map<const Matrix<float>>(t.values.data(), t.rows, t.cols).template cast<T>();
  n.param = id;
  return push(std::move(n));
}

template <class T>
Var Tape<T>::affine(Var x, Var w, Var b) {
  const Mat& X = value(x);
  const Mat& W = value(w);
  const Mat& B = value(b);
  if (X.cols() != W.cols() || B.rows() != 1 || B.cols() != W.rows()) {
    throw ContractError("affine: incompatible shapes");
  }
  Node n;
  n.op = Op::kAffine;
  n.inputs = {x.id, w.id, b.id};
  n.value.noalias() = X * W.transpose();
  n.value.rowwise() += B.row(0);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::softplus(Var x, T beta) {
  Node n;
  n.op = Op::kSoftplus;
  n.inputs = {x.id};
  n.a = beta;
  const auto z = (beta * value(x).array()).eval();
  n.value = ((z.max(T(0)) + (T(1) + (-z.abs()).exp()).log()) / beta).matrix();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::relu(Var x) {
  Node n;
  n.op = Op::kRelu;
  n.inputs = {x.id};
  n.value = value(x).cwiseMax(T(0));
  return push(std::move(n));
}

template <class T>
Var Tape<T>::sigmoid(Var x) {
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {x.id};
  n.value = (T(1) / (T(1) + (-value(x).array()).exp())).matrix();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::exp(Var x) {
  Node n;
  n.op = Op::kExp;
  n.inputs = {x.id};
  n.value = value(x).array().exp().matrix();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::log(Var x) {
  Node n;
  n.op = Op::kLog;
  n.inputs = {x.id};
  n.value = value(x).array().log().matrix();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::abs(Var x) {
  Node n;
  n.op = Op::kAbs;
  n.inputs = {x.id};
  n.value = value(x).cwiseAbs();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::square(Var x) {
  Node n;
  n.op = Op::kSquare;
  n.inputs = {x.id};
  n.value = value(x).array().square().matrix();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::max_const(Var x, T c) {
  Node n;
  n.op = Op::kMaxConst;
  n.inputs = {x.id};
  n.a = c;
  n.value = value(x).cwiseMax(c);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::clamp(Var x, T lo, T hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  Node n;
  n.op = Op::kClamp;
  n.inputs = {x.id};
  n.a = lo;
  n.b = hi;
  n.value = value(x).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a.id, b.id};
  n.value = value(a) + value(b);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::kSub;
  n.inputs = {a.id, b.id};
  n.value = value(a) - value(b);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Node n;
  n.op = Op::kMul;
  n.inputs = {a.id, b.id};
  n.value = value(a).cwiseProduct(value(b));
  return push(std::move(n));
}

template <class T>
Var Tape<T>::scale(Var x, T c) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {x.id};
  n.a = c;
  n.value = value(x) * c;
  return push(std::move(n));
}

template <class T>
Var Tape<T>::add_const(Var x, T c) {
  Node n;
  n.op = Op::kAddConst;
  n.inputs = {x.id};
  n.value = value(x).array() + c;
  return push(std::move(n));
}

template <class T>
Var Tape<T>::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ContractError("concat_cols: row count mismatch");
    cols += value(p).cols();
  }
  Node n;
  n.op = Op::kConcat;
  n.value.resize(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    const Mat& v = value(p);
    n.value.middleCols(c, v.cols()) = v;
    c += v.cols();
    n.inputs.push_back(p.id);
  }
  return push(std::move(n));
}

template <class T>
Var Tape<T>::slice_cols(Var x, int start, int count) {
  const Mat& v = value(x);
  if (start < 0 || count < 0 || start + count > v.cols()) {
    throw ContractError("slice_cols: range out of bounds");
  }
  Node n;
  n.op = Op::kSliceCols;
  n.inputs = {x.id};
  n.start = start;
  n.value = v.middleCols(start, count);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::slice_rows(Var x, int start, int count) {
  const Mat& v = value(x);
  if (start < 0 || count < 0 || start + count > v.rows()) {
    throw ContractError("slice_rows: range out of bounds");
  }
  Node n;
  n.op = Op::kSliceRows;
  n.inputs = {x.id};
  n.start = start;
  n.value = v.middleRows(start, count);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::sum(Var x) {
  Node n;
  n.op = Op::kSum;
  n.inputs = {x.id};
  n.value = Mat::Constant(1, 1, value(x).sum());
  return push(std::move(n));
}

template <class T>
Var Tape<T>::mean(Var x) {
  const Mat& v = value(x);
  if (v.size() == 0) throw ContractError("mean of an empty matrix");
  Node n;
  n.op = Op::kMean;
  n.inputs = {x.id};
  n.value = Mat::Constant(1, 1, v.sum() / static_cast<T>(v.size()));
  return push(std::move(n));
}

template <class T>
Var Tape<T>::row_sum(Var x) {
  Node n;
  n.op = Op::kRowSum;
  n.inputs = {x.id};
  n.value = value(x).rowwise().sum();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::row_norm(Var x) {
  Node n;
  n.op = Op::kRowNorm;
  n.inputs = {x.id};
  n.value = value(x).rowwise().norm();
  return push(std::move(n));
}

template <class T>
Var Tape<T>::sparse_linear(Var x, std::shared_ptr<const SparseMap> map) {
  if (!map) throw ContractError("sparse_linear: null map");
  const Mat& v = value(x);
  Node n;
  n.op = Op::kSparse;
  n.inputs = {x.id};
  n.value = Mat::Zero(map->out_rows, map->out_cols);
  for (const SparseTerm& t : map->terms) {
    if (t.out_row < 0 || t.out_row >= map->out_rows || t.out_col < 0 ||
        t.out_col >= map->out_cols || t.in_row < 0 || t.in_row >= v.rows() || t.in_col < 0 ||
        t.in_col >= v.cols()) {
      throw ContractError("sparse_linear: term out of bounds");
    }
    n.value(t.out_row, t.out_col) += static_cast<T>(t.coeff) * v(t.in_row, t.in_col);
  }
  n.sparse = std::move(map);
  return push(std::move(n));
}

template <class T>
Var Tape<T>::custom(std::vector<Var> inputs, Mat value, BackwardFn backward) {
  Node n;
  n.op = Op::kCustom;
  for (Var v : inputs) {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw ContractError("custom op: input is not on this tape");
    }
    n.inputs.push_back(v.id);
  }
  n.value = std::move(value);
  n.custom = std::move(backward);
  return push(std::move(n));
}

template <class T>
void Tape<T>::backward(Var root, GradStore<T>& grads) {
  run_backward(root, &grads);
}

template <class T>
void Tape<T>::backward(Var root) {
  run_backward(root, nullptr);
}

template <class T>
void Tape<T>::run_backward(Var root, GradStore<T>* grads) {
  if (root.id < 0 || root.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("backward: root is not on this tape");
  }
  if (value(root).rows() != 1 || value(root).cols() != 1) {
    throw ContractError("backward: root must be a scalar");
  }
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  adjoint_ref(root.id)(0, 0) = T(1);

  for (int id = root.id; id >= 0; --id) {
    if (nodes_[id].adjoint.size() == 0) continue;
    // Inputs always precede `id`, so its own adjoint is stable while it runs.
    const Op op = nodes_[id].op;
    const Mat& g = nodes_[id].adjoint;
    const Mat& y = nodes_[id].value;
    const std::vector<int>& in = nodes_[id].inputs;
    auto input_value = [&](int k) -> const Mat& { return nodes_[in[k]].value; };

    switch (op) {
      case Op::kConstant:
        break;
      case Op::kParameter:
        if (grads) {
          auto& dst = (*grads)[nodes_[id].param];
          const T* src = g.data();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        break;
      case Op::kAffine: {
        const Mat& X = input_value(0);
        const Mat& W = input_value(1);
        adjoint_ref(in[0]).noalias() += g * W;
        adjoint_ref(in[1]).noalias() += g.transpose() * X;
        adjoint_ref(in[2]) += g.colwise().sum();
        break;
      }
      case Op::kSoftplus: {
        const T beta = nodes_[id].a;
        const Mat& X = input_value(0);
        adjoint_ref(in[0]).array() +=
            g.array() / (T(1) + (-beta * X.array()).exp());
        break;
      }
      case Op::kRelu: {
        const Mat& X = input_value(0);
        adjoint_ref(in[0]).array() += (X.array() > T(0)).select(g.array(), T(0));
        break;
      }
      case Op::kSigmoid:
        adjoint_ref(in[0]).array() += g.array() * y.array() * (T(1) - y.array());
        break;
      case Op::kExp:
        adjoint_ref(in[0]).array() += g.array() * y.array();
        break;
      case Op::kLog:
        adjoint_ref(in[0]).array() += g.array() / input_value(0).array();
        break;
      case Op::kAbs: {
        const Mat& X = input_value(0);
        adjoint_ref(in[0]).array() +=
            g.array() * X.unaryExpr([](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); })
                            .array();
        break;
      }
      case Op::kSquare:
        adjoint_ref(in[0]).array() += T(2) * g.array() * input_value(0).array();
        break;
      case Op::kMaxConst: {
        const T c = nodes_[id].a;
        adjoint_ref(in[0]).array() += (input_value(0).array() > c).select(g.array(), T(0));
        break;
      }
      case Op::kClamp: {
        const T lo = nodes_[id].a, hi = nodes_[id].b;
        const auto& X = input_value(0).array();
        adjoint_ref(in[0]).array() += ((X > lo) && (X < hi)).select(g.array(), T(0));
        break;
      }
      case Op::kAdd:
        adjoint_ref(in[0]) += g;
        adjoint_ref(in[1]) += g;
        break;
      case Op::kSub:
        adjoint_ref(in[0]) += g;
        adjoint_ref(in[1]) -= g;
        break;
      case Op::kMul: {
        const Mat& A = input_value(0);
        const Mat& B = input_value(1);
        adjoint_ref(in[0]).array() += g.array() * B.array();
        adjoint_ref(in[1]).array() += g.array() * A.array();
        break;
      }
      case Op::kScale:
        adjoint_ref(in[0]) += g * nodes_[id].a;
        break;
      case Op::kAddConst:
        adjoint_ref(in[0]) += g;
        break;
      case Op::kConcat: {
        Eigen::Index c = 0;
        for (int src : in) {
          const Eigen::Index w = nodes_[src].value.cols();
          adjoint_ref(src) += g.middleCols(c, w);
          c += w;
        }
        break;
      }
      case Op::kSliceCols:
        adjoint_ref(in[0]).middleCols(nodes_[id].start, g.cols()) += g;
        break;
      case Op::kSliceRows:
        adjoint_ref(in[0]).middleRows(nodes_[id].start, g.rows()) += g;
        break;
      case Op::kSum:
        adjoint_ref(in[0]).array() += g(0, 0);
        break;
      case Op::kMean:
        adjoint_ref(in[0]).array() += g(0, 0) / static_cast<T>(input_value(0).size());
        break;
      case Op::kRowSum:
        adjoint_ref(in[0]).colwise() += g.col(0);
        break;
      case Op::kRowNorm: {
        const Mat& X = input_value(0);
        Mat& dx = adjoint_ref(in[0]);
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
          const T norm = y(r, 0);
          if (norm > T(0)) dx.row(r) += (g(r, 0) / norm) * X.row(r);
        }
        break;
      }
      case Op::kSparse: {
        Mat& dx = adjoint_ref(in[0]);
        for (const SparseTerm& t : nodes_[id].sparse->terms) {
          dx(t.in_row, t.in_col) += static_cast<T>(t.coeff) * g(t.out_row, t.out_col);
        }
        break;
      }
      case Op::kCustom: {
        BackwardScope<T> scope(*this, grads);
        // The callback may touch the adjoints of inputs only; take a copy of
        // the function so growth of other nodes cannot invalidate it.
        const BackwardFn fn = nodes_[id].custom;
        fn(g, scope);
        break;
      }
    }
  }
}

template class GradStore<float>;
template class GradStore<double>;
template class BackwardScope<float>;
template class BackwardScope<double>;
template class Tape<float>;
template class Tape<double>;

Adam::Adam(const ParamStore& params, AdamConfig config) : config_(config) {
  for (const auto& t : params.tensors()) {
    first_moment.emplace_back(t.values.size(), 0.0f);
    second_moment.emplace_back(t.values.size(), 0.0f);
  }
}

void Adam::step(ParamStore& params, const GradStore<float>& grads, double lr) {
  if (params.size() != grads.size() || params.size() != first_moment.size() ||
      params.size() != second_moment.size()) {
    throw ContractError("adam: tensor count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[ParamId{static_cast<int>(i)}].values.size();
    if (grads[ParamId{static_cast<int>(i)}].size() != n || first_moment[i].size() != n ||
        second_moment[i].size() != n) {
      throw ContractError("adam: size mismatch for '" + params[ParamId{static_cast<int>(i)}].name + "'");
    }
  }
  ++steps_;
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const double bc1 = 1.0 - std::pow(config_.beta1, double(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(steps_));
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(config_.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[ParamId{static_cast<int>(i)}].values;
    const auto& g = grads[ParamId{static_cast<int>(i)}];
    auto& m = first_moment[i];
    auto& v = second_moment[i];
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw ContractError("adam: shape mismatch for '" + params.tensors()[i].name + "'");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      // With g, m and v all zero the update is exactly zero; skipping keeps
      // large, sparsely touched hash tables cheap.
      if (g[k] == 0.0f && m[k] == 0.0f && v[k] == 0.0f) continue;
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

double clip_grad_norm(GradStore<float>& grads, double max_norm) {
  const double norm = grads.norm();
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace surfseg::ad
