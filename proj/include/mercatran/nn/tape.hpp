// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Each node owns its
// value (or borrows a Parameter's), plus a backward closure that pushes the
// node's incoming gradient to its inputs. Nodes are appended in evaluation
// order, so walking the tape backwards is a valid topological order.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "mercatran/error.hpp"

namespace mercatran::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<Scalar>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, const Mat& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> Constant(Mat value) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.value = &n.owned;
    return {this, nodes_.size() - 1};
  }

  // Non-differentiable view of an external matrix, which must outlive the
  // tape.
  Var<Scalar> Borrow(const Mat& value) {
    Node& n = nodes_.emplace_back();
    n.value = &value;
    return {this, nodes_.size() - 1};
  }

  // Leaf bound to a parameter; its gradient accumulates into p.grad.
  Var<Scalar> Leaf(Parameter<Scalar>& p) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.ZeroGrad();
    Node& n = nodes_.emplace_back();
    n.value = &p.value;
    n.grad = &p.grad;
    n.requires_grad = true;
    return {this, nodes_.size() - 1};
  }

  // Differentiable leaf whose gradient stays on the tape (see grad()).
  Var<Scalar> Input(Mat value) {
    Var<Scalar> v = Constant(std::move(value));
    nodes_[v.id].requires_grad = true;
    return v;
  }

  // Result of an operation. `inputs_require_grad` decides whether the
  // backward closure is kept at all.
  Var<Scalar> Push(Mat value, bool inputs_require_grad, BackwardFn backward) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.value = &n.owned;
    n.requires_grad = inputs_require_grad;
    if (inputs_require_grad) n.backward = std::move(backward);
    return {this, nodes_.size() - 1};
  }

  const Mat& value(std::size_t id) const { return *nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var<Scalar>& v) const { return nodes_[v.id].requires_grad; }

  // Gradient buffer of a node, zero-initialised on first use.
  Mat& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad == nullptr) {
      n.grad_storage.setZero(n.value->rows(), n.value->cols());
      n.grad = &n.grad_storage;
    }
    return *n.grad;
  }
  bool has_grad(std::size_t id) const { return nodes_[id].grad != nullptr; }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and runs every backward
  // closure once, in reverse recording order.
  void Backward(const Var<Scalar>& root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw Error(ErrorCode::kShapeMismatch, "Backward needs a scalar root");
    }
    grad(root.id)(0, 0) += Scalar(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad == nullptr || !n.backward) continue;
      n.backward(*this, *n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat owned;
    const Mat* value = nullptr;
    Mat* grad = nullptr;
    Mat grad_storage;
    bool requires_grad = false;
    BackwardFn backward;
  };

  // deque keeps node addresses stable while the tape grows.
  std::deque<Node> nodes_;
};

}  // namespace mercatran::nn
