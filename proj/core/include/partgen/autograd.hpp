// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

// A small reverse-mode automatic differentiation tape over dense row-major
// double matrices. Every network in partgen is expressed with these ops, so
// the same code path serves training, inference and finite-difference checks.

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace partgen::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable tensor. `grad` accumulates across backward passes until
/// cleared by the optimizer.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  /// When disabled, parameters are recorded as constants and no backward
  /// closures are kept. Used for sampling and evaluation.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  /// Record a computed node. `backward` is dropped when no parent needs a
  /// gradient.
  Var record(Matrix value, std::span<const Var> parents, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  const Matrix& value(int id) const;
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Add `g` into the gradient of node `id` (no-op for constants).
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    Matrix& target = n.param != nullptr ? n.param->grad : n.grad;
    if (target.size() == 0) {
      target = g;
    } else {
      target += g;
    }
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every parameter reachable
  /// from `loss`. Parameter gradients are added to Parameter::grad.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// ---- elementary ops -------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Adds a 1 x n row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
/// Embedding lookup: row i of the result is row indices[i] of `table`.
Var gather_rows(const Var& table, std::span<const int> indices);
Var sum(const Var& a);

// ---- fused losses ---------------------------------------------------------

/// -log softmax(logits)[label] for a 1 x C row.
Var cross_entropy(const Var& logits, int label);

/// Negative discretized mixture-of-logistics log-likelihood of `x` under the
/// parameters packed in the 1 x K(1 + 2d) row `params` (see distributions.hpp
/// for the layout).
Var mol_nll(const Var& params, std::span<const double> x, int mixtures,
            double bin_half_width, double log_scale_min);

/// (1/Q) sum_i w_i * BCE(sigmoid(z_i), y_i) for a Q x 1 column of logits.
Var weighted_bce_with_logits(const Var& logits, std::span<const double> targets,
                             std::span<const double> weights);

}  // namespace partgen::ad
