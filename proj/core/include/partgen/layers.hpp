// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "partgen/autograd.hpp"

namespace partgen::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

/// Owns every parameter of a model in registration order. Pointers returned
/// by add() stay valid for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter* add(std::string name, Matrix init);
  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }
  std::size_t scalar_count() const;
  void zero_grad();

  /// Flattened copy of every value / gradient, in registration order.
  std::vector<double> values() const;
  std::vector<double> grads() const;
  void set_values(const std::vector<double>& flat);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// PyTorch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng);
Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng, bool bias = true);
  Var operator()(Tape& t, const Var& x) const;
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Parameter* weight_ = nullptr;  // in x out
  Parameter* bias_ = nullptr;    // 1 x out
  int in_ = 0, out_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim);
  Var operator()(Tape& t, const Var& x) const;

 private:
  Parameter* gain_ = nullptr;
  Parameter* bias_ = nullptr;
};

/// Linear -> ReLU -> Linear -> ReLU -> Linear(out).
class HeadMlp {
 public:
  HeadMlp() = default;
  HeadMlp(ParameterStore& store, const std::string& name, int in, int hidden, int features, int out,
          std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x) const;

 private:
  Linear l1_, l2_, l3_;
};

/// Multi-head attention with separate query/key/value projections to
/// `qkv_dim` (split evenly across heads) and an output projection back to
/// `model_dim`. No positional information is added.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, int model_dim, int qkv_dim, int heads,
                     std::mt19937_64& rng);
  /// queries: Q x model_dim, memory: M x model_dim -> Q x model_dim.
  Var operator()(Tape& t, const Var& queries, const Var& memory) const;
  int heads() const { return heads_; }

 private:
  Linear q_, k_, v_, o_;
  int heads_ = 1;
  int head_dim_ = 1;
};

/// Post-norm encoder layer: x = LN(x + SelfAttn(x)); x = LN(x + FFN(x)).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterStore& store, const std::string& name, int model_dim, int qkv_dim, int heads, int mlp_dim,
               std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x) const;

 private:
  MultiHeadAttention attn_;
  LayerNorm norm1_, norm2_;
  Linear ff1_, ff2_;
};

/// Cross-attention-only decoder layer: x = LN(x + CrossAttn(x, memory));
/// x = LN(x + FFN(x)). Rows of x never attend to each other.
class CrossLayer {
 public:
  CrossLayer() = default;
  CrossLayer(ParameterStore& store, const std::string& name, int model_dim, int qkv_dim, int heads, int mlp_dim,
             std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x, const Var& memory) const;

 private:
  MultiHeadAttention attn_;
  LayerNorm norm1_, norm2_;
  Linear ff1_, ff2_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Coupled L2 penalty added to the gradient (torch.optim.Adam semantics).
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(ParameterStore& store, AdamOptions options);
  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

  std::vector<double> state() const;  // [t, m..., v...]
  void set_state(const std::vector<double>& s);

 private:
  ParameterStore& store_;
  AdamOptions options_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace partgen::nn
