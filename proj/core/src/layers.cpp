// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "partgen/distributions.hpp"

namespace partgen::nn {

Parameter* ParameterStore::add(std::string name, Matrix init) {
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->zero_grad();
  params_.push_back(std::move(p));
  return params_.back().get();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::vector<double> ParameterStore::values() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& p : params_) out.insert(out.end(), p->value.data(), p->value.data() + p->value.size());
  return out;
}

std::vector<double> ParameterStore::grads() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& p : params_) {
    if (p->grad.size() == p->value.size()) {
      out.insert(out.end(), p->grad.data(), p->grad.data() + p->grad.size());
    } else {
      out.insert(out.end(), static_cast<std::size_t>(p->value.size()), 0.0);
    }
  }
  return out;
}

void ParameterStore::set_values(const std::vector<double>& flat) {
  if (flat.size() != scalar_count()) throw std::invalid_argument("set_values: parameter count mismatch");
  std::size_t at = 0;
  for (auto& p : params_) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(p->value.size())), p->value.data());
    at += static_cast<std::size_t>(p->value.size());
  }
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = (2.0 * dist::uniform01(rng) - 1.0) * bound;
  }
  return m;
}

Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> normal(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng, bool bias)
    : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = store.add(name + ".weight", uniform_init(in, out, bound, rng));
  if (bias) bias_ = store.add(name + ".bias", uniform_init(1, out, bound, rng));
}

Var Linear::operator()(Tape& t, const Var& x) const {
  Var y = ad::matmul(x, t.parameter(*weight_));
  return bias_ != nullptr ? ad::add_row(y, t.parameter(*bias_)) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim) {
  gain_ = store.add(name + ".gain", Matrix::Ones(1, dim));
  bias_ = store.add(name + ".bias", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(Tape& t, const Var& x) const {
  return ad::layer_norm(x, t.parameter(*gain_), t.parameter(*bias_));
}

HeadMlp::HeadMlp(ParameterStore& store, const std::string& name, int in, int hidden, int features, int out,
                 std::mt19937_64& rng)
    : l1_(store, name + ".fc1", in, hidden, rng),
      l2_(store, name + ".fc2", hidden, features, rng),
      l3_(store, name + ".out", features, out, rng) {}

Var HeadMlp::operator()(Tape& t, const Var& x) const {
  return l3_(t, ad::relu(l2_(t, ad::relu(l1_(t, x)))));
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, int model_dim, int qkv_dim,
                                       int heads, std::mt19937_64& rng)
    : q_(store, name + ".query", model_dim, qkv_dim, rng),
      k_(store, name + ".key", model_dim, qkv_dim, rng),
      v_(store, name + ".value", model_dim, qkv_dim, rng),
      o_(store, name + ".out", qkv_dim, model_dim, rng),
      heads_(heads),
      head_dim_(qkv_dim / heads) {
  if (heads <= 0 || qkv_dim % heads != 0) {
    throw std::invalid_argument("MultiHeadAttention: qkv_dim must be divisible by the head count");
  }
}

Var MultiHeadAttention::operator()(Tape& t, const Var& queries, const Var& memory) const {
  const Var q = q_(t, queries);
  const Var k = k_(t, memory);
  const Var v = v_(t, memory);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    const Var qh = ad::slice_cols(q, h * head_dim_, head_dim_);
    const Var kh = ad::slice_cols(k, h * head_dim_, head_dim_);
    const Var vh = ad::slice_cols(v, h * head_dim_, head_dim_);
    const Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
    outs.push_back(ad::matmul(weights, vh));
  }
  return o_(t, ad::concat_cols(outs));
}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, int model_dim, int qkv_dim, int heads,
                           int mlp_dim, std::mt19937_64& rng)
    : attn_(store, name + ".attn", model_dim, qkv_dim, heads, rng),
      norm1_(store, name + ".norm1", model_dim),
      norm2_(store, name + ".norm2", model_dim),
      ff1_(store, name + ".ff1", model_dim, mlp_dim, rng),
      ff2_(store, name + ".ff2", mlp_dim, model_dim, rng) {}

Var EncoderLayer::operator()(Tape& t, const Var& x) const {
  const Var h = norm1_(t, ad::add(x, attn_(t, x, x)));
  return norm2_(t, ad::add(h, ff2_(t, ad::relu(ff1_(t, h)))));
}

CrossLayer::CrossLayer(ParameterStore& store, const std::string& name, int model_dim, int qkv_dim, int heads,
                       int mlp_dim, std::mt19937_64& rng)
    : attn_(store, name + ".cross", model_dim, qkv_dim, heads, rng),
      norm1_(store, name + ".norm1", model_dim),
      norm2_(store, name + ".norm2", model_dim),
      ff1_(store, name + ".ff1", model_dim, mlp_dim, rng),
      ff2_(store, name + ".ff2", mlp_dim, model_dim, rng) {}

Var CrossLayer::operator()(Tape& t, const Var& x, const Var& memory) const {
  const Var h = norm1_(t, ad::add(x, attn_(t, x, memory)));
  return norm2_(t, ad::add(h, ff2_(t, ad::relu(ff1_(t, h)))));
}

Adam::Adam(ParameterStore& store, AdamOptions options) : store_(store), options_(options) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Matrix& v = store.at(i).value;
    m_.push_back(Matrix::Zero(v.rows(), v.cols()));
    v_.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const double step = options_.learning_rate / bc1;
  for (std::size_t i = 0; i < store_.size(); ++i) {
    Parameter& p = store_.at(i);
    if (p.grad.size() != p.value.size()) p.zero_grad();
    Matrix g = p.grad;
    if (options_.weight_decay != 0.0) g += options_.weight_decay * p.value;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    const auto denom = (v_[i].array() / bc2).sqrt() + options_.epsilon;
    p.value.array() -= step * m_[i].array() / denom;
    p.grad.setZero();
  }
}

std::vector<double> Adam::state() const {
  std::vector<double> out;
  out.push_back(static_cast<double>(t_));
  for (const Matrix& m : m_) out.insert(out.end(), m.data(), m.data() + m.size());
  for (const Matrix& v : v_) out.insert(out.end(), v.data(), v.data() + v.size());
  return out;
}

void Adam::set_state(const std::vector<double>& s) {
  std::size_t need = 1;
  for (const Matrix& m : m_) need += 2 * static_cast<std::size_t>(m.size());
  if (s.size() != need) throw std::invalid_argument("Adam::set_state: size mismatch");
  t_ = static_cast<std::int64_t>(s[0]);
  std::size_t at = 1;
  for (Matrix& m : m_) {
    std::copy(s.begin() + static_cast<std::ptrdiff_t>(at), s.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(m.size())), m.data());
    at += static_cast<std::size_t>(m.size());
  }
  for (Matrix& v : v_) {
    std::copy(s.begin() + static_cast<std::ptrdiff_t>(at), s.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(v.size())), v.data());
    at += static_cast<std::size_t>(v.size());
  }
}

}  // namespace partgen::nn
