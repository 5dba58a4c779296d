// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/autograd.hpp"

#include <cmath>
#include <stdexcept>

#include "partgen/distributions.hpp"

namespace partgen::ad {

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  if (grad_enabled_) {
    n.param = &p;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (nodes_[p.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

void Tape::backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be a 1x1 scalar");
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value().transpose(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    if (t.requires_grad(ib)) t.accumulate(ib, -t.grad(self));
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: expected a 1 x cols row");
  }
  Tape& t = a.tape();
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value() * s, {a}, [ia, s](Tape& t, int self) {
    t.accumulate(ia, t.grad(self) * s);
  });
}

Var relu(const Var& a) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, (x.array() > 0.0).select(t.grad(self), 0.0));
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = a.tape();
  const int ia = a.id();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    row /= row.sum();
  }
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix gy = g.cwiseProduct(y);
    Eigen::VectorXd dots = gy.rowwise().sum();
    Matrix gx = gy - (y.array().colwise() * dots.array()).matrix();
    t.accumulate(ia, gx);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
  }
  Tape& t = x.tape();
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(std::move(out), {x, gain, bias},
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                    if (!t.requires_grad(ix)) return;
                    const Matrix gh = g.array().rowwise() * t.value(ig).row(0).array();
                    const double n = static_cast<double>(g.cols());
                    Matrix gx(g.rows(), g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      const double m1 = gh.row(r).sum() / n;
                      const double m2 = gh.row(r).dot(xhat.row(r)) / n;
                      gx.row(r) = (gh.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
                    }
                    t.accumulate(ix, gx);
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return t.record(std::move(out), parts, [spans = std::move(spans)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, start] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(start, t.value(id).cols()));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.rows();
  }
  return t.record(std::move(out), parts, [spans = std::move(spans)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, start] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(start, t.value(id).rows()));
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range outside matrix");
  }
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().middleCols(start, count), {a}, [ia, start, count](Tape& t, int self) {
    const Matrix& src = t.value(ia);
    Matrix g = Matrix::Zero(src.rows(), src.cols());
    g.middleCols(start, count) = t.grad(self);
    t.accumulate(ia, g);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside matrix");
  }
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().middleRows(start, count), {a}, [ia, start, count](Tape& t, int self) {
    const Matrix& src = t.value(ia);
    Matrix g = Matrix::Zero(src.rows(), src.cols());
    g.middleRows(start, count) = t.grad(self);
    t.accumulate(ia, g);
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  Tape& t = table.tape();
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows()) throw std::out_of_range("gather_rows: index");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(indices[i]);
  }
  const int it = table.id();
  std::vector<int> idx(indices.begin(), indices.end());
  return t.record(std::move(out), {table}, [it, idx = std::move(idx)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix gt = Matrix::Zero(t.value(it).rows(), t.value(it).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(it, gt);
  });
}

Var sum(const Var& a) {
  Tape& t = a.tape();
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    t.accumulate(ia, Matrix::Constant(t.value(ia).rows(), t.value(ia).cols(), g));
  });
}

Var cross_entropy(const Var& logits, int label) {
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: expected a single row");
  if (label < 0 || label >= logits.cols()) throw std::out_of_range("cross_entropy: label");
  Tape& t = logits.tape();
  const Eigen::Index n = logits.cols();
  std::vector<double> row(logits.value().data(), logits.value().data() + n);
  Matrix out(1, 1);
  out(0, 0) = dist::categorical_nll(row, label);
  const int il = logits.id();
  return t.record(std::move(out), {logits}, [il, label](Tape& t, int self) {
    const Matrix& z = t.value(il);
    Matrix p = (z.array() - z.maxCoeff()).exp();
    p /= p.sum();
    p(0, label) -= 1.0;
    t.accumulate(il, p * t.grad(self)(0, 0));
  });
}

Var mol_nll(const Var& params, std::span<const double> x, int mixtures, double bin_half_width,
            double log_scale_min) {
  if (params.rows() != 1) throw std::invalid_argument("mol_nll: expected a single row");
  const int d = static_cast<int>(x.size());
  if (params.cols() != mixtures * (1 + 2 * d)) {
    throw std::invalid_argument("mol_nll: parameter width does not match K(1+2d)");
  }
  Tape& t = params.tape();
  const auto raw = std::span<const double>(params.value().data(), static_cast<std::size_t>(params.cols()));
  dist::MixtureOfLogistics mol(raw, d, mixtures, log_scale_min);
  std::vector<double> grad;
  const double lp = dist::mol_log_prob(mol, x, bin_half_width, t.grad_enabled() ? &grad : nullptr);
  Matrix out(1, 1);
  out(0, 0) = -lp;
  const int ip = params.id();
  return t.record(std::move(out), {params}, [ip, grad = std::move(grad)](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    Matrix gp(1, static_cast<Eigen::Index>(grad.size()));
    for (std::size_t i = 0; i < grad.size(); ++i) gp(0, static_cast<Eigen::Index>(i)) = -g * grad[i];
    t.accumulate(ip, gp);
  });
}

Var weighted_bce_with_logits(const Var& logits, std::span<const double> targets,
                             std::span<const double> weights) {
  const Eigen::Index q = logits.rows();
  if (logits.cols() != 1 || static_cast<std::size_t>(q) != targets.size() ||
      targets.size() != weights.size() || q == 0) {
    throw std::invalid_argument("weighted_bce_with_logits: shape mismatch");
  }
  Tape& t = logits.tape();
  const Matrix& z = logits.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < q; ++i) {
    const double zi = z(i, 0);
    // softplus(z) - y z, evaluated without overflow
    const double sp = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
    total += weights[i] * (sp - targets[i] * zi);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(q);
  const int il = logits.id();
  std::vector<double> y(targets.begin(), targets.end()), w(weights.begin(), weights.end());
  return t.record(std::move(out), {logits}, [il, y = std::move(y), w = std::move(w)](Tape& t, int self) {
    const Matrix& z = t.value(il);
    const double g = t.grad(self)(0, 0) / static_cast<double>(z.rows());
    Matrix gz(z.rows(), 1);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-z(i, 0)));
      gz(i, 0) = g * w[i] * (s - y[i]);
    }
    t.accumulate(il, gz);
  });
}

}  // namespace partgen::ad
