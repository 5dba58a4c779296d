// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace partgen {

/// Maps free text to a fixed-width vector that the generator turns into one
/// context token through a learned projection.
class ConditionEmbedder {
 public:
  virtual ~ConditionEmbedder() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Signed feature hashing of lower-cased alphanumeric tokens, L2-normalized.
/// Empty text maps to the zero vector.
class HashedBagOfWords final : public ConditionEmbedder {
 public:
  explicit HashedBagOfWords(int dim = 64) : dim_(dim) {}
  std::string name() const override { return "bow"; }
  int dim() const override { return dim_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  int dim_;
};

std::vector<std::string> tokenize(std::string_view text);

/// "none" returns nullptr; "bow" the hashed bag of words. Throws
/// std::invalid_argument for anything else.
std::unique_ptr<ConditionEmbedder> make_condition_embedder(std::string_view name, int dim = 64);

}  // namespace partgen
