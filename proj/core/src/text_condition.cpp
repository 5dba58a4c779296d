// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/text_condition.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "partgen/dataset.hpp"

namespace partgen {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<double> HashedBagOfWords::embed(std::string_view text) const {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  for (const std::string& tok : tokenize(text)) {
    const std::uint64_t h = fnv1a64(tok);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    v[static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_))] += sign;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::unique_ptr<ConditionEmbedder> make_condition_embedder(std::string_view name, int dim) {
  if (name.empty() || name == "none") return nullptr;
  if (name == "bow") return std::make_unique<HashedBagOfWords>(dim);
  throw std::invalid_argument("unknown condition embedder '" + std::string(name) + "'");
}

}  // namespace partgen
