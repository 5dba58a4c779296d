// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace partgen::dist {

using Rng = std::mt19937_64;

inline constexpr double kDefaultBinHalfWidth = 1.0 / 255.0;
inline constexpr double kDefaultLogScaleMin = -7.0;

/// 53 random bits in (0, 1); never exactly 0 or 1. Used instead of
/// std::uniform_real_distribution so streams match across standard libraries.
inline double uniform01(Rng& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

/// Unbiased integer in [0, n) by rejection. n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Fisher-Yates permutation of 0..n-1 driven by uniform_index.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

// ---- categorical ----------------------------------------------------------

double log_sum_exp(std::span<const double> v);
std::vector<double> softmax(std::span<const double> logits);
double categorical_nll(std::span<const double> logits, int label);
/// `temperature` divides the logits. A temperature of 0 returns the argmax
/// (lowest index on ties).
int categorical_sample(std::span<const double> logits, Rng& rng, double temperature = 1.0);

// ---- K-means codebooks ----------------------------------------------------

struct ClusterCodebook {
  std::string attribute;
  int dim = 0;
  /// Row-major k x dim.
  std::vector<double> centers;

  int size() const { return dim == 0 ? 0 : static_cast<int>(centers.size()) / dim; }
  std::span<const double> center(int k) const {
    return {centers.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
  }
  /// Index of the nearest center, lowest index on ties.
  int assign(std::span<const double> x) const;
};

struct KMeansOptions {
  int clusters = 20;
  int max_iterations = 100;
  double relative_tolerance = 1e-6;
};

struct KMeansResult {
  ClusterCodebook codebook;
  double inertia = 0.0;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding over `values` (row-major M x dim).
/// Throws std::invalid_argument when M < k.
KMeansResult fit_kmeans(std::span<const double> values, int dim, const KMeansOptions& options,
                        Rng& rng, std::string attribute = {});

// ---- discretized mixture of logistics --------------------------------------

/// View over a packed parameter row of width K(1 + 2d):
///   [ mixing logits (K) | locations, dim-major (d*K) | log-scales, dim-major (d*K) ]
/// Log-scales below `log_scale_min` are clamped when read.
class MixtureOfLogistics {
 public:
  MixtureOfLogistics(std::span<const double> packed, int dim, int mixtures,
                     double log_scale_min = kDefaultLogScaleMin);

  int dim() const { return dim_; }
  int mixtures() const { return k_; }
  double logit(int k) const { return p_[k]; }
  double location(int d, int k) const { return p_[k_ + d * k_ + k]; }
  double raw_log_scale(int d, int k) const { return p_[k_ + dim_ * k_ + d * k_ + k]; }
  double log_scale(int d, int k) const;
  bool clamped(int d, int k) const { return raw_log_scale(d, k) < log_scale_min_; }

  static int packed_width(int dim, int mixtures) { return mixtures * (1 + 2 * dim); }

 private:
  std::span<const double> p_;
  int dim_;
  int k_;
  double log_scale_min_;
};

/// log P(x) where each dimension of x in [-1, 1] is discretized into bins of
/// half-width h, with the outermost bins extended to +-infinity. When `grad`
/// is non-null it receives d log P / d packed parameters (same layout).
double mol_log_prob(const MixtureOfLogistics& mol, std::span<const double> x,
                    double bin_half_width = kDefaultBinHalfWidth,
                    std::vector<double>* grad = nullptr);

/// Draws a component from softmax(logits), then each dimension from its
/// logistic, clamped to [-1, 1].
std::vector<double> mol_sample(const MixtureOfLogistics& mol, Rng& rng);

/// Largest probability mass a single interior bin can receive given the
/// scale clamp: tanh(h / (2 exp(log_scale_min))).
double max_interior_bin_mass(double bin_half_width = kDefaultBinHalfWidth,
                             double log_scale_min = kDefaultLogScaleMin);

/// True if x sits in one of the two edge bins that extend to infinity.
inline bool is_edge_bin(double x, double bin_half_width = kDefaultBinHalfWidth) {
  return x <= -1.0 + bin_half_width || x >= 1.0 - bin_half_width;
}

}  // namespace partgen::dist
