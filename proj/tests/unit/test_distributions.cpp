// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "partgen/distributions.hpp"

namespace partgen::dist {
namespace {

std::vector<double> random_mol(int dim, int k, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(MixtureOfLogistics::packed_width(dim, k)));
  std::normal_distribution<double> logits(0.0, 2.0);
  for (int i = 0; i < k; ++i) p[i] = logits(rng);
  for (int i = 0; i < dim * k; ++i) p[k + i] = -1.2 + 2.4 * uniform01(rng);
  for (int i = 0; i < dim * k; ++i) p[k + dim * k + i] = -7.5 + 8.5 * uniform01(rng);
  return p;
}

/// Centers of the 256 bins of half-width 1/255 covering [-1, 1].
std::vector<double> bin_centers() {
  std::vector<double> c(256);
  for (int i = 0; i < 256; ++i) c[i] = -1.0 + 2.0 * i / 255.0;
  return c;
}

TEST(MixtureOfLogistics, BinMassesSumToOne) {
  Rng rng(1);
  const std::vector<double> centers = bin_centers();
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(uniform_index(rng, 10));
    const std::vector<double> p = random_mol(1, k, rng);
    const MixtureOfLogistics mol(p, 1, k);
    double total = 0.0;
    for (double x : centers) total += std::exp(mol_log_prob(mol, std::span<const double>(&x, 1)));
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(MixtureOfLogistics, MultiDimensionalMassFactorsPerComponent) {
  // With one component the dimensions are independent, so the joint mass is
  // the product of the per-dimension masses.
  Rng rng(2);
  const std::vector<double> p = random_mol(2, 1, rng);
  const MixtureOfLogistics joint(p, 2, 1);
  const std::vector<double> p0 = {p[0], p[1], p[3]};
  const std::vector<double> p1 = {p[0], p[2], p[4]};
  const std::vector<double> x = {0.2, -0.7};
  const double lp = mol_log_prob(joint, x);
  const double l0 = mol_log_prob(MixtureOfLogistics(p0, 1, 1), std::span<const double>(&x[0], 1));
  const double l1 = mol_log_prob(MixtureOfLogistics(p1, 1, 1), std::span<const double>(&x[1], 1));
  EXPECT_NEAR(lp, l0 + l1, 1e-12);
}

TEST(MixtureOfLogistics, SingleComponentMatchesLogisticCdf) {
  const std::vector<double> p = {0.0, 0.3, std::log(0.05)};
  const MixtureOfLogistics mol(p, 1, 1);
  const double x = 0.1, h = 1.0 / 255.0, s = 0.05;
  auto cdf = [&](double v) { return 1.0 / (1.0 + std::exp(-(v - 0.3) / s)); };
  EXPECT_NEAR(std::exp(mol_log_prob(mol, std::span<const double>(&x, 1))), cdf(x + h) - cdf(x - h), 1e-12);
  const double edge = 1.0;
  EXPECT_NEAR(std::exp(mol_log_prob(mol, std::span<const double>(&edge, 1))), 1.0 - cdf(1.0 - h), 1e-12);
}

TEST(MixtureOfLogistics, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const int dim = 3, k = 4;
  std::vector<double> p = random_mol(dim, k, rng);
  const std::vector<double> x = {0.25, -1.0, 0.6};
  std::vector<double> grad;
  mol_log_prob(MixtureOfLogistics(p, dim, k), x, kDefaultBinHalfWidth, &grad);
  ASSERT_EQ(grad.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i >= static_cast<std::size_t>(k + dim * k) && p[i] < kDefaultLogScaleMin) continue;  // clamped
    const double keep = p[i];
    p[i] = keep + 1e-6;
    const double up = mol_log_prob(MixtureOfLogistics(p, dim, k), x);
    p[i] = keep - 1e-6;
    const double down = mol_log_prob(MixtureOfLogistics(p, dim, k), x);
    p[i] = keep;
    EXPECT_NEAR(grad[i], (up - down) / 2e-6, 1e-5 * std::max(1.0, std::abs(grad[i]))) << i;
  }
}

TEST(MixtureOfLogistics, InteriorBinMassIsBoundedByScaleClamp) {
  const double bound = max_interior_bin_mass();
  EXPECT_NEAR(bound, std::tanh((1.0 / 255.0) / (2.0 * std::exp(-7.0))), 1e-15);
  const std::vector<double> p = {0.0, 0.0, -20.0};  // log-scale below the clamp
  const MixtureOfLogistics mol(p, 1, 1);
  const double x = 0.0;
  EXPECT_NEAR(std::exp(mol_log_prob(mol, std::span<const double>(&x, 1))), bound, 1e-12);
}

TEST(MixtureOfLogistics, SamplesStayInRange) {
  Rng rng(4);
  const std::vector<double> p = random_mol(3, 5, rng);
  const MixtureOfLogistics mol(p, 3, 5);
  for (int i = 0; i < 1000; ++i) {
    for (double v : mol_sample(mol, rng)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Categorical, NllAndSoftmaxAgree) {
  const std::vector<double> z = {0.5, -1.0, 2.0};
  const std::vector<double> s = softmax(z);
  EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-15);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(categorical_nll(z, i), -std::log(s[i]), 1e-12);
}

TEST(Categorical, ZeroTemperatureIsArgmaxWithLowestIndexTies) {
  Rng rng(5);
  EXPECT_EQ(categorical_sample(std::vector<double>{1.0, 3.0, 3.0}, rng, 0.0), 1);
}

TEST(Categorical, SamplingFrequenciesFollowSoftmax) {
  Rng rng(6);
  const std::vector<double> z = {0.0, 1.0, -1.0};
  const std::vector<double> s = softmax(z);
  std::vector<int> counts(3, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[categorical_sample(z, rng)];
  for (int i = 0; i < 3; ++i) {
    const double sigma = std::sqrt(s[i] * (1 - s[i]) / n);
    EXPECT_NEAR(counts[i] / static_cast<double>(n), s[i], 5 * sigma);
  }
}

TEST(RandomHelpers, UniformIndexAndPermutation) {
  Rng rng(7);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[uniform_index(rng, 5)];
  for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
  std::vector<std::size_t> p = random_permutation(10, rng);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(p[i], i);
  EXPECT_THROW(uniform_index(rng, 0), std::invalid_argument);
}

TEST(KMeans, RecoversSeparatedClusters) {
  Rng rng(8);
  std::vector<double> v;
  const double centers[3][2] = {{-0.8, -0.8}, {0.0, 0.7}, {0.8, -0.5}};
  std::normal_distribution<double> noise(0.0, 0.02);
  for (int i = 0; i < 300; ++i) {
    v.push_back(centers[i % 3][0] + noise(rng));
    v.push_back(centers[i % 3][1] + noise(rng));
  }
  KMeansOptions o;
  o.clusters = 3;
  const KMeansResult r = fit_kmeans(v, 2, o, rng);
  for (const auto& c : centers) {
    const int a = r.codebook.assign(std::vector<double>{c[0], c[1]});
    const auto got = r.codebook.center(a);
    EXPECT_NEAR(got[0], c[0], 0.01);
    EXPECT_NEAR(got[1], c[1], 0.01);
  }
  o.clusters = 301;
  EXPECT_THROW(fit_kmeans(v, 2, o, rng), std::invalid_argument);
}

TEST(KMeans, AssignBreaksTiesTowardsLowestIndex) {
  ClusterCodebook cb;
  cb.dim = 1;
  cb.centers = {-1.0, 1.0};
  EXPECT_EQ(cb.assign(std::vector<double>{0.0}), 0);
}

}  // namespace
}  // namespace partgen::dist
