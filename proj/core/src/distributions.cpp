// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace partgen::dist {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double log_sigmoid(double z) { return -softplus(-z); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 - exp(a)) for a < 0.
double log1mexp(double a) { return a > -0.6931471805599453 ? std::log(-std::expm1(a)) : std::log1p(-std::exp(a)); }

struct BinTerm {
  double log_mass;
  double d_loc;
  double d_log_scale;
};

// Log mass of the bin around x for one logistic (loc, log_scale) and its
// derivatives with respect to the two parameters.
BinTerm bin_log_mass(double x, double loc, double log_scale, double h) {
  const double inv_s = std::exp(-log_scale);
  const double c = x - loc;
  const double plus_in = (c + h) * inv_s;
  const double min_in = (c - h) * inv_s;
  if (x <= -1.0 + h) {
    // P(X < x + h)
    const double dl_da = sigmoid(-plus_in);
    return {log_sigmoid(plus_in), -dl_da * inv_s, -dl_da * plus_in};
  }
  if (x >= 1.0 - h) {
    // P(X > x - h)
    const double dl_db = -sigmoid(min_in);
    return {log_sigmoid(-min_in), -dl_db * inv_s, -dl_db * min_in};
  }
  const double lsa = log_sigmoid(plus_in);
  const double lsb = log_sigmoid(min_in);
  const double diff = lsb - lsa;
  if (diff < 0.0 && std::isfinite(diff)) {
    const double log_mass = lsa + log1mexp(diff);
    if (std::isfinite(log_mass) && log_mass > -700.0) {
      // d/da log(sig(a) - sig(b)) = sig'(a) / delta, sig'(z) = exp(-softplus(-z) - softplus(z))
      const double da = std::exp(-softplus(-plus_in) - softplus(plus_in) - log_mass);
      const double db = -std::exp(-softplus(-min_in) - softplus(min_in) - log_mass);
      return {log_mass, -(da + db) * inv_s, -(da * plus_in + db * min_in)};
    }
  }
  // CDF difference underflows: density at the bin center times the width.
  const double mid = c * inv_s;
  const double log_mass = mid - log_scale - 2.0 * softplus(mid) + std::log(2.0 * h);
  const double dm = 1.0 - 2.0 * sigmoid(mid);
  return {log_mass, -dm * inv_s, -dm * mid - 1.0};
}

}  // namespace

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
  for (;;) {
    const std::uint64_t x = rng();
    if (x <= limit) return x % n;
  }
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

double categorical_nll(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::out_of_range("categorical_nll: label outside [0, C)");
  }
  return log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
}

int categorical_sample(std::span<const double> logits, Rng& rng, double temperature) {
  if (logits.empty()) throw std::invalid_argument("categorical_sample: empty logits");
  if (temperature <= 0.0) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= temperature;
  const std::vector<double> p = softmax(scaled);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u above the running total; return the last non-zero entry.
  for (std::size_t i = p.size(); i-- > 0;) {
    if (p[i] > 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

// ---- K-means ----------------------------------------------------------------

int ClusterCodebook::assign(std::span<const double> x) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < size(); ++k) {
    const auto c = center(k);
    double d = 0.0;
    for (int j = 0; j < dim; ++j) d += (x[j] - c[j]) * (x[j] - c[j]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

KMeansResult fit_kmeans(std::span<const double> values, int dim, const KMeansOptions& options,
                        Rng& rng, std::string attribute) {
  if (dim <= 0 || values.size() % static_cast<std::size_t>(dim) != 0) {
    throw std::invalid_argument("fit_kmeans: values are not a whole number of rows");
  }
  const int k = options.clusters;
  const std::size_t m = values.size() / static_cast<std::size_t>(dim);
  if (k <= 0 || m < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("fit_kmeans: need at least k = " + std::to_string(k) +
                                " points, got " + std::to_string(m));
  }
  auto row = [&](std::size_t i) { return values.subspan(i * dim, static_cast<std::size_t>(dim)); };
  auto sq = [&](std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (int j = 0; j < dim; ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
    return d;
  };

  KMeansResult result;
  ClusterCodebook& cb = result.codebook;
  cb.attribute = std::move(attribute);
  cb.dim = dim;
  cb.centers.reserve(static_cast<std::size_t>(k) * dim);

  // k-means++ seeding
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(uniform_index(rng, m));
  cb.centers.insert(cb.centers.end(), row(first).begin(), row(first).end());
  for (int c = 1; c < k; ++c) {
    const auto last = cb.center(c - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      nearest[i] = std::min(nearest[i], sq(row(i), last));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      pick = m - 1;
      for (std::size_t i = 0; i < m; ++i) {
        acc += nearest[i];
        if (u < acc && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(uniform_index(rng, m));
    }
    cb.centers.insert(cb.centers.end(), row(pick).begin(), row(pick).end());
  }

  // Lloyd iterations
  std::vector<int> assignment(m, 0);
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iterations; ++it) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      assignment[i] = cb.assign(row(i));
      inertia += sq(row(i), cb.center(assignment[i]));
    }
    result.inertia = inertia;
    result.iterations = it + 1;

    std::vector<double> sums(static_cast<std::size_t>(k) * dim, 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto r = row(i);
      for (int j = 0; j < dim; ++j) sums[static_cast<std::size_t>(assignment[i]) * dim + j] += r[j];
      ++counts[static_cast<std::size_t>(assignment[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;  // empty cluster keeps its center
      for (int j = 0; j < dim; ++j) {
        cb.centers[static_cast<std::size_t>(c) * dim + j] =
            sums[static_cast<std::size_t>(c) * dim + j] / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    if (inertia == 0.0 || (std::isfinite(previous) && (previous - inertia) <= options.relative_tolerance * previous)) {
      break;
    }
    previous = inertia;
  }
  // Final inertia against the updated centers.
  double inertia = 0.0;
  for (std::size_t i = 0; i < m; ++i) inertia += sq(row(i), cb.center(cb.assign(row(i))));
  result.inertia = inertia;
  return result;
}

// ---- mixture of logistics ----------------------------------------------------

MixtureOfLogistics::MixtureOfLogistics(std::span<const double> packed, int dim, int mixtures,
                                       double log_scale_min)
    : p_(packed), dim_(dim), k_(mixtures), log_scale_min_(log_scale_min) {
  if (dim <= 0 || mixtures <= 0 || packed.size() != static_cast<std::size_t>(packed_width(dim, mixtures))) {
    throw std::invalid_argument("MixtureOfLogistics: packed width must be K(1 + 2d)");
  }
}

double MixtureOfLogistics::log_scale(int d, int k) const {
  return std::max(raw_log_scale(d, k), log_scale_min_);
}

double mol_log_prob(const MixtureOfLogistics& mol, std::span<const double> x, double h,
                    std::vector<double>* grad) {
  const int d = mol.dim();
  const int k = mol.mixtures();
  if (x.size() != static_cast<std::size_t>(d)) throw std::invalid_argument("mol_log_prob: dimension mismatch");

  std::vector<double> logits(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) logits[c] = mol.logit(c);
  const double lse_pi = log_sum_exp(logits);

  std::vector<double> terms(static_cast<std::size_t>(k));
  std::vector<BinTerm> bins(static_cast<std::size_t>(k) * d);
  for (int c = 0; c < k; ++c) {
    double t = logits[c] - lse_pi;
    for (int j = 0; j < d; ++j) {
      const double xj = std::clamp(x[j], -1.0, 1.0);
      const BinTerm b = bin_log_mass(xj, mol.location(j, c), mol.log_scale(j, c), h);
      bins[static_cast<std::size_t>(c) * d + j] = b;
      t += b.log_mass;
    }
    terms[c] = t;
  }
  const double log_p = log_sum_exp(terms);

  if (grad != nullptr) {
    grad->assign(static_cast<std::size_t>(MixtureOfLogistics::packed_width(d, k)), 0.0);
    for (int c = 0; c < k; ++c) {
      const double resp = std::exp(terms[c] - log_p);
      const double prior = std::exp(logits[c] - lse_pi);
      (*grad)[c] = resp - prior;
      for (int j = 0; j < d; ++j) {
        const BinTerm& b = bins[static_cast<std::size_t>(c) * d + j];
        (*grad)[k + j * k + c] = resp * b.d_loc;
        (*grad)[k + d * k + j * k + c] = mol.clamped(j, c) ? 0.0 : resp * b.d_log_scale;
      }
    }
  }
  return log_p;
}

std::vector<double> mol_sample(const MixtureOfLogistics& mol, Rng& rng) {
  std::vector<double> logits(static_cast<std::size_t>(mol.mixtures()));
  for (int c = 0; c < mol.mixtures(); ++c) logits[c] = mol.logit(c);
  const int comp = categorical_sample(logits, rng);
  std::vector<double> x(static_cast<std::size_t>(mol.dim()));
  for (int j = 0; j < mol.dim(); ++j) {
    const double u = std::clamp(uniform01(rng), 1e-5, 1.0 - 1e-5);
    const double v = mol.location(j, comp) + std::exp(mol.log_scale(j, comp)) * (std::log(u) - std::log1p(-u));
    x[j] = std::clamp(v, -1.0, 1.0);
  }
  return x;
}

double max_interior_bin_mass(double bin_half_width, double log_scale_min) {
  return std::tanh(bin_half_width / (2.0 * std::exp(log_scale_min)));
}

}  // namespace partgen::dist
