// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

// Independent oracles and fixtures shared by the unit tests and the
// acceptance runner. Oracles deliberately avoid the code paths they check:
// brute-force loops instead of trees, explicit enumeration instead of
// sampling, closed-form geometry instead of the library's helpers.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "partgen/blending.hpp"
#include "partgen/dataset.hpp"
#include "partgen/evaluation.hpp"
#include "partgen/part_transformer.hpp"

namespace partgen::testing {

/// Small procedural dataset with a reduced codebook size.
Dataset small_dataset(std::uint64_t seed, std::size_t train, std::size_t val, std::size_t test,
                      std::vector<Category> categories = {kAllCategories.begin(), kAllCategories.end()},
                      int clusters = 8);

/// Dataset holding exactly `records` in the train split, with statistics and
/// codebooks fitted on them.
Dataset dataset_from_records(std::vector<ObjectRecord> records, int clusters = 8);

/// Tiny networks for gradient checks and quick tests.
GeneratorConfig micro_generator_config();
BlenderConfig micro_blender_config();

// ---- gradient checking -------------------------------------------------------------

struct GradCheck {
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||) over the probed
  /// coordinates.
  double relative_error = 0.0;
  /// Same measure for the directional derivative along random directions.
  double directional_error = 0.0;
  std::size_t probes = 0;
};

/// Central differences with step `eps` on `coords` random scalar coordinates
/// plus `directions` random directions. `loss` must evaluate the loss from the
/// current parameter values; `gradient` must return d loss / d parameters in
/// ParameterStore::values() order.
GradCheck gradient_check(nn::ParameterStore& store, const std::function<double()>& loss,
                         const std::function<std::vector<double>()>& gradient, dist::Rng& rng,
                         std::size_t coords = 48, std::size_t directions = 3, double eps = 1e-6);

// ---- metric oracles -------------------------------------------------------------------

/// Double loop over all point pairs.
double brute_chamfer(const PointCloud& x, const PointCloud& y);
/// Full |G| x |R| matrix of brute_chamfer, row-major over generated clouds.
std::vector<std::vector<double>> brute_cd_matrix(std::span<const PointCloud> g, std::span<const PointCloud> r);
double brute_mmd(std::span<const PointCloud> g, std::span<const PointCloud> r);
double brute_cov(std::span<const PointCloud> g, std::span<const PointCloud> r);

// ---- likelihood oracles ---------------------------------------------------------------

/// Exact expectation of the teacher-forcing loss: the mean over all N!
/// orderings and all N + 1 prefix lengths. Each term is computed from
/// features() and next_part_nll().
double exhaustive_tf_loss(const PartGenerator& g, const ObjectRecord& r, std::span<const double> condition = {});

/// Lowest achievable expected NLL of the same estimator under the model's
/// discretization: per term, -log(share of remaining parts identical to the
/// target after quantization) plus -log of the largest mass one interior bin
/// can carry for every interior attribute value. END terms cost 0.
double discretization_floor(const PartGenerator& g, const ObjectRecord& r);

// ---- geometry oracles -----------------------------------------------------------------

/// Closed-form point-to-axis-aligned-box containment in the box's local frame;
/// independent of CuboidFrame.
bool oracle_contains(const Part& p, const Vec3& x);
bool oracle_union_contains(std::span<const Part> parts, const Vec3& x);

/// Dense reference samples of the boundary of a cuboid union, for
/// nearest-distance checks. Faces are gridded at `spacing` and points strictly
/// inside another cuboid dropped.
std::vector<Vec3> union_boundary_samples(std::span<const Part> parts, double spacing);

}  // namespace partgen::testing
