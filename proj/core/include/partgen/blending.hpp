// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partgen/checkpoint.hpp"
#include "partgen/dataset.hpp"
#include "partgen/layers.hpp"
#include "partgen/marching_cubes.hpp"

namespace partgen {

struct BlenderConfig {
  int num_labels = labels::kCount;
  int embed_dim = 64;
  int label_embed_dim = 64;
  int concat_dim = 512;
  /// Octaves of the part attribute encoding.
  int part_octaves = 32;
  int layers = 4;
  int heads = 8;
  int qkv_dim = 72;
  int mlp_dim = 1024;
  /// Octaves of the query point encoding.
  int point_octaves = 10;
  int resolution = 128;
  double iso = 0.5;

  void validate() const;
};

/// Cross-attention-only occupancy decoder. Parts and queries live in the
/// record's normalized frame (see Normalization). Each query attends to the
/// part embeddings and never to other queries.
class OccupancyNetwork {
 public:
  OccupancyNetwork(BlenderConfig config, std::uint64_t seed);
  OccupancyNetwork(const OccupancyNetwork&) = delete;
  OccupancyNetwork& operator=(const OccupancyNetwork&) = delete;

  const BlenderConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  /// P x embed_dim.
  ad::Var encode_parts(ad::Tape& t, std::span<const Part> parts) const;
  /// Q x 1 logits. Throws std::invalid_argument for an empty part list.
  ad::Var logits(ad::Tape& t, std::span<const Part> parts, std::span<const Vec3> queries) const;
  /// Probabilities in (0, 1), evaluated without recording gradients.
  std::vector<double> occupancy(std::span<const Part> parts, std::span<const Vec3> queries) const;

 private:
  BlenderConfig config_;
  nn::ParameterStore store_;
  ad::Parameter* label_table_ = nullptr;
  nn::Linear concat_proj_, embed_proj_, point_proj_, out_;
  std::vector<nn::CrossLayer> layers_;
};

/// Parts of `r` expressed in the frame of its bounding box.
std::vector<Part> normalized_parts(const BoundingBox& bbox, std::span<const Part> parts);

/// occupancy_forward for world-unit parts: queries are in the normalized frame
/// of `bbox`.
std::vector<double> occupancy_forward(const OccupancyNetwork& net, const BoundingBox& bbox,
                                      std::span<const Part> parts, std::span<const Vec3> queries);

/// Occupancy probabilities on a (resolution + 1)^3 lattice over [-1, 1]^3 in
/// the normalized frame, evaluated in chunks.
ScalarGrid occupancy_grid(const OccupancyNetwork& net, const BoundingBox& bbox, std::span<const Part> parts,
                          int resolution, std::size_t chunk = 4096);

/// Marching cubes at `iso` on occupancy_grid, vertices mapped back to world
/// units. All-inside or all-outside grids give an empty mesh.
TriangleMesh extract_mesh(const OccupancyNetwork& net, const BoundingBox& bbox, std::span<const Part> parts,
                          int resolution, double iso);
/// Same as above on a precomputed grid.
TriangleMesh mesh_from_grid(const ScalarGrid& grid, const BoundingBox& bbox, double iso);

inline constexpr std::uint64_t kBlenderInitStream = 0x626c6e69;
inline constexpr std::uint64_t kBlenderDataStream = 0x626c6e64;
inline constexpr std::uint64_t kBlenderValStream = 0x626c6e76;

struct BlenderTrainConfig {
  BlenderConfig model;
  std::uint64_t seed = 0;
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t points = 2048;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  std::size_t val_interval = 200;
  std::size_t max_train_records = 0;
  std::size_t max_val_records = 0;
  std::vector<Category> categories;
  OccupancyOptions occupancy;

  void validate() const;
};

/// Importance-weighted BCE of a balanced minibatch drawn from `pool`.
ad::Var blender_loss(const OccupancyNetwork& net, ad::Tape& t, std::span<const Part> normalized,
                     const OccupancySet& pool, std::span<const std::size_t> batch);

struct BlenderLogEntry {
  std::size_t step = 0;
  std::optional<double> loss;
  std::optional<double> val_loss;
};
std::string log_line(const BlenderLogEntry& e);

struct BlenderCheckpoint {
  BlenderConfig model;
  BlenderTrainConfig train;
  std::uint64_t manifest_hash = 0;
  std::size_t step = 0;
  double best_val = 0.0;
  std::size_t best_step = 0;
  std::string data_rng;
  std::vector<double> parameters;
  std::vector<double> optimizer;
};

void save_blender_checkpoint(const std::filesystem::path& file, const BlenderCheckpoint& ckpt);
BlenderCheckpoint load_blender_checkpoint(const std::filesystem::path& file);
std::unique_ptr<OccupancyNetwork> instantiate_blender(const BlenderCheckpoint& ckpt);

class BlenderTrainer {
 public:
  BlenderTrainer(const Dataset& ds, BlenderTrainConfig config);

  /// Throws ManifestMismatch for a checkpoint trained on another manifest.
  void resume(const BlenderCheckpoint& ckpt);
  BlenderLogEntry step();
  double validate() const;
  BlenderCheckpoint run(const std::filesystem::path& out_dir = {},
                        const std::function<void(const BlenderLogEntry&)>& on_log = {});
  BlenderCheckpoint snapshot() const;

  OccupancyNetwork& model() { return *model_; }
  const OccupancyNetwork& model() const { return *model_; }
  std::size_t steps_done() const { return step_; }
  const std::vector<const ObjectRecord*>& train_records() const { return train_; }

 private:
  BlenderTrainConfig config_;
  std::uint64_t manifest_hash_;
  std::unique_ptr<OccupancyNetwork> model_;
  std::unique_ptr<nn::Adam> adam_;
  std::vector<const ObjectRecord*> train_, val_;
  std::vector<std::vector<Part>> train_parts_;
  std::vector<std::vector<Part>> val_parts_;
  /// Fixed balanced validation batch per record.
  std::vector<OccupancySet> val_sets_;
  dist::Rng data_rng_;
  std::size_t step_ = 0;
  double best_val_ = 0.0;
  std::size_t best_step_ = 0;
  bool has_best_ = false;
  std::vector<double> best_params_, best_optimizer_;
};

}  // namespace partgen
