// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partgen/dataset.hpp"
#include "partgen/layers.hpp"
#include "partgen/text_condition.hpp"

namespace partgen {

struct GeneratorConfig {
  int num_labels = labels::kCount;  // including END
  int embed_dim = 64;
  int label_embed_dim = 64;
  /// Width of the first projection of the concatenated part features.
  int concat_dim = 512;
  int layers = 4;
  int heads = 8;
  int qkv_dim = 72;
  int mlp_dim = 1024;
  int octaves = 32;
  int mixtures = 10;
  int clusters = 20;
  int head_hidden = 128;
  /// Name of the text condition embedder ("none" or "bow").
  std::string condition = "none";
  int condition_dim = 0;
  double bin_half_width = dist::kDefaultBinHalfWidth;
  double log_scale_min = dist::kDefaultLogScaleMin;

  /// Throws std::invalid_argument on non-positive widths or a qkv width not
  /// divisible by the head count.
  void validate() const;
  /// Width of [label embedding | gamma(size) | gamma(translation) | gamma(rotation)].
  int part_feature_width() const { return label_embed_dim + 2 * octaves * 12; }
};

/// Everything besides the weights that a generator needs to map between world
/// units and network space.
struct GeneratorContext {
  AttributeStats stats;
  Codebooks codebooks;
  std::vector<std::string> vocabulary;

  static GeneratorContext from_manifest(const DatasetManifest& m);
};

/// gamma(p) per scalar: (sin 2^0 pi p, cos 2^0 pi p, ..., sin 2^(L-1) pi p,
/// cos 2^(L-1) pi p), concatenated dimension by dimension. The phase
/// 2^l p is reduced modulo 2 exactly before the trig call, so gamma(p) and
/// gamma(p + 2) agree bit for bit whenever p + 2 is representable.
std::vector<double> positional_encode(std::span<const double> x, int octaves);
void positional_encode_into(std::span<const double> x, int octaves, double* out);

/// Attributes are scaled by this factor before gamma. gamma has period 2, so
/// without it the two ends of the [-1, 1] range would share one code.
inline constexpr double kEncodingScale = 0.5;
/// gamma(kEncodingScale * x) for an attribute of at most 6 dimensions.
void encode_attribute(std::span<const double> x, int octaves, double* out);

/// Raw head outputs for one decoding step. Heads later in the chain see the
/// ground-truth earlier attributes of `target`.
struct HeadOutputs {
  ad::Var label;  // 1 x C
  ad::Var translation_coarse, rotation_coarse, size_coarse;  // 1 x clusters
  ad::Var translation_fine, rotation_fine, size_fine;        // 1 x K(1+2d)
  bool end = false;
};

/// Per-term negative log-likelihoods; `total` is their sum.
struct HeadTerms {
  ad::Var label;
  ad::Var translation_coarse, translation_fine;
  ad::Var rotation_coarse, rotation_fine;
  ad::Var size_coarse, size_fine;
  ad::Var total;
  bool end = false;
};

struct SampleOptions {
  /// Divides label and cluster logits. 0 picks the argmax.
  double temperature = 1.0;
  bool allow_end = true;
};

class PartGenerator {
 public:
  PartGenerator(GeneratorConfig config, GeneratorContext context, std::uint64_t seed);
  PartGenerator(const PartGenerator&) = delete;
  PartGenerator& operator=(const PartGenerator&) = delete;

  const GeneratorConfig& config() const { return config_; }
  const GeneratorContext& context() const { return context_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  int end_label() const { return config_.num_labels - 1; }

  /// Positional encodings [gamma(size) | gamma(translation) | gamma(rotation)]
  /// of the normalized attributes, N x 24L.
  ad::Matrix part_encodings(std::span<const Part> parts) const;

  /// N x embed_dim, one row per part.
  ad::Var encode_parts(ad::Tape& t, std::span<const Part> parts) const;
  ad::Var encode_bbox(ad::Tape& t, const BoundingBox& bbox) const;
  /// One context token from a condition vector of width condition_dim.
  ad::Var encode_condition(ad::Tape& t, std::span<const double> condition) const;

  /// Transformer output at the query token. `part_embeds` may be an invalid
  /// Var when there are no parts.
  ad::Var forward_features(ad::Tape& t, const ad::Var& bbox_embed, const ad::Var& part_embeds,
                           std::span<const ad::Var> condition_embeds) const;

  /// Encodes and runs the transformer in one go. An empty `condition` means
  /// no condition token.
  ad::Var features(ad::Tape& t, const BoundingBox& bbox, std::span<const Part> parts,
                   std::span<const double> condition = {}) const;

  /// `target == nullptr` decodes END (only the label head runs).
  HeadOutputs decode_outputs(ad::Tape& t, const ad::Var& F, const Part* target) const;
  HeadTerms decode(ad::Tape& t, const ad::Var& F, const Part* target) const;

  /// -log p(target | F) including the coarse cluster terms.
  double next_part_nll(const ad::Matrix& F, const Part* target) const;
  double end_probability(const ad::Matrix& F) const;

  /// Label, then translation, rotation and size (cluster, then fine value),
  /// de-normalized into world units. std::nullopt means END.
  std::optional<Part> sample_next_part(const ad::Matrix& F, dist::Rng& rng, const SampleOptions& options = {}) const;

  /// Condition vector for `text`; empty when the generator is unconditioned.
  std::vector<double> condition_vector(std::string_view text) const;

  /// World-unit part from normalized attribute values. Sizes are floored at
  /// 1e-4 and the rotation is re-orthonormalized.
  Part denormalize(int label, std::span<const double> size, std::span<const double> translation,
                   std::span<const double> rotation) const;

 private:
  ad::Var head_input(ad::Tape& t, std::span<const ad::Var> pieces) const;
  const dist::ClusterCodebook& codebook(int attribute) const;

  GeneratorConfig config_;
  GeneratorContext context_;
  std::unique_ptr<ConditionEmbedder> embedder_;
  nn::ParameterStore store_;

  ad::Parameter* label_table_ = nullptr;  // (C + 1) x label_embed_dim, last row = bbox
  nn::Linear concat_proj_, embed_proj_;
  nn::Linear condition_proj_;
  ad::Parameter* query_ = nullptr;
  std::vector<nn::EncoderLayer> encoder_;
  nn::Linear label_head_;
  // index 0 = translation, 1 = rotation, 2 = size
  std::array<nn::HeadMlp, 3> coarse_, fine_;
  std::array<ad::Parameter*, 3> cluster_tables_{};
};

/// Attribute dims in chain order: translation 3, rotation 6, size 3.
inline constexpr std::array<int, 3> kAttributeDims = {3, 6, 3};

struct SampledSequence {
  std::vector<Part> parts;
  bool truncated = false;
};

/// Keeps `prefix` verbatim and appends sampled parts until END or until the
/// sequence holds `max_parts` parts.
SampledSequence sample_sequence(const PartGenerator& g, const BoundingBox& bbox, std::span<const Part> prefix,
                                std::span<const double> condition, dist::Rng& rng, std::size_t max_parts = 50,
                                const SampleOptions& options = {});

}  // namespace partgen
