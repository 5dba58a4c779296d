// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "partgen/distributions.hpp"
#include "partgen/geometry.hpp"

namespace partgen {

enum class Category { kChair, kTable, kLamp };

std::string_view category_name(Category c);
/// Throws std::invalid_argument for unknown names.
Category parse_category(std::string_view name);
inline constexpr std::array<Category, 3> kAllCategories = {Category::kChair, Category::kTable, Category::kLamp};

/// Fixed label vocabulary shared by every category. The END symbol is the
/// last id.
namespace labels {
inline constexpr int kSeat = 0;
inline constexpr int kBack = 1;
inline constexpr int kLeg = 2;
inline constexpr int kArm = 3;
inline constexpr int kStretcher = 4;
inline constexpr int kTop = 5;
inline constexpr int kPedestal = 6;
inline constexpr int kBase = 7;
inline constexpr int kDrawer = 8;
inline constexpr int kPole = 9;
inline constexpr int kShade = 10;
inline constexpr int kEnd = 11;
inline constexpr int kCount = 12;  // C, including END
}  // namespace labels

const std::vector<std::string>& default_vocabulary();

struct ObjectRecord {
  std::string id;
  Category category = Category::kChair;
  BoundingBox bbox;
  std::vector<Part> parts;
  std::string description;
  /// Set on generated records whose sampling hit the part cap before END.
  bool truncated = false;

  bool operator==(const ObjectRecord&) const = default;
};

inline constexpr std::size_t kDefaultMaxParts = 24;

/// Throws std::invalid_argument describing the first violated invariant.
void validate_record(const ObjectRecord& r, int num_labels = labels::kCount,
                     std::size_t max_parts = kDefaultMaxParts);

// ---- procedural generation ---------------------------------------------------

/// Probabilities of the optional structures plus dimension ranges (metres).
/// A probability of 0 or 1 turns a structure off or on deterministically.
struct StyleParams {
  // chair
  double chair_arms = 0.5;
  std::array<double, 2> chair_seat_height{0.40, 0.50};
  std::array<double, 2> chair_seat_width{0.40, 0.60};
  std::array<double, 2> chair_seat_depth{0.40, 0.55};
  std::array<double, 2> chair_back_height{0.30, 0.55};
  // table
  double table_pedestal = 0.3;
  double table_stretchers = 0.25;
  double table_drawer = 0.15;
  std::array<double, 2> table_height{0.30, 1.10};
  std::array<double, 2> table_width{0.60, 1.60};
  std::array<double, 2> table_depth{0.50, 0.90};
  // lamp
  double lamp_arm = 0.5;
  std::array<double, 2> lamp_height{0.35, 1.60};
  // any category: rotate the whole object by a multiple of 90 degrees about +y
  double global_yaw = 0.25;
  double max_lamp_arm_tilt_degrees = 5.0;
};

/// Number of stretchers a chair may carry; one of these is drawn uniformly.
inline constexpr std::array<int, 3> kChairStretcherChoices = {1, 2, 4};

ObjectRecord generate_object(Category category, Rng& rng, const StyleParams& style = {});

/// Axis-aligned box enclosing every part corner, inflated by `inflate`
/// (fractional) on each extent.
BoundingBox tight_bbox(std::span<const Part> parts, double inflate = 0.02);

/// "A <category> with <count> <label>, ..., and <count> <label>" over groups
/// of equal labels in label-id order.
std::string text_description(const ObjectRecord& r, const std::vector<std::string>& vocabulary = default_vocabulary());
std::string number_word(std::size_t n);

// ---- normalization and occupancy supervision --------------------------------

/// Similarity transform that maps the record's bbox into [-1, 1]^3: rotate
/// into the bbox frame, center it, and scale isotropically by the largest
/// extent.
struct Normalization {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  double scale = 1.0;

  static Normalization from_bbox(const BoundingBox& b);
  Vec3 apply(const Vec3& world) const { return scale * (rotation.transpose() * (world - center)); }
  Vec3 invert(const Vec3& normalized) const { return rotation * (normalized / scale) + center; }
  Part apply(const Part& p) const;
};

struct OccupancySet {
  std::vector<Vec3> points;   // uniform points first, then surface points
  std::vector<uint8_t> labels;
  std::vector<double> weights;
  std::size_t uniform_count = 0;
  /// Fraction of the pool labelled inside.
  double inside_fraction = 0.0;
};

struct OccupancyOptions {
  std::size_t uniform = 20000;
  std::size_t surface = 4000;
};

/// Points in the normalized frame with union_contains labels. Weights are the
/// true class frequency over the pool divided by the balanced sampling
/// frequency (1/2), so balanced minibatches from sample_balanced give an
/// unbiased estimate of the pool-average loss.
OccupancySet make_occupancy_pairs(const ObjectRecord& r, Rng& rng, const OccupancyOptions& options = {});

/// Draws `n` indices, each from the inside or outside class with probability
/// 1/2 (or from the only non-empty class).
std::vector<std::size_t> sample_balanced(const OccupancySet& set, std::size_t n, Rng& rng);

// ---- manifest -------------------------------------------------------------------

inline constexpr int kManifestVersion = 1;
inline constexpr int kRecordFormatVersion = 1;

/// Per-dimension min/max of an attribute over the training split; maps world
/// values to [-1, 1].
struct RangeStats {
  std::vector<double> min;
  std::vector<double> max;

  int dim() const { return static_cast<int>(min.size()); }
  double normalize(int d, double v) const;
  double denormalize(int d, double v) const;
  static RangeStats fit(std::span<const double> values, int dim);
};

struct AttributeStats {
  RangeStats part_size, part_translation, part_rotation;
  RangeStats bbox_size, bbox_translation;
};

struct Codebooks {
  dist::ClusterCodebook translation, rotation, size;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;
  std::map<std::string, std::vector<std::string>> splits;  // train / val / test -> ids
  AttributeStats stats;
  Codebooks codebooks;

  int num_labels() const { return static_cast<int>(vocabulary.size()); }
  int end_label() const { return num_labels() - 1; }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ObjectRecord> records;

  std::vector<const ObjectRecord*> split(const std::string& name) const;
  const ObjectRecord* find(const std::string& id) const;
};

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::vector<Category> categories{kAllCategories.begin(), kAllCategories.end()};
  std::size_t train_per_category = 2000;
  std::size_t val_per_category = 200;
  std::size_t test_per_category = 200;
  StyleParams style;
  dist::KMeansOptions kmeans;
};

/// Deterministic in (config): every record gets a seed derived from the global
/// seed, its category and its index.
Dataset make_dataset(const DatasetConfig& config);

/// Recomputes normalization stats and codebooks from the train split.
void fit_manifest_statistics(Dataset& ds, const dist::KMeansOptions& kmeans, std::uint64_t seed);

/// Normalized attribute vectors of a part: size(3), translation(3), rotation(6).
struct NormalizedAttributes {
  std::array<double, 3> size;
  std::array<double, 3> translation;
  std::array<double, 6> rotation;
};
NormalizedAttributes normalize_part(const AttributeStats& s, const Part& p);
NormalizedAttributes normalize_bbox(const AttributeStats& s, const BoundingBox& b);

// ---- files ------------------------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline constexpr const char* kRecordsFile = "records.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";

/// One record per line, every float printed with 17 significant digits.
std::string record_to_line(const ObjectRecord& r, const std::vector<std::string>& vocabulary = default_vocabulary());
ObjectRecord record_from_line(std::string_view line, const std::vector<std::string>& vocabulary = default_vocabulary());

void write_records(const std::filesystem::path& file, std::span<const ObjectRecord> records,
                   const std::vector<std::string>& vocabulary = default_vocabulary());
/// `strict` applies validate_record (dataset files); otherwise only each part
/// is checked, as generated records may be empty or leave their bbox.
std::vector<ObjectRecord> read_records(const std::filesystem::path& file,
                                       const std::vector<std::string>& vocabulary = default_vocabulary(),
                                       bool strict = true);

std::string manifest_to_string(const DatasetManifest& m);
DatasetManifest manifest_from_string(const std::string& text, const std::string& source = "manifest");

/// Writes `dir`/records.jsonl and `dir`/manifest.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a 64 over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
/// Hash of the serialized manifest; checkpoints store it to detect drift.
std::uint64_t manifest_hash(const DatasetManifest& m);

/// SplitMix64 step, used to derive independent per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace partgen
