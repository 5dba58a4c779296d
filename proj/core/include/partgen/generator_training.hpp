// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "partgen/checkpoint.hpp"
#include "partgen/dataset.hpp"
#include "partgen/layers.hpp"
#include "partgen/part_transformer.hpp"

namespace partgen {

/// Seeds of the independent random streams of a training run, derived from
/// the run seed with mix_seed. The schedule stream only decides the step type,
/// so a mix ratio of 0 leaves the data stream untouched.
inline constexpr std::uint64_t kInitStream = 0x696e6974;      // parameter init
inline constexpr std::uint64_t kDataStream = 0x64617461;      // records, permutations, prefixes, samples
inline constexpr std::uint64_t kScheduleStream = 0x73636864;  // teacher forcing vs scheduled sampling
inline constexpr std::uint64_t kValidationStream = 0x76616c;  // fixed validation draws

struct GeneratorTrainConfig {
  GeneratorConfig model;
  std::uint64_t seed = 0;
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  /// Probability that a step uses scheduled sampling.
  double scheduled_sampling_ratio = 0.5;
  std::size_t val_interval = 200;
  /// Teacher-forcing draws per validation record.
  std::size_t val_draws = 4;
  /// 0 keeps every record.
  std::size_t max_train_records = 0;
  std::size_t max_val_records = 0;
  /// Empty keeps every category.
  std::vector<Category> categories;

  void validate() const;
};

/// Instrumentation of the step functions.
struct StepCounters {
  std::size_t teacher_forcing_terms = 0;
  std::size_t scheduled_terms = 0;
  /// Scheduled-sampling requests on records with fewer than two parts.
  std::size_t scheduled_fallbacks = 0;
  std::size_t sampled_tokens = 0;
  std::size_t contexts_with_one_sampled = 0;
  std::size_t tf_steps = 0;
  std::size_t ss_steps = 0;
};

/// One teacher-forcing draw: a permutation of the parts and a prefix length.
struct PrefixDraw {
  std::vector<std::size_t> permutation;
  std::size_t prefix = 0;
};

/// Permutation, then M uniform in [0, N]; M = N targets END.
PrefixDraw draw_teacher_forcing(std::size_t parts, dist::Rng& rng);

/// Loss of the element following the first `draw.prefix` permuted parts.
ad::Var prefix_loss(const PartGenerator& g, ad::Tape& t, const ObjectRecord& r, const PrefixDraw& draw,
                    std::span<const double> condition);

ad::Var teacher_forcing_loss(const PartGenerator& g, ad::Tape& t, const ObjectRecord& r,
                             std::span<const double> condition, dist::Rng& rng, StepCounters* counters = nullptr);

/// Context = first M permuted parts (M uniform in [0, N-2]) plus one part
/// sampled from the model with END masked; target = permuted part M+1
/// (0-based). The sampled token enters the tape as a constant. Returns
/// std::nullopt for records with fewer than two parts.
std::optional<ad::Var> scheduled_sampling_loss(const PartGenerator& g, ad::Tape& t, const ObjectRecord& r,
                                               std::span<const double> condition, dist::Rng& rng,
                                               StepCounters* counters = nullptr);

/// Mean teacher-forcing NLL over `draws` fixed draws per record. The draws
/// depend only on `seed` and the record position, so repeated calls on the
/// same parameters return the same value.
double validation_nll(const PartGenerator& g, std::span<const ObjectRecord* const> records, std::uint64_t seed,
                      std::size_t draws);

struct TrainLogEntry {
  std::size_t step = 0;
  std::optional<double> loss;
  /// "tf" or "ss"; empty for the initial validation line.
  std::string kind;
  std::optional<double> val_nll;
};

/// {"step":..,"loss":..,"kind":"tf","val_nll":..} with 17 significant digits.
std::string log_line(const TrainLogEntry& e);

struct GeneratorCheckpoint {
  GeneratorConfig model;
  GeneratorContext context;
  GeneratorTrainConfig train;
  std::uint64_t manifest_hash = 0;
  std::size_t step = 0;
  double best_val = 0.0;
  std::size_t best_step = 0;
  std::string data_rng;
  std::string schedule_rng;
  std::vector<double> parameters;
  std::vector<double> optimizer;
};

void save_generator_checkpoint(const std::filesystem::path& file, const GeneratorCheckpoint& ckpt);
GeneratorCheckpoint load_generator_checkpoint(const std::filesystem::path& file);
/// Rebuilds the network and loads the stored weights.
std::unique_ptr<PartGenerator> instantiate_generator(const GeneratorCheckpoint& ckpt);

class GeneratorTrainer {
 public:
  GeneratorTrainer(const Dataset& ds, GeneratorTrainConfig config);

  /// Restores weights, optimizer moments, progress and random streams.
  /// Throws ManifestMismatch when the checkpoint was trained on another
  /// manifest.
  void resume(const GeneratorCheckpoint& ckpt);

  /// One optimizer step over a batch. Throws NonFiniteLoss naming the step and
  /// record.
  TrainLogEntry step();
  double validate() const;

  /// Runs until `config.steps`, validating at step 0 (fresh runs), every
  /// val_interval steps and at the end. With a non-empty `out_dir` writes
  /// best.ckpt, last.ckpt and train_log.jsonl there.
  GeneratorCheckpoint run(const std::filesystem::path& out_dir = {},
                          const std::function<void(const TrainLogEntry&)>& on_log = {});

  GeneratorCheckpoint snapshot() const;

  PartGenerator& model() { return *model_; }
  const PartGenerator& model() const { return *model_; }
  const StepCounters& counters() const { return counters_; }
  std::size_t steps_done() const { return step_; }
  double best_val() const { return best_val_; }
  const std::vector<const ObjectRecord*>& train_records() const { return train_; }
  const std::vector<const ObjectRecord*>& val_records() const { return val_; }

 private:
  const Dataset& ds_;
  GeneratorTrainConfig config_;
  std::uint64_t manifest_hash_;
  std::unique_ptr<PartGenerator> model_;
  std::unique_ptr<nn::Adam> adam_;
  std::vector<const ObjectRecord*> train_, val_;
  std::vector<std::vector<double>> train_conditions_;
  dist::Rng data_rng_, schedule_rng_;
  StepCounters counters_;
  std::size_t step_ = 0;
  double best_val_ = 0.0;
  std::size_t best_step_ = 0;
  bool has_best_ = false;
  std::vector<double> best_params_;
  std::vector<double> best_optimizer_;
};

}  // namespace partgen
