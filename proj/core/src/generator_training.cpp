// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/generator_training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "partgen/checkpoint.hpp"

namespace partgen {

using ad::Tape;
using ad::Var;
using nlohmann::json;

void GeneratorTrainConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (!(scheduled_sampling_ratio >= 0.0 && scheduled_sampling_ratio <= 1.0)) {
    throw std::invalid_argument("train config: scheduled_sampling_ratio must lie in [0, 1]");
  }
  if (val_interval == 0) throw std::invalid_argument("train config: val_interval must be positive");
  if (val_draws == 0) throw std::invalid_argument("train config: val_draws must be positive");
}

PrefixDraw draw_teacher_forcing(std::size_t parts, dist::Rng& rng) {
  PrefixDraw d;
  d.permutation = dist::random_permutation(parts, rng);
  d.prefix = static_cast<std::size_t>(dist::uniform_index(rng, parts + 1));
  return d;
}

namespace {

std::vector<Part> permuted_prefix(const ObjectRecord& r, const std::vector<std::size_t>& perm, std::size_t m) {
  std::vector<Part> out;
  out.reserve(m + 1);
  for (std::size_t i = 0; i < m; ++i) out.push_back(r.parts[perm[i]]);
  return out;
}

}  // namespace

Var prefix_loss(const PartGenerator& g, Tape& t, const ObjectRecord& r, const PrefixDraw& draw,
                std::span<const double> condition) {
  const std::vector<Part> context = permuted_prefix(r, draw.permutation, draw.prefix);
  const Part* target = draw.prefix < r.parts.size() ? &r.parts[draw.permutation[draw.prefix]] : nullptr;
  const Var F = g.features(t, r.bbox, context, condition);
  return g.decode(t, F, target).total;
}

Var teacher_forcing_loss(const PartGenerator& g, Tape& t, const ObjectRecord& r, std::span<const double> condition,
                         dist::Rng& rng, StepCounters* counters) {
  const PrefixDraw draw = draw_teacher_forcing(r.parts.size(), rng);
  if (counters != nullptr) ++counters->teacher_forcing_terms;
  return prefix_loss(g, t, r, draw, condition);
}

std::optional<Var> scheduled_sampling_loss(const PartGenerator& g, Tape& t, const ObjectRecord& r,
                                           std::span<const double> condition, dist::Rng& rng,
                                           StepCounters* counters) {
  const std::size_t n = r.parts.size();
  if (n < 2) {
    if (counters != nullptr) ++counters->scheduled_fallbacks;
    return std::nullopt;
  }
  const std::vector<std::size_t> perm = dist::random_permutation(n, rng);
  const std::size_t m = static_cast<std::size_t>(dist::uniform_index(rng, n - 1));
  std::vector<Part> context = permuted_prefix(r, perm, m);
  std::vector<bool> sampled(context.size(), false);
  {
    Tape free_run(false);
    const ad::Matrix F0 = g.features(free_run, r.bbox, context, condition).value();
    SampleOptions opts;
    opts.allow_end = false;
    context.push_back(*g.sample_next_part(F0, rng, opts));
    sampled.push_back(true);
  }
  const Part& target = r.parts[perm[m + 1]];
  if (counters != nullptr) {
    ++counters->scheduled_terms;
    std::size_t k = 0;
    for (bool s : sampled) k += s ? 1 : 0;
    counters->sampled_tokens += k;
    if (k == 1) ++counters->contexts_with_one_sampled;
  }
  const Var F = g.features(t, r.bbox, context, condition);
  return g.decode(t, F, &target).total;
}

double validation_nll(const PartGenerator& g, std::span<const ObjectRecord* const> records, std::uint64_t seed,
                      std::size_t draws) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ObjectRecord& r = *records[i];
    const std::vector<double> cond = g.condition_vector(r.description);
    dist::Rng rng(mix_seed(mix_seed(seed, kValidationStream), i));
    for (std::size_t d = 0; d < draws; ++d) {
      const PrefixDraw draw = draw_teacher_forcing(r.parts.size(), rng);
      Tape t(false);
      total += prefix_loss(g, t, r, draw, cond).scalar();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string log_line(const TrainLogEntry& e) {
  std::string s = "{\"step\":" + std::to_string(e.step);
  if (e.loss) s += ",\"loss\":" + fmt17(*e.loss);
  if (!e.kind.empty()) s += ",\"kind\":\"" + e.kind + "\"";
  if (e.val_nll) s += ",\"val_nll\":" + fmt17(*e.val_nll);
  s += "}";
  return s;
}

// ---- checkpoint header --------------------------------------------------------

namespace {

json config_to_json(const GeneratorConfig& c) {
  return json{{"num_labels", c.num_labels}, {"embed_dim", c.embed_dim},   {"label_embed_dim", c.label_embed_dim},
              {"concat_dim", c.concat_dim}, {"layers", c.layers},         {"heads", c.heads},
              {"qkv_dim", c.qkv_dim},       {"mlp_dim", c.mlp_dim},       {"octaves", c.octaves},
              {"mixtures", c.mixtures},     {"clusters", c.clusters},     {"head_hidden", c.head_hidden},
              {"condition", c.condition},   {"condition_dim", c.condition_dim},
              {"bin_half_width", c.bin_half_width}, {"log_scale_min", c.log_scale_min}};
}

GeneratorConfig config_from_json(const json& j) {
  GeneratorConfig c;
  c.num_labels = j.at("num_labels");
  c.embed_dim = j.at("embed_dim");
  c.label_embed_dim = j.at("label_embed_dim");
  c.concat_dim = j.at("concat_dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.qkv_dim = j.at("qkv_dim");
  c.mlp_dim = j.at("mlp_dim");
  c.octaves = j.at("octaves");
  c.mixtures = j.at("mixtures");
  c.clusters = j.at("clusters");
  c.head_hidden = j.at("head_hidden");
  c.condition = j.at("condition");
  c.condition_dim = j.at("condition_dim");
  c.bin_half_width = j.at("bin_half_width");
  c.log_scale_min = j.at("log_scale_min");
  return c;
}

json train_to_json(const GeneratorTrainConfig& c) {
  json cats = json::array();
  for (Category k : c.categories) cats.push_back(std::string(category_name(k)));
  return json{{"seed", std::to_string(c.seed)},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"scheduled_sampling_ratio", c.scheduled_sampling_ratio},
              {"val_interval", c.val_interval},
              {"val_draws", c.val_draws},
              {"max_train_records", c.max_train_records},
              {"max_val_records", c.max_val_records},
              {"categories", cats}};
}

GeneratorTrainConfig train_from_json(const json& j, const GeneratorConfig& model) {
  GeneratorTrainConfig c;
  c.model = model;
  c.seed = std::stoull(j.at("seed").get<std::string>());
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.weight_decay = j.at("weight_decay");
  c.scheduled_sampling_ratio = j.at("scheduled_sampling_ratio");
  c.val_interval = j.at("val_interval");
  c.val_draws = j.at("val_draws");
  c.max_train_records = j.at("max_train_records");
  c.max_val_records = j.at("max_val_records");
  for (const auto& k : j.at("categories")) c.categories.push_back(parse_category(k.get<std::string>()));
  return c;
}

std::string context_to_string(const GeneratorContext& c) {
  DatasetManifest m;
  m.vocabulary = c.vocabulary;
  m.stats = c.stats;
  m.codebooks = c.codebooks;
  return manifest_to_string(m);
}

GeneratorContext context_from_string(const std::string& s) {
  return GeneratorContext::from_manifest(manifest_from_string(s, "checkpoint context"));
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void save_generator_checkpoint(const std::filesystem::path& file, const GeneratorCheckpoint& ckpt) {
  json h;
  h["kind"] = "generator";
  h["model"] = config_to_json(ckpt.model);
  h["train"] = train_to_json(ckpt.train);
  h["context"] = context_to_string(ckpt.context);
  h["manifest_hash"] = hex64(ckpt.manifest_hash);
  h["step"] = ckpt.step;
  h["best_val"] = fmt17(ckpt.best_val);
  h["best_step"] = ckpt.best_step;
  h["data_rng"] = ckpt.data_rng;
  h["schedule_rng"] = ckpt.schedule_rng;
  write_checkpoint_file(file, CheckpointFile{h.dump(), ckpt.parameters, ckpt.optimizer});
}

GeneratorCheckpoint load_generator_checkpoint(const std::filesystem::path& file) {
  CheckpointFile f = read_checkpoint_file(file);
  GeneratorCheckpoint c;
  try {
    const json h = json::parse(f.header);
    if (h.at("kind") != "generator") throw CheckpointError(file.string() + ": not a generator checkpoint");
    c.model = config_from_json(h.at("model"));
    c.train = train_from_json(h.at("train"), c.model);
    c.context = context_from_string(h.at("context").get<std::string>());
    c.manifest_hash = std::stoull(h.at("manifest_hash").get<std::string>(), nullptr, 16);
    c.step = h.at("step");
    c.best_val = std::stod(h.at("best_val").get<std::string>());
    c.best_step = h.at("best_step");
    c.data_rng = h.at("data_rng");
    c.schedule_rng = h.at("schedule_rng");
  } catch (const json::exception& e) {
    throw CheckpointError(file.string() + ": malformed header: " + e.what());
  }
  c.parameters = std::move(f.parameters);
  c.optimizer = std::move(f.optimizer);
  return c;
}

std::unique_ptr<PartGenerator> instantiate_generator(const GeneratorCheckpoint& ckpt) {
  auto g = std::make_unique<PartGenerator>(ckpt.model, ckpt.context, 0);
  g->parameters().set_values(ckpt.parameters);
  return g;
}

// ---- trainer --------------------------------------------------------------------

namespace {

std::vector<const ObjectRecord*> select(const Dataset& ds, const std::string& split,
                                        const std::vector<Category>& cats, std::size_t limit) {
  std::vector<const ObjectRecord*> out;
  for (const ObjectRecord* r : ds.split(split)) {
    if (!cats.empty() && std::find(cats.begin(), cats.end(), r->category) == cats.end()) continue;
    out.push_back(r);
    if (limit != 0 && out.size() == limit) break;
  }
  return out;
}

std::string rng_state(const dist::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(dist::Rng& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw CheckpointError("malformed random stream state");
}

}  // namespace

GeneratorTrainer::GeneratorTrainer(const Dataset& ds, GeneratorTrainConfig config)
    : ds_(ds),
      config_(std::move(config)),
      manifest_hash_(manifest_hash(ds.manifest)),
      data_rng_(mix_seed(config_.seed, kDataStream)),
      schedule_rng_(mix_seed(config_.seed, kScheduleStream)) {
  config_.validate();
  config_.model.num_labels = ds.manifest.num_labels();
  model_ = std::make_unique<PartGenerator>(config_.model, GeneratorContext::from_manifest(ds.manifest),
                                           mix_seed(config_.seed, kInitStream));
  config_.model = model_->config();
  nn::AdamOptions opts;
  opts.learning_rate = config_.learning_rate;
  opts.weight_decay = config_.weight_decay;
  adam_ = std::make_unique<nn::Adam>(model_->parameters(), opts);
  train_ = select(ds, "train", config_.categories, config_.max_train_records);
  val_ = select(ds, "val", config_.categories, config_.max_val_records);
  if (train_.empty()) throw std::invalid_argument("train_generator: no training records");
  for (const ObjectRecord* r : train_) train_conditions_.push_back(model_->condition_vector(r->description));
}

void GeneratorTrainer::resume(const GeneratorCheckpoint& ckpt) {
  if (ckpt.manifest_hash != manifest_hash_) {
    throw ManifestMismatch("checkpoint was trained on a different manifest (hash " + hex64(ckpt.manifest_hash) +
                           ", current " + hex64(manifest_hash_) + ")");
  }
  model_->parameters().set_values(ckpt.parameters);
  adam_->set_state(ckpt.optimizer);
  step_ = ckpt.step;
  best_val_ = ckpt.best_val;
  best_step_ = ckpt.best_step;
  has_best_ = true;
  // Only a checkpoint taken at its best step carries the best weights.
  if (ckpt.step == ckpt.best_step) {
    best_params_ = ckpt.parameters;
    best_optimizer_ = ckpt.optimizer;
  } else {
    best_params_.clear();
    best_optimizer_.clear();
  }
  set_rng_state(data_rng_, ckpt.data_rng);
  set_rng_state(schedule_rng_, ckpt.schedule_rng);
}

TrainLogEntry GeneratorTrainer::step() {
  const bool scheduled = dist::uniform01(schedule_rng_) < config_.scheduled_sampling_ratio;
  ++step_;
  const double inv_batch = 1.0 / static_cast<double>(config_.batch_size);
  double total = 0.0;
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    const std::size_t i = static_cast<std::size_t>(dist::uniform_index(data_rng_, train_.size()));
    const ObjectRecord* r = train_[i];
    const std::span<const double> cond = train_conditions_[i];
    Tape t;
    std::optional<Var> loss;
    if (scheduled) loss = scheduled_sampling_loss(*model_, t, *r, cond, data_rng_, &counters_);
    if (!loss) loss = teacher_forcing_loss(*model_, t, *r, cond, data_rng_, &counters_);
    const double v = loss->scalar();
    if (!std::isfinite(v)) {
      throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_) + " on record " + r->id);
    }
    total += v;
    t.backward(ad::scale(*loss, inv_batch));
  }
  adam_->step();
  if (scheduled) {
    ++counters_.ss_steps;
  } else {
    ++counters_.tf_steps;
  }
  TrainLogEntry e;
  e.step = step_;
  e.loss = total * inv_batch;
  e.kind = scheduled ? "ss" : "tf";
  return e;
}

double GeneratorTrainer::validate() const {
  const auto& records = val_.empty() ? train_ : val_;
  return validation_nll(*model_, records, config_.seed, config_.val_draws);
}

GeneratorCheckpoint GeneratorTrainer::snapshot() const {
  GeneratorCheckpoint c;
  c.model = model_->config();
  c.context = model_->context();
  c.train = config_;
  c.manifest_hash = manifest_hash_;
  c.step = step_;
  c.best_val = best_val_;
  c.best_step = best_step_;
  c.data_rng = rng_state(data_rng_);
  c.schedule_rng = rng_state(schedule_rng_);
  c.parameters = model_->parameters().values();
  c.optimizer = adam_->state();
  return c;
}

GeneratorCheckpoint GeneratorTrainer::run(const std::filesystem::path& out_dir,
                                          const std::function<void(const TrainLogEntry&)>& on_log) {
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir / "train_log.jsonl", step_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + (out_dir / "train_log.jsonl").string());
  }
  auto emit = [&](const TrainLogEntry& e) {
    if (log.is_open()) log << log_line(e) << '\n' << std::flush;
    if (on_log) on_log(e);
  };
  auto consider = [&](double val) {
    if (!has_best_ || val < best_val_) {
      has_best_ = true;
      best_val_ = val;
      best_step_ = step_;
      best_params_ = model_->parameters().values();
      best_optimizer_ = adam_->state();
      if (!out_dir.empty()) {
        GeneratorCheckpoint best = snapshot();
        save_generator_checkpoint(out_dir / "best.ckpt", best);
      }
    }
  };

  if (step_ == 0) {
    TrainLogEntry e;
    e.val_nll = validate();
    consider(*e.val_nll);
    emit(e);
  }
  while (step_ < config_.steps) {
    TrainLogEntry e = step();
    if (step_ % config_.val_interval == 0 || step_ == config_.steps) {
      e.val_nll = validate();
      consider(*e.val_nll);
      if (!out_dir.empty()) save_generator_checkpoint(out_dir / "last.ckpt", snapshot());
    }
    emit(e);
  }
  if (!out_dir.empty()) save_generator_checkpoint(out_dir / "last.ckpt", snapshot());

  if (best_params_.empty()) {
    // Resumed past the best step and never improved on it: the best weights
    // live only in the earlier run's best.ckpt.
    if (!out_dir.empty() && std::filesystem::exists(out_dir / "best.ckpt")) {
      GeneratorCheckpoint earlier = load_generator_checkpoint(out_dir / "best.ckpt");
      if (earlier.manifest_hash == manifest_hash_ && earlier.step == best_step_) return earlier;
    }
    return snapshot();
  }
  GeneratorCheckpoint best = snapshot();
  best.step = best_step_;
  best.parameters = best_params_;
  best.optimizer = best_optimizer_;
  return best;
}

}  // namespace partgen
