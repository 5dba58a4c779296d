// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/blending.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "partgen/part_transformer.hpp"

namespace partgen {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using nlohmann::json;

void BlenderConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw std::invalid_argument(std::string("blender config: ") + what + " must be positive");
  };
  positive(num_labels, "num_labels");
  positive(embed_dim, "embed_dim");
  positive(label_embed_dim, "label_embed_dim");
  positive(concat_dim, "concat_dim");
  positive(part_octaves, "part_octaves");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(qkv_dim, "qkv_dim");
  positive(mlp_dim, "mlp_dim");
  positive(point_octaves, "point_octaves");
  positive(resolution, "resolution");
  if (qkv_dim % heads != 0) throw std::invalid_argument("blender config: qkv_dim must be divisible by heads");
  if (!(iso > 0.0 && iso < 1.0)) throw std::invalid_argument("blender config: iso must lie in (0, 1)");
}

OccupancyNetwork::OccupancyNetwork(BlenderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int E = config_.embed_dim;
  const int part_width = config_.label_embed_dim + 2 * config_.part_octaves * 12;
  label_table_ = store_.add("label_embedding", nn::uniform_init(config_.num_labels, config_.label_embed_dim, 1.0, rng));
  concat_proj_ = nn::Linear(store_, "part_encoder.concat", part_width, config_.concat_dim, rng);
  embed_proj_ = nn::Linear(store_, "part_encoder.embed", config_.concat_dim, E, rng);
  point_proj_ = nn::Linear(store_, "point_encoder", 2 * config_.point_octaves * 3, E, rng);
  for (int i = 0; i < config_.layers; ++i) {
    layers_.emplace_back(store_, "decoder." + std::to_string(i), E, config_.qkv_dim, config_.heads, config_.mlp_dim,
                         rng);
  }
  out_ = nn::Linear(store_, "occupancy", E, 1, rng);
}

Var OccupancyNetwork::encode_parts(Tape& t, std::span<const Part> parts) const {
  const int L = config_.part_octaves;
  std::vector<int> ids;
  Matrix pe(static_cast<Eigen::Index>(parts.size()), 2 * L * 12);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Part& p = parts[i];
    if (p.label < 0 || p.label >= config_.num_labels) throw std::invalid_argument("blender: invalid part label");
    ids.push_back(p.label);
    double* row = pe.row(static_cast<Eigen::Index>(i)).data();
    encode_attribute(p.size, L, row);
    encode_attribute(p.translation, L, row + 2 * L * 3);
    encode_attribute(p.rotation, L, row + 2 * L * 6);
  }
  const std::array<Var, 2> cols = {ad::gather_rows(t.parameter(*label_table_), ids), t.constant(std::move(pe))};
  return embed_proj_(t, concat_proj_(t, ad::concat_cols(cols)));
}

Var OccupancyNetwork::logits(Tape& t, std::span<const Part> parts, std::span<const Vec3> queries) const {
  if (parts.empty()) throw std::invalid_argument("occupancy: empty part list");
  const int L = config_.point_octaves;
  Matrix pe(static_cast<Eigen::Index>(queries.size()), 2 * L * 3);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::array<double, 3> q = {queries[i].x(), queries[i].y(), queries[i].z()};
    encode_attribute(q, L, pe.row(static_cast<Eigen::Index>(i)).data());
  }
  const Var memory = encode_parts(t, parts);
  Var x = point_proj_(t, t.constant(std::move(pe)));
  for (const nn::CrossLayer& layer : layers_) x = layer(t, x, memory);
  return out_(t, x);
}

std::vector<double> OccupancyNetwork::occupancy(std::span<const Part> parts, std::span<const Vec3> queries) const {
  Tape t(false);
  const Matrix z = logits(t, parts, queries).value();
  std::vector<double> p(queries.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-z(static_cast<Eigen::Index>(i), 0)));
  return p;
}

std::vector<Part> normalized_parts(const BoundingBox& bbox, std::span<const Part> parts) {
  const Normalization n = Normalization::from_bbox(bbox);
  std::vector<Part> out;
  out.reserve(parts.size());
  for (const Part& p : parts) out.push_back(n.apply(p));
  return out;
}

std::vector<double> occupancy_forward(const OccupancyNetwork& net, const BoundingBox& bbox,
                                      std::span<const Part> parts, std::span<const Vec3> queries) {
  return net.occupancy(normalized_parts(bbox, parts), queries);
}

ScalarGrid occupancy_grid(const OccupancyNetwork& net, const BoundingBox& bbox, std::span<const Part> parts,
                          int resolution, std::size_t chunk) {
  const std::vector<Part> np = normalized_parts(bbox, parts);
  if (np.empty()) throw std::invalid_argument("occupancy_grid: empty part list");
  return sample_grid(
      resolution, Vec3::Constant(-1.0), Vec3::Constant(1.0),
      [&](std::span<const Vec3> pts, std::span<float> out) {
        const std::vector<double> p = net.occupancy(np, pts);
        for (std::size_t i = 0; i < p.size(); ++i) out[i] = static_cast<float>(p[i]);
      },
      chunk);
}

TriangleMesh mesh_from_grid(const ScalarGrid& grid, const BoundingBox& bbox, double iso) {
  TriangleMesh mesh = marching_cubes(grid, iso);
  const Normalization n = Normalization::from_bbox(bbox);
  for (Vec3& v : mesh.vertices) v = n.invert(v);
  return mesh;
}

TriangleMesh extract_mesh(const OccupancyNetwork& net, const BoundingBox& bbox, std::span<const Part> parts,
                          int resolution, double iso) {
  return mesh_from_grid(occupancy_grid(net, bbox, parts, resolution), bbox, iso);
}

// ---- training ----------------------------------------------------------------------

void BlenderTrainConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw std::invalid_argument("blender train config: batch_size must be positive");
  if (points == 0) throw std::invalid_argument("blender train config: points must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("blender train config: learning_rate must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("blender train config: weight_decay must be >= 0");
  if (val_interval == 0) throw std::invalid_argument("blender train config: val_interval must be positive");
  if (occupancy.uniform + occupancy.surface == 0) throw std::invalid_argument("blender train config: empty pool");
}

Var blender_loss(const OccupancyNetwork& net, Tape& t, std::span<const Part> normalized, const OccupancySet& pool,
                 std::span<const std::size_t> batch) {
  std::vector<Vec3> pts;
  std::vector<double> targets, weights;
  pts.reserve(batch.size());
  targets.reserve(batch.size());
  weights.reserve(batch.size());
  for (std::size_t i : batch) {
    pts.push_back(pool.points[i]);
    targets.push_back(pool.labels[i] ? 1.0 : 0.0);
    weights.push_back(pool.weights[i]);
  }
  return ad::weighted_bce_with_logits(net.logits(t, normalized, pts), targets, weights);
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json config_to_json(const BlenderConfig& c) {
  return json{{"num_labels", c.num_labels},
              {"embed_dim", c.embed_dim},
              {"label_embed_dim", c.label_embed_dim},
              {"concat_dim", c.concat_dim},
              {"part_octaves", c.part_octaves},
              {"layers", c.layers},
              {"heads", c.heads},
              {"qkv_dim", c.qkv_dim},
              {"mlp_dim", c.mlp_dim},
              {"point_octaves", c.point_octaves},
              {"resolution", c.resolution},
              {"iso", c.iso}};
}

BlenderConfig config_from_json(const json& j) {
  BlenderConfig c;
  c.num_labels = j.at("num_labels");
  c.embed_dim = j.at("embed_dim");
  c.label_embed_dim = j.at("label_embed_dim");
  c.concat_dim = j.at("concat_dim");
  c.part_octaves = j.at("part_octaves");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.qkv_dim = j.at("qkv_dim");
  c.mlp_dim = j.at("mlp_dim");
  c.point_octaves = j.at("point_octaves");
  c.resolution = j.at("resolution");
  c.iso = j.at("iso");
  return c;
}

json train_to_json(const BlenderTrainConfig& c) {
  json cats = json::array();
  for (Category k : c.categories) cats.push_back(std::string(category_name(k)));
  return json{{"seed", std::to_string(c.seed)},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"points", c.points},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"val_interval", c.val_interval},
              {"max_train_records", c.max_train_records},
              {"max_val_records", c.max_val_records},
              {"categories", cats},
              {"occupancy_uniform", c.occupancy.uniform},
              {"occupancy_surface", c.occupancy.surface}};
}

BlenderTrainConfig train_from_json(const json& j, const BlenderConfig& model) {
  BlenderTrainConfig c;
  c.model = model;
  c.seed = std::stoull(j.at("seed").get<std::string>());
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.points = j.at("points");
  c.learning_rate = j.at("learning_rate");
  c.weight_decay = j.at("weight_decay");
  c.val_interval = j.at("val_interval");
  c.max_train_records = j.at("max_train_records");
  c.max_val_records = j.at("max_val_records");
  for (const auto& k : j.at("categories")) c.categories.push_back(parse_category(k.get<std::string>()));
  c.occupancy.uniform = j.at("occupancy_uniform");
  c.occupancy.surface = j.at("occupancy_surface");
  return c;
}

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

}  // namespace

std::string log_line(const BlenderLogEntry& e) {
  std::string s = "{\"step\":" + std::to_string(e.step);
  if (e.loss) s += ",\"loss\":" + fmt17(*e.loss);
  if (e.val_loss) s += ",\"val_loss\":" + fmt17(*e.val_loss);
  s += "}";
  return s;
}

void save_blender_checkpoint(const std::filesystem::path& file, const BlenderCheckpoint& ckpt) {
  json h;
  h["kind"] = "blender";
  h["model"] = config_to_json(ckpt.model);
  h["train"] = train_to_json(ckpt.train);
  h["manifest_hash"] = hex64(ckpt.manifest_hash);
  h["step"] = ckpt.step;
  h["best_val"] = fmt17(ckpt.best_val);
  h["best_step"] = ckpt.best_step;
  h["data_rng"] = ckpt.data_rng;
  write_checkpoint_file(file, CheckpointFile{h.dump(), ckpt.parameters, ckpt.optimizer});
}

BlenderCheckpoint load_blender_checkpoint(const std::filesystem::path& file) {
  CheckpointFile f = read_checkpoint_file(file);
  BlenderCheckpoint c;
  try {
    const json h = json::parse(f.header);
    if (h.at("kind") != "blender") throw CheckpointError(file.string() + ": not a blender checkpoint");
    c.model = config_from_json(h.at("model"));
    c.train = train_from_json(h.at("train"), c.model);
    c.manifest_hash = std::stoull(h.at("manifest_hash").get<std::string>(), nullptr, 16);
    c.step = h.at("step");
    c.best_val = std::stod(h.at("best_val").get<std::string>());
    c.best_step = h.at("best_step");
    c.data_rng = h.at("data_rng");
  } catch (const json::exception& e) {
    throw CheckpointError(file.string() + ": malformed header: " + e.what());
  }
  c.parameters = std::move(f.parameters);
  c.optimizer = std::move(f.optimizer);
  return c;
}

std::unique_ptr<OccupancyNetwork> instantiate_blender(const BlenderCheckpoint& ckpt) {
  auto net = std::make_unique<OccupancyNetwork>(ckpt.model, 0);
  net->parameters().set_values(ckpt.parameters);
  return net;
}

BlenderTrainer::BlenderTrainer(const Dataset& ds, BlenderTrainConfig config)
    : config_(std::move(config)),
      manifest_hash_(manifest_hash(ds.manifest)),
      data_rng_(mix_seed(config_.seed, kBlenderDataStream)) {
  config_.model.num_labels = ds.manifest.num_labels();
  config_.validate();
  model_ = std::make_unique<OccupancyNetwork>(config_.model, mix_seed(config_.seed, kBlenderInitStream));
  nn::AdamOptions opts;
  opts.learning_rate = config_.learning_rate;
  opts.weight_decay = config_.weight_decay;
  adam_ = std::make_unique<nn::Adam>(model_->parameters(), opts);
  train_ = select(ds, "train", config_.categories, config_.max_train_records);
  val_ = select(ds, "val", config_.categories, config_.max_val_records);
  if (train_.empty()) throw std::invalid_argument("train_blender: no training records");
  for (const ObjectRecord* r : train_) train_parts_.push_back(normalized_parts(r->bbox, r->parts));
  const auto& vrecs = val_.empty() ? train_ : val_;
  for (std::size_t i = 0; i < vrecs.size(); ++i) {
    dist::Rng rng(mix_seed(mix_seed(config_.seed, kBlenderValStream), i));
    val_parts_.push_back(normalized_parts(vrecs[i]->bbox, vrecs[i]->parts));
    const OccupancySet pool = make_occupancy_pairs(*vrecs[i], rng, config_.occupancy);
    OccupancySet fixed;
    for (std::size_t j : sample_balanced(pool, config_.points, rng)) {
      fixed.points.push_back(pool.points[j]);
      fixed.labels.push_back(pool.labels[j]);
      fixed.weights.push_back(pool.weights[j]);
    }
    fixed.inside_fraction = pool.inside_fraction;
    val_sets_.push_back(std::move(fixed));
  }
}

void BlenderTrainer::resume(const BlenderCheckpoint& ckpt) {
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
  std::istringstream is(ckpt.data_rng);
  is >> data_rng_;
  if (!is) throw CheckpointError("malformed random stream state");
}

BlenderLogEntry BlenderTrainer::step() {
  ++step_;
  const double inv_batch = 1.0 / static_cast<double>(config_.batch_size);
  double total = 0.0;
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    const std::size_t i = static_cast<std::size_t>(dist::uniform_index(data_rng_, train_.size()));
    dist::Rng pool_rng(data_rng_());
    const OccupancySet pool = make_occupancy_pairs(*train_[i], pool_rng, config_.occupancy);
    const std::vector<std::size_t> batch = sample_balanced(pool, config_.points, pool_rng);
    Tape t;
    const Var loss = blender_loss(*model_, t, train_parts_[i], pool, batch);
    const double v = loss.scalar();
    if (!std::isfinite(v)) {
      throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_) + " on record " + train_[i]->id);
    }
    total += v;
    t.backward(ad::scale(loss, inv_batch));
  }
  adam_->step();
  BlenderLogEntry e;
  e.step = step_;
  e.loss = total * inv_batch;
  return e;
}

double BlenderTrainer::validate() const {
  double total = 0.0;
  for (std::size_t i = 0; i < val_sets_.size(); ++i) {
    std::vector<std::size_t> all(val_sets_[i].points.size());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    Tape t(false);
    total += blender_loss(*model_, t, val_parts_[i], val_sets_[i], all).scalar();
  }
  return val_sets_.empty() ? 0.0 : total / static_cast<double>(val_sets_.size());
}

BlenderCheckpoint BlenderTrainer::snapshot() const {
  BlenderCheckpoint c;
  c.model = model_->config();
  c.train = config_;
  c.manifest_hash = manifest_hash_;
  c.step = step_;
  c.best_val = best_val_;
  c.best_step = best_step_;
  std::ostringstream os;
  os << data_rng_;
  c.data_rng = os.str();
  c.parameters = model_->parameters().values();
  c.optimizer = adam_->state();
  return c;
}

BlenderCheckpoint BlenderTrainer::run(const std::filesystem::path& out_dir,
                                      const std::function<void(const BlenderLogEntry&)>& on_log) {
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir / "train_log.jsonl", step_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + (out_dir / "train_log.jsonl").string());
  }
  auto emit = [&](const BlenderLogEntry& e) {
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
      if (!out_dir.empty()) save_blender_checkpoint(out_dir / "best.ckpt", snapshot());
    }
  };
  if (step_ == 0) {
    BlenderLogEntry e;
    e.val_loss = validate();
    consider(*e.val_loss);
    emit(e);
  }
  while (step_ < config_.steps) {
    BlenderLogEntry e = step();
    if (step_ % config_.val_interval == 0 || step_ == config_.steps) {
      e.val_loss = validate();
      consider(*e.val_loss);
      if (!out_dir.empty()) save_blender_checkpoint(out_dir / "last.ckpt", snapshot());
    }
    emit(e);
  }
  if (!out_dir.empty()) save_blender_checkpoint(out_dir / "last.ckpt", snapshot());
  if (best_params_.empty()) {
    // Resumed past the best step and never improved on it: the best weights
    // live only in the earlier run's best.ckpt.
    if (!out_dir.empty() && std::filesystem::exists(out_dir / "best.ckpt")) {
      BlenderCheckpoint earlier = load_blender_checkpoint(out_dir / "best.ckpt");
      if (earlier.manifest_hash == manifest_hash_ && earlier.step == best_step_) return earlier;
    }
    return snapshot();
  }
  BlenderCheckpoint best = snapshot();
  best.step = best_step_;
  best.parameters = best_params_;
  best.optimizer = best_optimizer_;
  return best;
}

}  // namespace partgen
