// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "partgen/blending.hpp"
#include "partgen/checkpoint.hpp"
#include "partgen/dataset.hpp"
#include "partgen/evaluation.hpp"
#include "partgen/generator_training.hpp"
#include "partgen/marching_cubes.hpp"
#include "partgen/part_transformer.hpp"

namespace partgen::cli {
namespace {

namespace fs = std::filesystem;

/// Contract violations in the arguments; reported with kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path(".");
}

fs::path resolve_out(const std::string& flag, const char* fallback) {
  return flag.empty() ? output_root() / fallback : fs::path(flag);
}

std::vector<Category> parse_categories(const std::vector<std::string>& names) {
  std::vector<Category> out;
  for (const std::string& n : names) {
    try {
      out.push_back(parse_category(n));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& text, const char* what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": not a number: '" + tok + "'");
    }
  }
  return v;
}

/// "sx,sy,sz", optionally followed by "tx,ty,tz" and six rotation values.
BoundingBox parse_bbox(const std::string& text) {
  const std::vector<double> v = parse_numbers(text, "--bbox");
  if (v.size() != 3 && v.size() != 6 && v.size() != 12) {
    throw UsageError("--bbox expects 3, 6 or 12 comma-separated values");
  }
  BoundingBox b;
  for (int i = 0; i < 3; ++i) {
    if (!(v[i] > 0.0)) throw UsageError("--bbox sizes must be positive");
    b.size[i] = v[i];
  }
  if (v.size() >= 6) std::copy(v.begin() + 3, v.begin() + 6, b.translation.begin());
  if (v.size() == 12) {
    Rotation6D r;
    std::copy(v.begin() + 6, v.end(), r.begin());
    try {
      b.rotation = matrix_to_rot6d(rot6d_to_matrix(r));
    } catch (const std::exception& e) {
      throw UsageError(std::string("--bbox rotation: ") + e.what());
    }
  }
  return b;
}

std::vector<std::size_t> parse_indices(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  for (double d : parse_numbers(text, what)) {
    if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
      throw UsageError(std::string(what) + ": indices must be non-negative integers");
    }
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

Dataset load_dataset_checked(const std::string& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  if (!fs::exists(fs::path(dir) / kManifestFile)) throw UsageError("no dataset at " + dir);
  return load_dataset(dir);
}

/// Refuses to overwrite a non-empty directory unless forced.
void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(dir);
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---- make-dataset ---------------------------------------------------------------

struct MakeDatasetArgs {
  std::string out;
  bool force = false;
  std::vector<std::string> categories = {"chair", "table", "lamp"};
  DatasetConfig config;
};

int make_dataset_cmd(const MakeDatasetArgs& a, std::uint64_t seed, std::ostream& out) {
  DatasetConfig config = a.config;
  config.seed = seed;
  config.categories = parse_categories(a.categories);
  if (config.categories.empty()) throw UsageError("--categories must name at least one category");
  const fs::path dir = resolve_out(a.out, "dataset");
  prepare_output_dir(dir, a.force);
  const Dataset ds = make_dataset(config);
  save_dataset(dir, ds);
  out << "wrote " << ds.records.size() << " records to " << dir.string() << "\n";
  for (const char* split : {"train", "val", "test"}) {
    std::map<std::string, std::size_t> counts;
    for (const ObjectRecord* r : ds.split(split)) ++counts[std::string(category_name(r->category))];
    out << split << ":";
    for (const auto& [name, n] : counts) out << " " << name << "=" << n;
    out << "\n";
  }
  return kExitOk;
}

// ---- train-generator ------------------------------------------------------------

struct TrainGeneratorArgs {
  std::string data;
  std::string out;
  std::string resume;
  bool force = false;
  std::vector<std::string> categories;
  GeneratorTrainConfig config;
};

void refuse_existing_run(const fs::path& dir, bool force) {
  for (const char* f : {"best.ckpt", "last.ckpt", "train_log.jsonl"}) {
    if (fs::exists(dir / f) && !force) {
      throw UsageError(dir.string() + " already holds a training run (use --force or --resume)");
    }
  }
  fs::create_directories(dir);
}

int train_generator_cmd(const TrainGeneratorArgs& a, const CLI::App& sub, std::uint64_t seed, std::ostream& out) {
  const Dataset ds = load_dataset_checked(a.data);
  const fs::path dir = resolve_out(a.out, "generator");
  auto on_log = [&out](const TrainLogEntry& e) {
    if (e.val_nll) out << log_line(e) << "\n";
  };
  if (!a.resume.empty()) {
    const GeneratorCheckpoint ckpt = load_generator_checkpoint(a.resume);
    GeneratorTrainConfig config = ckpt.train;
    if (sub.count("--steps") > 0) config.steps = a.config.steps;
    GeneratorTrainer trainer(ds, config);
    try {
      trainer.resume(ckpt);
    } catch (const ManifestMismatch& e) {
      throw std::runtime_error(std::string("refusing to resume: ") + e.what());
    }
    fs::create_directories(dir);
    out << "resuming at step " << trainer.steps_done() << " of " << config.steps << "\n";
    const GeneratorCheckpoint best = trainer.run(dir, on_log);
    out << "best validation nll " << format_g(best.best_val) << " at step " << best.best_step << "\n";
    return kExitOk;
  }
  refuse_existing_run(dir, a.force);
  GeneratorTrainConfig config = a.config;
  config.seed = seed;
  config.categories = parse_categories(a.categories);
  GeneratorTrainer trainer(ds, config);
  out << "training generator on " << trainer.train_records().size() << " records, "
      << trainer.model().parameters().scalar_count() << " parameters\n";
  const GeneratorCheckpoint best = trainer.run(dir, on_log);
  out << "best validation nll " << format_g(best.best_val) << " at step " << best.best_step << "\n";
  return kExitOk;
}

// ---- train-blender -------------------------------------------------------------

struct TrainBlenderArgs {
  std::string data;
  std::string out;
  std::string resume;
  bool force = false;
  std::vector<std::string> categories;
  BlenderTrainConfig config;
};

int train_blender_cmd(const TrainBlenderArgs& a, const CLI::App& sub, std::uint64_t seed, std::ostream& out) {
  const Dataset ds = load_dataset_checked(a.data);
  const fs::path dir = resolve_out(a.out, "blender");
  auto on_log = [&out](const BlenderLogEntry& e) {
    if (e.val_loss) out << log_line(e) << "\n";
  };
  if (!a.resume.empty()) {
    const BlenderCheckpoint ckpt = load_blender_checkpoint(a.resume);
    BlenderTrainConfig config = ckpt.train;
    if (sub.count("--steps") > 0) config.steps = a.config.steps;
    BlenderTrainer trainer(ds, config);
    try {
      trainer.resume(ckpt);
    } catch (const ManifestMismatch& e) {
      throw std::runtime_error(std::string("refusing to resume: ") + e.what());
    }
    fs::create_directories(dir);
    out << "resuming at step " << trainer.steps_done() << " of " << config.steps << "\n";
    const BlenderCheckpoint best = trainer.run(dir, on_log);
    out << "best validation loss " << format_g(best.best_val) << " at step " << best.best_step << "\n";
    return kExitOk;
  }
  refuse_existing_run(dir, a.force);
  BlenderTrainConfig config = a.config;
  config.seed = seed;
  config.categories = parse_categories(a.categories);
  BlenderTrainer trainer(ds, config);
  out << "training blender on " << trainer.train_records().size() << " records, "
      << trainer.model().parameters().scalar_count() << " parameters\n";
  const BlenderCheckpoint best = trainer.run(dir, on_log);
  out << "best validation loss " << format_g(best.best_val) << " at step " << best.best_step << "\n";
  return kExitOk;
}

// ---- generate / complete ---------------------------------------------------------

struct SamplingArgs {
  std::string checkpoint;
  std::string out;
  bool force = false;
  std::size_t count = 1;
  std::size_t max_parts = 50;
  double temperature = 1.0;
  std::string condition_text;
  // Meshes.
  bool mesh = false;
  std::string blender;
  int resolution = 0;
};

struct GenerateArgs {
  SamplingArgs sampling;
  std::string bbox;
  std::string bbox_from;
  std::string data;
  std::string category = "chair";
};

struct CompleteArgs {
  SamplingArgs sampling;
  std::string partial;
  std::string data;
  std::string record;
  std::string keep;
  std::string drop;
};

std::unique_ptr<PartGenerator> load_generator(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  return instantiate_generator(load_generator_checkpoint(path));
}

std::vector<double> condition_for(const PartGenerator& g, const std::string& text) {
  if (text.empty()) return {};
  if (g.config().condition_dim == 0) throw UsageError("--condition-text needs a text-conditioned checkpoint");
  return g.condition_vector(text);
}

/// Samples `count` sequences; sample i uses its own stream so results do not
/// depend on the count.
std::vector<ObjectRecord> sample_records(const PartGenerator& g, const ObjectRecord& base, const std::string& prefix_id,
                                         const SamplingArgs& a, std::uint64_t seed) {
  if (a.count == 0) throw UsageError("--count must be positive");
  if (a.max_parts == 0) throw UsageError("--max-parts must be positive");
  if (a.max_parts < base.parts.size()) throw UsageError("--max-parts is smaller than the given prefix");
  if (!(a.temperature >= 0.0)) throw UsageError("--temperature must be >= 0");
  const std::vector<double> cond = condition_for(g, a.condition_text);
  SampleOptions opts;
  opts.temperature = a.temperature;
  std::vector<ObjectRecord> out;
  for (std::size_t i = 0; i < a.count; ++i) {
    dist::Rng rng(mix_seed(seed, i));
    SampledSequence s = sample_sequence(g, base.bbox, base.parts, cond, rng, a.max_parts, opts);
    ObjectRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "-%04zu", i);
    r.id = prefix_id + id;
    r.category = base.category;
    r.bbox = base.bbox;
    r.parts = std::move(s.parts);
    r.truncated = s.truncated;
    r.description = a.condition_text.empty() ? text_description(r, g.context().vocabulary) : a.condition_text;
    out.push_back(std::move(r));
  }
  return out;
}

void write_meshes(const SamplingArgs& a, const fs::path& dir, const std::vector<ObjectRecord>& records,
                  std::ostream& out) {
  if (!a.mesh) return;
  if (a.blender.empty()) throw UsageError("--mesh needs --blender");
  const BlenderCheckpoint ckpt = load_blender_checkpoint(a.blender);
  const auto net = instantiate_blender(ckpt);
  const int res = a.resolution > 0 ? a.resolution : ckpt.model.resolution;
  for (const ObjectRecord& r : records) {
    const TriangleMesh mesh =
        r.parts.empty() ? TriangleMesh{} : extract_mesh(*net, r.bbox, r.parts, res, ckpt.model.iso);
    write_obj(dir / (r.id + ".obj"), mesh);
    out << r.id << ".obj: " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces\n";
  }
}

int emit_samples(const SamplingArgs& a, const std::vector<ObjectRecord>& records, const PartGenerator& g,
                 const fs::path& dir, std::ostream& out) {
  write_records(dir / kRecordsFile, records, g.context().vocabulary);
  std::size_t truncated = 0;
  for (const ObjectRecord& r : records) {
    truncated += r.truncated ? 1 : 0;
    out << r.id << ": " << r.parts.size() << " parts" << (r.truncated ? " (truncated)" : "") << "\n";
  }
  write_meshes(a, dir, records, out);
  out << "wrote " << records.size() << " records to " << (dir / kRecordsFile).string();
  if (truncated > 0) out << ", " << truncated << " truncated at the part cap";
  out << "\n";
  return kExitOk;
}

int generate_cmd(const GenerateArgs& a, std::uint64_t seed, std::ostream& out) {
  const auto g = load_generator(a.sampling.checkpoint);
  ObjectRecord base;
  if (!a.bbox.empty() == !a.bbox_from.empty()) throw UsageError("give exactly one of --bbox and --bbox-from");
  if (!a.bbox.empty()) {
    base.bbox = parse_bbox(a.bbox);
    base.category = parse_categories({a.category}).front();
  } else {
    const Dataset ds = load_dataset_checked(a.data);
    const ObjectRecord* r = ds.find(a.bbox_from);
    if (r == nullptr) throw UsageError("no record '" + a.bbox_from + "' in " + a.data);
    base.bbox = r->bbox;
    base.category = r->category;
  }
  const fs::path dir = resolve_out(a.sampling.out, "generated");
  prepare_output_dir(dir, a.sampling.force);
  return emit_samples(a.sampling, sample_records(*g, base, "gen", a.sampling, seed), *g, dir, out);
}

int complete_cmd(const CompleteArgs& a, std::uint64_t seed, std::ostream& out) {
  const auto g = load_generator(a.sampling.checkpoint);
  ObjectRecord source;
  if (!a.partial.empty() == !a.data.empty()) throw UsageError("give exactly one of --partial and --data");
  if (!a.partial.empty()) {
    const std::vector<ObjectRecord> rs = read_records(a.partial, g->context().vocabulary, false);
    auto it = a.record.empty() ? rs.begin()
                               : std::find_if(rs.begin(), rs.end(), [&](const auto& r) { return r.id == a.record; });
    if (it == rs.end()) throw UsageError("no matching record in " + a.partial);
    source = *it;
  } else {
    if (a.record.empty()) throw UsageError("--data needs --record");
    const Dataset ds = load_dataset_checked(a.data);
    const ObjectRecord* r = ds.find(a.record);
    if (r == nullptr) throw UsageError("no record '" + a.record + "' in " + a.data);
    source = *r;
  }
  if (!a.keep.empty() && !a.drop.empty()) throw UsageError("give at most one of --keep and --drop");
  std::vector<std::size_t> keep;
  if (!a.keep.empty()) {
    keep = parse_indices(a.keep, "--keep");
  } else {
    const std::vector<std::size_t> drop = parse_indices(a.drop, "--drop");
    for (std::size_t i = 0; i < source.parts.size(); ++i) {
      if (std::find(drop.begin(), drop.end(), i) == drop.end()) keep.push_back(i);
    }
    for (std::size_t d : drop) {
      if (d >= source.parts.size()) throw UsageError("--drop index out of range");
    }
  }
  ObjectRecord base;
  base.category = source.category;
  base.bbox = source.bbox;
  for (std::size_t i : keep) {
    if (i >= source.parts.size()) throw UsageError("--keep index out of range");
    base.parts.push_back(source.parts[i]);
  }
  for (const Part& p : base.parts) {
    try {
      validate_part(p, g->config().num_labels - 1);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("invalid partial record: ") + e.what());
    }
  }
  const fs::path dir = resolve_out(a.sampling.out, "completed");
  prepare_output_dir(dir, a.sampling.force);
  const std::string id = (source.id.empty() ? std::string("partial") : source.id) + "-c";
  return emit_samples(a.sampling, sample_records(*g, base, id, a.sampling, seed), *g, dir, out);
}

// ---- extract-mesh ----------------------------------------------------------------

struct ExtractArgs {
  std::string blender;
  std::string records;
  std::string data;
  std::string record;
  std::string out;
  bool force = false;
  int resolution = 0;
  double iso = 0.0;
  bool dump_grid = false;
};

int extract_cmd(const ExtractArgs& a, std::ostream& out) {
  if (a.blender.empty()) throw UsageError("--blender is required");
  std::vector<ObjectRecord> records;
  if (!a.records.empty() == !a.data.empty()) throw UsageError("give exactly one of --records and --data");
  if (!a.records.empty()) {
    records = read_records(a.records, default_vocabulary(), false);
  } else {
    const Dataset ds = load_dataset_checked(a.data);
    if (a.record.empty()) throw UsageError("--data needs --record");
    const ObjectRecord* r = ds.find(a.record);
    if (r == nullptr) throw UsageError("no record '" + a.record + "' in " + a.data);
    records.push_back(*r);
  }
  if (!a.record.empty() && !a.records.empty()) {
    std::erase_if(records, [&](const ObjectRecord& r) { return r.id != a.record; });
    if (records.empty()) throw UsageError("no record '" + a.record + "' in " + a.records);
  }
  const BlenderCheckpoint ckpt = load_blender_checkpoint(a.blender);
  const auto net = instantiate_blender(ckpt);
  const int res = a.resolution > 0 ? a.resolution : ckpt.model.resolution;
  const double iso = a.iso > 0.0 ? a.iso : ckpt.model.iso;
  if (!(iso < 1.0)) throw UsageError("--iso must lie in (0, 1)");
  const fs::path dir = resolve_out(a.out, "meshes");
  prepare_output_dir(dir, a.force);
  for (const ObjectRecord& r : records) {
    TriangleMesh mesh;
    if (!r.parts.empty()) {
      const ScalarGrid grid = occupancy_grid(*net, r.bbox, r.parts, res);
      if (a.dump_grid) write_grid(dir / (r.id + ".grid"), grid);
      mesh = mesh_from_grid(grid, r.bbox, iso);
    }
    write_obj(dir / (r.id + ".obj"), mesh);
    out << r.id << ".obj: " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces"
        << (mesh.empty() ? " (empty isosurface)" : "") << "\n";
  }
  return kExitOk;
}

// ---- evaluate --------------------------------------------------------------------

struct EvaluateArgs {
  std::string gen;
  std::string gen_split;
  std::string data;
  std::string split = "test";
  std::vector<std::string> categories;
  std::string report;
  EvaluationConfig config;
};

std::vector<EvalItem> generated_items(const EvaluateArgs& a) {
  if (a.gen.empty()) throw UsageError("--gen is required");
  const fs::path gen(a.gen);
  if (!fs::exists(gen)) throw UsageError("--gen: no such path " + a.gen);
  std::vector<EvalItem> items;
  auto add_records = [&](const std::vector<ObjectRecord>& rs) {
    for (const ObjectRecord& r : rs) items.push_back({r.id, r.parts});
  };
  if (fs::is_regular_file(gen)) {
    add_records(read_records(gen, default_vocabulary(), false));
    return items;
  }
  if (!a.gen_split.empty()) {
    const Dataset ds = load_dataset_checked(a.gen);
    if (!ds.manifest.splits.contains(a.gen_split)) throw UsageError("unknown split '" + a.gen_split + "'");
    for (const ObjectRecord* r : ds.split(a.gen_split)) items.push_back({r->id, r->parts});
    return items;
  }
  if (fs::exists(gen / kRecordsFile)) add_records(read_records(gen / kRecordsFile, default_vocabulary(), false));
  std::vector<fs::path> meshes;
  for (const auto& e : fs::directory_iterator(gen)) {
    if (e.is_regular_file() && e.path().extension() == ".obj") meshes.push_back(e.path());
  }
  std::sort(meshes.begin(), meshes.end());
  // Meshes take the place of the records they were extracted from.
  if (!meshes.empty()) {
    items.clear();
    for (const fs::path& m : meshes) items.push_back({m.filename().string(), m});
  }
  return items;
}

int evaluate_cmd(const EvaluateArgs& a, std::uint64_t seed, std::ostream& out) {
  const std::vector<EvalItem> gen = generated_items(a);
  if (gen.empty()) throw UsageError("--gen holds no records or meshes");
  const Dataset ds = load_dataset_checked(a.data);
  if (!ds.manifest.splits.contains(a.split)) throw UsageError("unknown split '" + a.split + "'");
  const std::vector<Category> cats = parse_categories(a.categories);
  std::vector<EvalItem> ref;
  for (const ObjectRecord* r : ds.split(a.split)) {
    if (!cats.empty() && std::find(cats.begin(), cats.end(), r->category) == cats.end()) continue;
    ref.push_back({r->id, r->parts});
  }
  if (ref.empty()) throw UsageError("reference split '" + a.split + "' is empty");
  EvaluationConfig config = a.config;
  config.seed = seed;
  const EvaluationReport report = evaluate_generation(gen, ref, config);
  const std::string text = report_to_string(report);
  const fs::path file = a.report.empty() ? output_root() / "report.txt" : fs::path(a.report);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!(f << text)) throw std::runtime_error("cannot write " + file.string());
  out << text;
  return report.errors.empty() ? kExitOk : kExitPartial;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Part-based generative modelling of cuboid shapes.", "partgen");
  app.set_config("--config", "", "INI file with one section per command; flags override it");
  app.fallthrough();
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Global random seed")->capture_default_str();

  // make-dataset
  MakeDatasetArgs md;
  CLI::App* md_cmd = app.add_subcommand("make-dataset", "Generate the procedural dataset")->alias("dataset");
  md_cmd->add_option("--out", md.out, "Output directory");
  md_cmd->add_flag("--force", md.force, "Overwrite a non-empty output directory");
  md_cmd->add_option("--categories", md.categories, "Categories (chair, table, lamp)")->delimiter(',');
  md_cmd->add_option("--train", md.config.train_per_category, "Train records per category")->capture_default_str();
  md_cmd->add_option("--val", md.config.val_per_category, "Validation records per category")->capture_default_str();
  md_cmd->add_option("--test", md.config.test_per_category, "Test records per category")->capture_default_str();
  md_cmd->add_option("--clusters", md.config.kmeans.clusters, "Codebook size per attribute")->capture_default_str();

  // train-generator
  TrainGeneratorArgs tg;
  GeneratorConfig& gm = tg.config.model;
  CLI::App* tg_cmd = app.add_subcommand("train-generator", "Train the part sequence generator")->alias("generator");
  tg_cmd->add_option("--data", tg.data, "Dataset directory");
  tg_cmd->add_option("--out", tg.out, "Output directory");
  tg_cmd->add_option("--resume", tg.resume, "Checkpoint to resume from");
  tg_cmd->add_flag("--force", tg.force, "Overwrite an existing run");
  tg_cmd->add_option("--categories", tg.categories, "Restrict training to these categories")->delimiter(',');
  tg_cmd->add_option("--steps", tg.config.steps)->capture_default_str();
  tg_cmd->add_option("--batch-size", tg.config.batch_size)->capture_default_str();
  tg_cmd->add_option("--lr", tg.config.learning_rate)->capture_default_str();
  tg_cmd->add_option("--weight-decay", tg.config.weight_decay)->capture_default_str();
  tg_cmd->add_option("--ss-ratio", tg.config.scheduled_sampling_ratio, "Probability of a scheduled-sampling step")
      ->capture_default_str();
  tg_cmd->add_option("--val-interval", tg.config.val_interval)->capture_default_str();
  tg_cmd->add_option("--val-draws", tg.config.val_draws)->capture_default_str();
  tg_cmd->add_option("--max-train", tg.config.max_train_records, "0 keeps all")->capture_default_str();
  tg_cmd->add_option("--max-val", tg.config.max_val_records, "0 keeps all")->capture_default_str();
  tg_cmd->add_option("--layers", gm.layers)->capture_default_str();
  tg_cmd->add_option("--heads", gm.heads)->capture_default_str();
  tg_cmd->add_option("--embed-dim", gm.embed_dim)->capture_default_str();
  tg_cmd->add_option("--label-embed-dim", gm.label_embed_dim)->capture_default_str();
  tg_cmd->add_option("--concat-dim", gm.concat_dim)->capture_default_str();
  tg_cmd->add_option("--qkv-dim", gm.qkv_dim)->capture_default_str();
  tg_cmd->add_option("--mlp-dim", gm.mlp_dim)->capture_default_str();
  tg_cmd->add_option("--octaves", gm.octaves)->capture_default_str();
  tg_cmd->add_option("--mixtures", gm.mixtures)->capture_default_str();
  tg_cmd->add_option("--head-hidden", gm.head_hidden)->capture_default_str();
  tg_cmd->add_option("--condition", gm.condition, "Text condition embedder")
      ->check(CLI::IsMember({"none", "bow"}))
      ->capture_default_str();

  // train-blender
  TrainBlenderArgs tb;
  BlenderConfig& bm = tb.config.model;
  CLI::App* tb_cmd = app.add_subcommand("train-blender", "Train the occupancy blending network")->alias("blender");
  tb_cmd->add_option("--data", tb.data, "Dataset directory");
  tb_cmd->add_option("--out", tb.out, "Output directory");
  tb_cmd->add_option("--resume", tb.resume, "Checkpoint to resume from");
  tb_cmd->add_flag("--force", tb.force, "Overwrite an existing run");
  tb_cmd->add_option("--categories", tb.categories, "Restrict training to these categories")->delimiter(',');
  tb_cmd->add_option("--steps", tb.config.steps)->capture_default_str();
  tb_cmd->add_option("--batch-size", tb.config.batch_size, "Objects per step")->capture_default_str();
  tb_cmd->add_option("--points", tb.config.points, "Occupancy pairs per object")->capture_default_str();
  tb_cmd->add_option("--lr", tb.config.learning_rate)->capture_default_str();
  tb_cmd->add_option("--weight-decay", tb.config.weight_decay)->capture_default_str();
  tb_cmd->add_option("--val-interval", tb.config.val_interval)->capture_default_str();
  tb_cmd->add_option("--max-train", tb.config.max_train_records, "0 keeps all")->capture_default_str();
  tb_cmd->add_option("--max-val", tb.config.max_val_records, "0 keeps all")->capture_default_str();
  tb_cmd->add_option("--pool-uniform", tb.config.occupancy.uniform)->capture_default_str();
  tb_cmd->add_option("--pool-surface", tb.config.occupancy.surface)->capture_default_str();
  tb_cmd->add_option("--layers", bm.layers)->capture_default_str();
  tb_cmd->add_option("--heads", bm.heads)->capture_default_str();
  tb_cmd->add_option("--embed-dim", bm.embed_dim)->capture_default_str();
  tb_cmd->add_option("--label-embed-dim", bm.label_embed_dim)->capture_default_str();
  tb_cmd->add_option("--concat-dim", bm.concat_dim)->capture_default_str();
  tb_cmd->add_option("--qkv-dim", bm.qkv_dim)->capture_default_str();
  tb_cmd->add_option("--mlp-dim", bm.mlp_dim)->capture_default_str();
  tb_cmd->add_option("--part-octaves", bm.part_octaves)->capture_default_str();
  tb_cmd->add_option("--point-octaves", bm.point_octaves)->capture_default_str();
  tb_cmd->add_option("--resolution", bm.resolution, "Default mesh extraction resolution")->capture_default_str();
  tb_cmd->add_option("--iso", bm.iso, "Default iso level")->capture_default_str();

  auto add_sampling = [](CLI::App* cmd, SamplingArgs& s) {
    cmd->add_option("--checkpoint", s.checkpoint, "Generator checkpoint");
    cmd->add_option("--out", s.out, "Output directory");
    cmd->add_flag("--force", s.force, "Overwrite a non-empty output directory");
    cmd->add_option("--count", s.count, "Number of samples")->capture_default_str();
    cmd->add_option("--max-parts", s.max_parts, "Part cap before a record is flagged truncated")
        ->capture_default_str();
    cmd->add_option("--temperature", s.temperature, "Label and cluster temperature; 0 is greedy")
        ->capture_default_str();
    cmd->add_option("--condition-text", s.condition_text, "Text condition for conditioned checkpoints");
    cmd->add_flag("--mesh", s.mesh, "Also extract OBJ meshes");
    cmd->add_option("--blender", s.blender, "Blender checkpoint for --mesh");
    cmd->add_option("--resolution", s.resolution, "Mesh grid resolution (0: checkpoint default)");
  };

  // generate
  GenerateArgs ge;
  CLI::App* ge_cmd = app.add_subcommand("generate", "Sample objects inside a bounding box")->alias("sampling");
  add_sampling(ge_cmd, ge.sampling);
  ge_cmd->add_option("--bbox", ge.bbox, "sx,sy,sz[,tx,ty,tz[,six rotation values]]");
  ge_cmd->add_option("--bbox-from", ge.bbox_from, "Take the bounding box of this dataset record");
  ge_cmd->add_option("--data", ge.data, "Dataset directory for --bbox-from");
  ge_cmd->add_option("--category", ge.category, "Category recorded on outputs with --bbox")->capture_default_str();

  // complete
  CompleteArgs co;
  CLI::App* co_cmd = app.add_subcommand("complete", "Complete a partial object");
  add_sampling(co_cmd, co.sampling);
  co_cmd->add_option("--partial", co.partial, "Records file holding the partial object");
  co_cmd->add_option("--data", co.data, "Dataset directory holding the partial object");
  co_cmd->add_option("--record", co.record, "Record id (default: first record of --partial)");
  co_cmd->add_option("--keep", co.keep, "Comma-separated part indices to keep");
  co_cmd->add_option("--drop", co.drop, "Comma-separated part indices to remove");

  // extract-mesh
  ExtractArgs ex;
  CLI::App* ex_cmd = app.add_subcommand("extract-mesh", "Blend records into OBJ meshes");
  ex_cmd->add_option("--blender", ex.blender, "Blender checkpoint");
  ex_cmd->add_option("--records", ex.records, "Records file");
  ex_cmd->add_option("--data", ex.data, "Dataset directory (with --record)");
  ex_cmd->add_option("--record", ex.record, "Only this record id");
  ex_cmd->add_option("--out", ex.out, "Output directory");
  ex_cmd->add_flag("--force", ex.force, "Overwrite a non-empty output directory");
  ex_cmd->add_option("--resolution", ex.resolution, "Grid cells per axis (0: checkpoint default)");
  ex_cmd->add_option("--iso", ex.iso, "Iso level (0: checkpoint default)");
  ex_cmd->add_flag("--dump-grid", ex.dump_grid, "Also write the float32 occupancy grid");

  // evaluate
  EvaluateArgs ev;
  CLI::App* ev_cmd = app.add_subcommand("evaluate", "MMD-CD and COV-CD against a reference split")->alias("evaluation");
  ev_cmd->add_option("--gen", ev.gen, "Generated records file or directory (records.jsonl and/or *.obj)");
  ev_cmd->add_option("--gen-split", ev.gen_split, "Treat --gen as a dataset and use this split");
  ev_cmd->add_option("--data", ev.data, "Reference dataset directory");
  ev_cmd->add_option("--split", ev.split, "Reference split")->capture_default_str();
  ev_cmd->add_option("--categories", ev.categories, "Restrict the reference set")->delimiter(',');
  ev_cmd->add_option("--points", ev.config.points, "Points per cloud")->capture_default_str();
  ev_cmd->add_option("--workers", ev.config.workers, "Threads for the distance matrix (0: all cores)");
  ev_cmd->add_option("--report", ev.report, "Report file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "partgen: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (md_cmd->parsed()) return make_dataset_cmd(md, seed, out);
    if (tg_cmd->parsed()) return train_generator_cmd(tg, *tg_cmd, seed, out);
    if (tb_cmd->parsed()) return train_blender_cmd(tb, *tb_cmd, seed, out);
    if (ge_cmd->parsed()) return generate_cmd(ge, seed, out);
    if (co_cmd->parsed()) return complete_cmd(co, seed, out);
    if (ex_cmd->parsed()) return extract_cmd(ex, out);
    if (ev_cmd->parsed()) return evaluate_cmd(ev, seed, out);
  } catch (const UsageError& e) {
    err << "partgen: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "partgen: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "partgen: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace partgen::cli
