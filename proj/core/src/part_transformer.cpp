// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/part_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace partgen {

using ad::Matrix;
using ad::Tape;
using ad::Var;

void GeneratorConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw std::invalid_argument(std::string("generator config: ") + what + " must be positive");
  };
  positive(num_labels, "num_labels");
  positive(embed_dim, "embed_dim");
  positive(label_embed_dim, "label_embed_dim");
  positive(concat_dim, "concat_dim");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(qkv_dim, "qkv_dim");
  positive(mlp_dim, "mlp_dim");
  positive(octaves, "octaves");
  positive(mixtures, "mixtures");
  positive(clusters, "clusters");
  positive(head_hidden, "head_hidden");
  if (num_labels < 2) throw std::invalid_argument("generator config: need at least one label besides END");
  if (qkv_dim % heads != 0) throw std::invalid_argument("generator config: qkv_dim must be divisible by heads");
  if (condition_dim < 0) throw std::invalid_argument("generator config: condition_dim must be >= 0");
  if (!(bin_half_width > 0.0)) throw std::invalid_argument("generator config: bin_half_width must be positive");
}

GeneratorContext GeneratorContext::from_manifest(const DatasetManifest& m) {
  return {m.stats, m.codebooks, m.vocabulary};
}

void positional_encode_into(std::span<const double> x, int octaves, double* out) {
  for (std::size_t d = 0; d < x.size(); ++d) {
    for (int l = 0; l < octaves; ++l) {
      // 2^l x is exact in binary floating point, and so is fmod.
      const double phase = std::fmod(std::ldexp(x[d], l), 2.0);
      const double a = std::numbers::pi * phase;
      out[d * 2 * static_cast<std::size_t>(octaves) + 2 * static_cast<std::size_t>(l)] = std::sin(a);
      out[d * 2 * static_cast<std::size_t>(octaves) + 2 * static_cast<std::size_t>(l) + 1] = std::cos(a);
    }
  }
}

std::vector<double> positional_encode(std::span<const double> x, int octaves) {
  std::vector<double> out(2 * static_cast<std::size_t>(octaves) * x.size());
  positional_encode_into(x, octaves, out.data());
  return out;
}

void encode_attribute(std::span<const double> x, int octaves, double* out) {
  std::array<double, 6> half{};
  for (std::size_t d = 0; d < x.size(); ++d) half[d] = kEncodingScale * x[d];
  positional_encode_into(std::span<const double>(half.data(), x.size()), octaves, out);
}

namespace {

Matrix pe_row(std::span<const double> x, int octaves) {
  Matrix m(1, static_cast<Eigen::Index>(2 * octaves * x.size()));
  encode_attribute(x, octaves, m.data());
  return m;
}

std::span<const double> row_span(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

}  // namespace

PartGenerator::PartGenerator(GeneratorConfig config, GeneratorContext context, std::uint64_t seed)
    : config_(std::move(config)), context_(std::move(context)) {
  const int k = context_.codebooks.translation.size();
  if (k <= 0 || context_.codebooks.rotation.size() != k || context_.codebooks.size.size() != k) {
    throw std::invalid_argument("generator: codebooks are missing or have different cluster counts");
  }
  // The cluster count is a property of the dataset codebooks.
  config_.clusters = k;
  embedder_ = make_condition_embedder(config_.condition, config_.condition_dim > 0 ? config_.condition_dim : 64);
  config_.condition_dim = embedder_ ? embedder_->dim() : 0;
  if (!embedder_) config_.condition = "none";
  config_.validate();

  std::mt19937_64 rng(seed);
  const int E = config_.embed_dim;
  const int C = config_.num_labels;
  const int L = config_.octaves;
  label_table_ = store_.add("label_embedding", nn::uniform_init(C + 1, config_.label_embed_dim, 1.0, rng));
  concat_proj_ = nn::Linear(store_, "part_encoder.concat", config_.part_feature_width(), config_.concat_dim, rng);
  embed_proj_ = nn::Linear(store_, "part_encoder.embed", config_.concat_dim, E, rng);
  if (config_.condition_dim > 0) {
    condition_proj_ = nn::Linear(store_, "condition.proj", config_.condition_dim, E, rng);
  }
  query_ = store_.add("query", nn::uniform_init(1, E, 1.0, rng));
  for (int i = 0; i < config_.layers; ++i) {
    encoder_.emplace_back(store_, "encoder." + std::to_string(i), E, config_.qkv_dim, config_.heads, config_.mlp_dim,
                          rng);
  }
  label_head_ = nn::Linear(store_, "head.label", E, C, rng);

  const int lam = config_.label_embed_dim;
  const std::array<int, 3> coarse_in = {E + lam, E + lam + 2 * L * 3, E + lam + 2 * L * 9};
  const std::array<const char*, 3> names = {"translation", "rotation", "size"};
  for (int a = 0; a < 3; ++a) {
    const int fine_out = dist::MixtureOfLogistics::packed_width(kAttributeDims[a], config_.mixtures);
    coarse_[a] = nn::HeadMlp(store_, std::string("head.") + names[a] + ".coarse", coarse_in[a], config_.head_hidden,
                             E, k, rng);
    cluster_tables_[a] = store_.add(std::string("head.") + names[a] + ".cluster_embedding",
                                    nn::uniform_init(k, E, 1.0, rng));
    fine_[a] = nn::HeadMlp(store_, std::string("head.") + names[a] + ".fine", coarse_in[a] + E, config_.head_hidden,
                           E, fine_out, rng);
  }
}

const dist::ClusterCodebook& PartGenerator::codebook(int attribute) const {
  switch (attribute) {
    case 0:
      return context_.codebooks.translation;
    case 1:
      return context_.codebooks.rotation;
    default:
      return context_.codebooks.size;
  }
}

Matrix PartGenerator::part_encodings(std::span<const Part> parts) const {
  const int L = config_.octaves;
  const Eigen::Index w = 2 * L * 12;
  Matrix pe(static_cast<Eigen::Index>(parts.size()), w);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const NormalizedAttributes a = normalize_part(context_.stats, parts[i]);
    double* row = pe.row(static_cast<Eigen::Index>(i)).data();
    encode_attribute(a.size, L, row);
    encode_attribute(a.translation, L, row + 2 * L * 3);
    encode_attribute(a.rotation, L, row + 2 * L * 6);
  }
  return pe;
}

Var PartGenerator::encode_parts(Tape& t, std::span<const Part> parts) const {
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Part& p : parts) {
    if (p.label < 0 || p.label >= end_label()) throw std::invalid_argument("encode_parts: invalid part label");
    ids.push_back(p.label);
  }
  const Var lam = ad::gather_rows(t.parameter(*label_table_), ids);
  const std::array<Var, 2> cols = {lam, t.constant(part_encodings(parts))};
  return embed_proj_(t, concat_proj_(t, ad::concat_cols(cols)));
}

Var PartGenerator::encode_bbox(Tape& t, const BoundingBox& bbox) const {
  const NormalizedAttributes a = normalize_bbox(context_.stats, bbox);
  const int L = config_.octaves;
  Matrix pe(1, 2 * L * 12);
  encode_attribute(a.size, L, pe.data());
  encode_attribute(a.translation, L, pe.data() + 2 * L * 3);
  encode_attribute(a.rotation, L, pe.data() + 2 * L * 6);
  const std::array<int, 1> id = {config_.num_labels};
  const std::array<Var, 2> cols = {ad::gather_rows(t.parameter(*label_table_), id), t.constant(std::move(pe))};
  return embed_proj_(t, concat_proj_(t, ad::concat_cols(cols)));
}

Var PartGenerator::encode_condition(Tape& t, std::span<const double> condition) const {
  if (config_.condition_dim == 0) throw std::logic_error("encode_condition: generator is unconditioned");
  if (static_cast<int>(condition.size()) != config_.condition_dim) {
    throw std::invalid_argument("encode_condition: condition width mismatch");
  }
  Matrix c(1, config_.condition_dim);
  std::copy(condition.begin(), condition.end(), c.data());
  return condition_proj_(t, t.constant(std::move(c)));
}

Var PartGenerator::forward_features(Tape& t, const Var& bbox_embed, const Var& part_embeds,
                                    std::span<const Var> condition_embeds) const {
  std::vector<Var> rows(condition_embeds.begin(), condition_embeds.end());
  rows.push_back(bbox_embed);
  if (part_embeds.valid() && part_embeds.rows() > 0) rows.push_back(part_embeds);
  rows.push_back(t.parameter(*query_));
  Var x = ad::concat_rows(rows);
  for (const nn::EncoderLayer& layer : encoder_) x = layer(t, x);
  return ad::slice_rows(x, x.rows() - 1, 1);
}

Var PartGenerator::features(Tape& t, const BoundingBox& bbox, std::span<const Part> parts,
                            std::span<const double> condition) const {
  const Var b = encode_bbox(t, bbox);
  const Var p = parts.empty() ? Var() : encode_parts(t, parts);
  if (condition.empty() || config_.condition_dim == 0) return forward_features(t, b, p, {});
  const std::array<Var, 1> c = {encode_condition(t, condition)};
  return forward_features(t, b, p, c);
}

Var PartGenerator::head_input(Tape&, std::span<const Var> pieces) const { return ad::concat_cols(pieces); }

HeadOutputs PartGenerator::decode_outputs(Tape& t, const Var& F, const Part* target) const {
  HeadOutputs out;
  out.label = label_head_(t, F);
  if (target == nullptr) {
    out.end = true;
    return out;
  }
  if (target->label < 0 || target->label >= end_label()) throw std::invalid_argument("decode: invalid target label");
  const int L = config_.octaves;
  const NormalizedAttributes a = normalize_part(context_.stats, *target);
  const std::array<int, 1> id = {target->label};
  const Var lam = ad::gather_rows(t.parameter(*label_table_), id);
  const Var pe_t = t.constant(pe_row(a.translation, L));
  const Var pe_o = t.constant(pe_row(a.rotation, L));

  const std::array<std::vector<Var>, 3> inputs = {
      std::vector<Var>{F, lam}, std::vector<Var>{F, lam, pe_t}, std::vector<Var>{F, lam, pe_t, pe_o}};
  const std::array<std::span<const double>, 3> values = {std::span<const double>(a.translation),
                                                         std::span<const double>(a.rotation),
                                                         std::span<const double>(a.size)};
  std::array<Var, 3> coarse, fine;
  for (int i = 0; i < 3; ++i) {
    coarse[i] = coarse_[i](t, head_input(t, inputs[i]));
    const std::array<int, 1> k = {codebook(i).assign(values[i])};
    std::vector<Var> fin = inputs[i];
    fin.push_back(ad::gather_rows(t.parameter(*cluster_tables_[i]), k));
    fine[i] = fine_[i](t, head_input(t, fin));
  }
  out.translation_coarse = coarse[0];
  out.rotation_coarse = coarse[1];
  out.size_coarse = coarse[2];
  out.translation_fine = fine[0];
  out.rotation_fine = fine[1];
  out.size_fine = fine[2];
  return out;
}

HeadTerms PartGenerator::decode(Tape& t, const Var& F, const Part* target) const {
  const HeadOutputs o = decode_outputs(t, F, target);
  HeadTerms terms;
  terms.end = o.end;
  terms.label = ad::cross_entropy(o.label, target == nullptr ? end_label() : target->label);
  if (o.end) {
    terms.total = terms.label;
    return terms;
  }
  const NormalizedAttributes a = normalize_part(context_.stats, *target);
  const int K = config_.mixtures;
  const double h = config_.bin_half_width;
  const double lsm = config_.log_scale_min;
  terms.translation_coarse = ad::cross_entropy(o.translation_coarse, codebook(0).assign(a.translation));
  terms.translation_fine = ad::mol_nll(o.translation_fine, a.translation, K, h, lsm);
  terms.rotation_coarse = ad::cross_entropy(o.rotation_coarse, codebook(1).assign(a.rotation));
  terms.rotation_fine = ad::mol_nll(o.rotation_fine, a.rotation, K, h, lsm);
  terms.size_coarse = ad::cross_entropy(o.size_coarse, codebook(2).assign(a.size));
  terms.size_fine = ad::mol_nll(o.size_fine, a.size, K, h, lsm);
  const std::array<Var, 7> all = {terms.label,         terms.translation_coarse, terms.translation_fine,
                                  terms.rotation_coarse, terms.rotation_fine,    terms.size_coarse,
                                  terms.size_fine};
  terms.total = ad::sum(ad::concat_cols(all));
  return terms;
}

double PartGenerator::next_part_nll(const Matrix& F, const Part* target) const {
  Tape t(false);
  return decode(t, t.constant(F), target).total.scalar();
}

double PartGenerator::end_probability(const Matrix& F) const {
  Tape t(false);
  const Var logits = label_head_(t, t.constant(F));
  return std::exp(-dist::categorical_nll(row_span(logits.value()), end_label()));
}

std::optional<Part> PartGenerator::sample_next_part(const Matrix& F, dist::Rng& rng,
                                                    const SampleOptions& options) const {
  Tape t(false);
  const Var f = t.constant(F);
  const Matrix label_logits = label_head_(t, f).value();
  std::span<const double> choices = row_span(label_logits);
  if (!options.allow_end) choices = choices.first(static_cast<std::size_t>(end_label()));
  const int label = dist::categorical_sample(choices, rng, options.temperature);
  if (label == end_label()) return std::nullopt;

  const int L = config_.octaves;
  const std::array<int, 1> id = {label};
  const Var lam = ad::gather_rows(t.parameter(*label_table_), id);
  std::vector<Var> inputs = {f, lam};
  std::array<std::vector<double>, 3> values;
  for (int i = 0; i < 3; ++i) {
    const Matrix coarse = coarse_[i](t, head_input(t, inputs)).value();
    const int k = dist::categorical_sample(row_span(coarse), rng, options.temperature);
    std::vector<Var> fin = inputs;
    const std::array<int, 1> kk = {k};
    fin.push_back(ad::gather_rows(t.parameter(*cluster_tables_[i]), kk));
    const Matrix params = fine_[i](t, head_input(t, fin)).value();
    dist::MixtureOfLogistics mol(row_span(params), kAttributeDims[i], config_.mixtures, config_.log_scale_min);
    values[i] = dist::mol_sample(mol, rng);
    if (i < 2) inputs.push_back(t.constant(pe_row(values[i], L)));
  }
  return denormalize(label, values[2], values[0], values[1]);
}

std::vector<double> PartGenerator::condition_vector(std::string_view text) const {
  if (!embedder_) return {};
  return embedder_->embed(text);
}

Part PartGenerator::denormalize(int label, std::span<const double> size, std::span<const double> translation,
                                std::span<const double> rotation) const {
  const AttributeStats& s = context_.stats;
  Part p;
  p.label = label;
  for (int d = 0; d < 3; ++d) {
    p.size[d] = std::max(1e-4, s.part_size.denormalize(d, size[d]));
    p.translation[d] = s.part_translation.denormalize(d, translation[d]);
  }
  Rotation6D r{};
  for (int d = 0; d < 6; ++d) r[d] = s.part_rotation.denormalize(d, rotation[d]);
  try {
    p.rotation = matrix_to_rot6d(rot6d_to_matrix(r));
  } catch (const DegenerateRotation&) {
    p.rotation = identity_rot6d();
  }
  return p;
}

SampledSequence sample_sequence(const PartGenerator& g, const BoundingBox& bbox, std::span<const Part> prefix,
                                std::span<const double> condition, dist::Rng& rng, std::size_t max_parts,
                                const SampleOptions& options) {
  SampledSequence out;
  out.parts.assign(prefix.begin(), prefix.end());
  for (;;) {
    Tape t(false);
    const Matrix F = g.features(t, bbox, out.parts, condition).value();
    std::optional<Part> next = g.sample_next_part(F, rng, options);
    if (!next) return out;
    if (out.parts.size() >= max_parts) {
      out.truncated = true;
      return out;
    }
    out.parts.push_back(*next);
  }
}

}  // namespace partgen
