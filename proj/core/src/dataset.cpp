// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <unordered_map>

namespace partgen {

namespace {

using dist::uniform01;
double uniform(Rng& rng, const std::array<double, 2>& range) {
  return range[0] + (range[1] - range[0]) * uniform01(rng);
}
double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
bool coin(Rng& rng, double p) { return uniform01(rng) < p; }

Part box(int label, double sx, double sy, double sz, double tx, double ty, double tz) {
  Part p;
  p.label = label;
  p.size = {sx, sy, sz};
  p.translation = {tx, ty, tz};
  return p;
}

// Exact rotation by quarter_turns * 90 degrees about +y.
Mat3 yaw_quarter_turns(int quarter_turns) {
  static constexpr int kCos[4] = {1, 0, -1, 0};
  static constexpr int kSin[4] = {0, 1, 0, -1};
  const int q = ((quarter_turns % 4) + 4) % 4;
  Mat3 m;
  m << kCos[q], 0, kSin[q], 0, 1, 0, -kSin[q], 0, kCos[q];
  return m;
}

void append_chair(std::vector<Part>& parts, Rng& rng, const StyleParams& s) {
  const double seat_h = uniform(rng, s.chair_seat_height);
  const double w = uniform(rng, s.chair_seat_width);
  const double d = uniform(rng, s.chair_seat_depth);
  const double seat_t = uniform(rng, 0.04, 0.07);
  const double leg_t = uniform(rng, 0.03, 0.05);
  const double back_h = uniform(rng, s.chair_back_height);
  const double back_t = uniform(rng, 0.03, 0.05);
  const double leg_h = seat_h - seat_t;

  parts.push_back(box(labels::kSeat, w, seat_t, d, 0, seat_h - 0.5 * seat_t, 0));
  parts.push_back(box(labels::kBack, w, back_h, back_t, 0, seat_h + 0.5 * back_h, -0.5 * d + 0.5 * back_t));
  const double lx = 0.5 * w - 0.5 * leg_t;
  const double lz = 0.5 * d - 0.5 * leg_t;
  for (double sx : {-1.0, 1.0}) {
    for (double sz : {-1.0, 1.0}) parts.push_back(box(labels::kLeg, leg_t, leg_h, leg_t, sx * lx, 0.5 * leg_h, sz * lz));
  }

  const int stretchers = kChairStretcherChoices[dist::uniform_index(rng, kChairStretcherChoices.size())];
  const double st = 0.6 * leg_t;
  const double sy = uniform(rng, 0.15, 0.35) * leg_h;
  const double inner_w = w - 2.0 * leg_t;
  const double inner_d = d - 2.0 * leg_t;
  if (stretchers == 1) {
    parts.push_back(box(labels::kStretcher, inner_w, st, st, 0, sy, 0));
  } else {
    for (double sx : {-1.0, 1.0}) parts.push_back(box(labels::kStretcher, st, st, inner_d, sx * lx, sy, 0));
    if (stretchers == 4) {
      for (double sz : {-1.0, 1.0}) parts.push_back(box(labels::kStretcher, inner_w, st, st, 0, sy, sz * lz));
    }
  }

  if (coin(rng, s.chair_arms)) {
    const double arm_t = uniform(rng, 0.03, 0.06);
    const double arm_h = uniform(rng, 0.18, 0.26);
    const double arm_d = (d - back_t) * uniform(rng, 0.7, 1.0);
    const double arm_z = -0.5 * d + back_t + 0.5 * arm_d;
    for (double sx : {-1.0, 1.0}) {
      parts.push_back(box(labels::kArm, arm_t, 0.03, arm_d, sx * (0.5 * w - 0.5 * arm_t), seat_h + arm_h, arm_z));
    }
  }
}

void append_table(std::vector<Part>& parts, Rng& rng, const StyleParams& s) {
  const double h = uniform(rng, s.table_height);
  const double w = uniform(rng, s.table_width);
  const double d = std::min(uniform(rng, s.table_depth), w);
  const double top_t = uniform(rng, 0.03, 0.06);
  const double under = h - top_t;

  parts.push_back(box(labels::kTop, w, top_t, d, 0, h - 0.5 * top_t, 0));
  const bool pedestal = coin(rng, s.table_pedestal);
  const bool stretchers = coin(rng, s.table_stretchers);
  const bool drawer = coin(rng, s.table_drawer);
  if (pedestal) {
    const double base_t = uniform(rng, 0.03, 0.05);
    const double base_w = uniform(rng, 0.35, 0.6) * std::min(w, d) * 1.2;
    const double col = uniform(rng, 0.08, 0.16);
    parts.push_back(box(labels::kPedestal, col, under - base_t, col, 0, base_t + 0.5 * (under - base_t), 0));
    parts.push_back(box(labels::kBase, base_w, base_t, base_w, 0, 0.5 * base_t, 0));
  } else {
    const double leg_t = uniform(rng, 0.04, 0.08);
    const double inset = uniform(rng, 0.0, 0.05);
    const double lx = 0.5 * w - 0.5 * leg_t - inset;
    const double lz = 0.5 * d - 0.5 * leg_t - inset;
    for (double sx : {-1.0, 1.0}) {
      for (double sz : {-1.0, 1.0}) parts.push_back(box(labels::kLeg, leg_t, under, leg_t, sx * lx, 0.5 * under, sz * lz));
    }
    if (stretchers) {
      const double st = 0.5 * leg_t;
      const double sy = uniform(rng, 0.15, 0.3) * under;
      for (double sz : {-1.0, 1.0}) parts.push_back(box(labels::kStretcher, 2.0 * lx - leg_t, st, st, 0, sy, sz * lz));
    }
  }
  if (drawer) {
    const double dh = std::min(0.12, 0.3 * under);
    parts.push_back(box(labels::kDrawer, 0.4 * w, dh, 0.8 * d, 0, under - 0.5 * dh, 0));
  }
}

void append_lamp(std::vector<Part>& parts, Rng& rng, const StyleParams& s) {
  const double height = uniform(rng, s.lamp_height);
  const double base_w = uniform(rng, 0.15, 0.3);
  const double base_t = uniform(rng, 0.02, 0.05);
  const double pole_t = uniform(rng, 0.02, 0.04);
  const double shade_w = uniform(rng, 0.15, 0.4);
  const double shade_h = uniform(rng, 0.12, 0.25);

  parts.push_back(box(labels::kBase, base_w, base_t, base_w, 0, 0.5 * base_t, 0));
  if (coin(rng, s.lamp_arm)) {
    const double pole_top = height - 0.3 * shade_h;
    const double arm_len = uniform(rng, 0.2, 0.45);
    const double arm_t = 0.8 * pole_t;
    const double tilt = uniform(rng, -1.0, 1.0) * s.max_lamp_arm_tilt_degrees * std::numbers::pi / 180.0;
    parts.push_back(box(labels::kPole, pole_t, pole_top - base_t, pole_t, 0, base_t + 0.5 * (pole_top - base_t), 0));
    // The arm leaves the pole top along +x, tilted about z.
    const Mat3 r = axis_angle(Vec3::UnitZ(), tilt);
    const Vec3 pivot(0.0, pole_top, 0.0);
    const Vec3 center = pivot + r * Vec3(0.5 * arm_len, 0, 0);
    const Vec3 tip = pivot + r * Vec3(arm_len, 0, 0);
    Part arm = box(labels::kArm, arm_len, arm_t, arm_t, center.x(), center.y(), center.z());
    arm.rotation = matrix_to_rot6d(r);
    parts.push_back(arm);
    parts.push_back(box(labels::kShade, shade_w, shade_h, shade_w, tip.x(), tip.y() - 0.5 * shade_h, 0));
  } else {
    const double pole_top = height - shade_h;
    parts.push_back(box(labels::kPole, pole_t, pole_top - base_t, pole_t, 0, base_t + 0.5 * (pole_top - base_t), 0));
    parts.push_back(box(labels::kShade, shade_w, shade_h, shade_w, 0, pole_top + 0.5 * shade_h, 0));
  }
}

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kChair: return "chair";
    case Category::kTable: return "table";
    case Category::kLamp: return "lamp";
  }
  return "unknown";
}

Category parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown category '" + std::string(name) + "' (expected chair, table or lamp)");
}

const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> vocab = {"seat",   "back",     "leg",  "arm",    "stretcher", "top",
                                                 "pedestal", "base", "drawer", "pole",      "shade", "end"};
  return vocab;
}

void validate_record(const ObjectRecord& r, int num_labels, std::size_t max_parts) {
  if (r.parts.empty() || r.parts.size() > max_parts) {
    throw std::invalid_argument("record " + r.id + ": part count " + std::to_string(r.parts.size()) +
                                " outside [1, " + std::to_string(max_parts) + "]");
  }
  Part bbox_as_part;
  bbox_as_part.size = r.bbox.size;
  bbox_as_part.translation = r.bbox.translation;
  bbox_as_part.rotation = r.bbox.rotation;
  validate_part(bbox_as_part, 1);
  const CuboidFrame frame(bbox_as_part);
  for (const Part& p : r.parts) {
    // END is a sequence marker, never a stored part.
    validate_part(p, num_labels - 1);
    for (const Vec3& c : corners(p)) {
      const Vec3 local = frame.to_local(c);
      for (int k = 0; k < 3; ++k) {
        if (std::abs(local[k]) > frame.half_size[k] + 1e-6) {
          throw std::invalid_argument("record " + r.id + ": part corner outside the bounding box");
        }
      }
    }
  }
}

BoundingBox tight_bbox(std::span<const Part> parts, double inflate) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Part& p : parts) {
    for (const Vec3& c : corners(p)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  BoundingBox b;
  b.size = to_array((hi - lo) * (1.0 + inflate));
  b.translation = to_array(0.5 * (hi + lo));
  return b;
}

ObjectRecord generate_object(Category category, Rng& rng, const StyleParams& style) {
  ObjectRecord r;
  r.category = category;
  switch (category) {
    case Category::kChair: append_chair(r.parts, rng, style); break;
    case Category::kTable: append_table(r.parts, rng, style); break;
    case Category::kLamp: append_lamp(r.parts, rng, style); break;
  }
  if (coin(rng, style.global_yaw)) {
    const int turns = 1 + static_cast<int>(dist::uniform_index(rng, 3));
    const Mat3 yaw = yaw_quarter_turns(turns);
    for (Part& p : r.parts) {
      p.translation = to_array(yaw * to_vec(p.translation));
      p.rotation = matrix_to_rot6d(yaw * rot6d_to_matrix(p.rotation));
    }
  }
  r.bbox = tight_bbox(r.parts);
  r.description = text_description(r);
  return r;
}

std::string number_word(std::size_t n) {
  static const char* kWords[] = {"zero", "one", "two",   "three",  "four",    "five",    "six",
                                 "seven", "eight", "nine", "ten",    "eleven",  "twelve",  "thirteen",
                                 "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};
  if (n < std::size(kWords)) return kWords[n];
  return std::to_string(n);
}

std::string text_description(const ObjectRecord& r, const std::vector<std::string>& vocabulary) {
  std::map<int, std::size_t> counts;
  for (const Part& p : r.parts) ++counts[p.label];
  std::vector<std::string> groups;
  for (const auto& [label, count] : counts) {
    const std::string name = label >= 0 && static_cast<std::size_t>(label) < vocabulary.size()
                                 ? vocabulary[static_cast<std::size_t>(label)]
                                 : std::to_string(label);
    groups.push_back(number_word(count) + " " + name);
  }
  std::string out = "A " + std::string(category_name(r.category)) + " with ";
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i > 0) out += (i + 1 == groups.size()) ? ", and " : ", ";
    out += groups[i];
  }
  return out;
}

// ---- normalization / occupancy ----------------------------------------------------

Normalization Normalization::from_bbox(const BoundingBox& b) {
  Normalization n;
  n.center = to_vec(b.translation);
  n.rotation = rot6d_to_matrix(b.rotation);
  n.scale = 2.0 / std::max({b.size[0], b.size[1], b.size[2]});
  return n;
}

Part Normalization::apply(const Part& p) const {
  Part out = p;
  out.translation = to_array(apply(to_vec(p.translation)));
  for (double& s : out.size) s *= scale;
  out.rotation = matrix_to_rot6d(rotation.transpose() * rot6d_to_matrix(p.rotation));
  return out;
}

OccupancySet make_occupancy_pairs(const ObjectRecord& r, Rng& rng, const OccupancyOptions& options) {
  const Normalization norm = Normalization::from_bbox(r.bbox);
  std::vector<Part> parts;
  parts.reserve(r.parts.size());
  for (const Part& p : r.parts) parts.push_back(norm.apply(p));
  std::vector<CuboidFrame> frames(parts.begin(), parts.end());

  OccupancySet set;
  set.uniform_count = options.uniform;
  set.points.reserve(options.uniform + options.surface);
  for (std::size_t i = 0; i < options.uniform; ++i) {
    const double x = uniform(rng, -1.0, 1.0);
    const double y = uniform(rng, -1.0, 1.0);
    const double z = uniform(rng, -1.0, 1.0);
    set.points.emplace_back(x, y, z);
  }
  if (options.surface > 0) {
    for (const SurfaceSample& s : sample_union_surface(parts, options.surface, rng)) set.points.push_back(s.point);
  }

  set.labels.resize(set.points.size());
  std::size_t inside = 0;
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    // Surface points lie on the boundary, which counts as inside; testing them
    // again would let rounding in the frame transform flip a few labels.
    const bool in = i >= set.uniform_count ||
                    std::any_of(frames.begin(), frames.end(), [&](const CuboidFrame& f) { return f.contains(set.points[i]); });
    set.labels[i] = in ? 1 : 0;
    inside += in ? 1 : 0;
  }
  const double n = static_cast<double>(set.points.size());
  set.inside_fraction = n > 0 ? static_cast<double>(inside) / n : 0.0;
  const bool balanced = inside > 0 && inside < set.points.size();
  const double w_in = balanced ? set.inside_fraction / 0.5 : 1.0;
  const double w_out = balanced ? (1.0 - set.inside_fraction) / 0.5 : 1.0;
  set.weights.resize(set.points.size());
  for (std::size_t i = 0; i < set.points.size(); ++i) set.weights[i] = set.labels[i] ? w_in : w_out;
  return set;
}

std::vector<std::size_t> sample_balanced(const OccupancySet& set, std::size_t n, Rng& rng) {
  std::vector<std::size_t> in, out;
  for (std::size_t i = 0; i < set.labels.size(); ++i) (set.labels[i] ? in : out).push_back(i);
  if (in.empty() && out.empty()) throw std::invalid_argument("sample_balanced: empty occupancy set");
  std::vector<std::size_t> picks(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool take_in = in.empty() ? false : out.empty() ? true : coin(rng, 0.5);
    const auto& pool = take_in ? in : out;
    picks[i] = pool[dist::uniform_index(rng, pool.size())];
  }
  return picks;
}

// ---- stats ---------------------------------------------------------------------------

double RangeStats::normalize(int d, double v) const {
  return 2.0 * (v - min[static_cast<std::size_t>(d)]) / (max[static_cast<std::size_t>(d)] - min[static_cast<std::size_t>(d)]) - 1.0;
}

double RangeStats::denormalize(int d, double v) const {
  return min[static_cast<std::size_t>(d)] + 0.5 * (v + 1.0) * (max[static_cast<std::size_t>(d)] - min[static_cast<std::size_t>(d)]);
}

RangeStats RangeStats::fit(std::span<const double> values, int dim) {
  RangeStats s;
  s.min.assign(static_cast<std::size_t>(dim), std::numeric_limits<double>::infinity());
  s.max.assign(static_cast<std::size_t>(dim), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t d = i % static_cast<std::size_t>(dim);
    s.min[d] = std::min(s.min[d], values[i]);
    s.max[d] = std::max(s.max[d], values[i]);
  }
  for (std::size_t d = 0; d < static_cast<std::size_t>(dim); ++d) {
    if (!std::isfinite(s.min[d])) {
      s.min[d] = -1.0;
      s.max[d] = 1.0;
    } else if (s.max[d] - s.min[d] < 1e-9) {
      // constant attribute: keep it at the center of the range
      s.min[d] -= 1.0;
      s.max[d] += 1.0;
    }
  }
  return s;
}

NormalizedAttributes normalize_part(const AttributeStats& s, const Part& p) {
  NormalizedAttributes a;
  for (int d = 0; d < 3; ++d) {
    a.size[d] = s.part_size.normalize(d, p.size[d]);
    a.translation[d] = s.part_translation.normalize(d, p.translation[d]);
  }
  for (int d = 0; d < 6; ++d) a.rotation[d] = s.part_rotation.normalize(d, p.rotation[d]);
  return a;
}

NormalizedAttributes normalize_bbox(const AttributeStats& s, const BoundingBox& b) {
  NormalizedAttributes a;
  for (int d = 0; d < 3; ++d) {
    a.size[d] = s.bbox_size.normalize(d, b.size[d]);
    a.translation[d] = s.bbox_translation.normalize(d, b.translation[d]);
  }
  a.rotation = b.rotation;
  return a;
}

std::vector<const ObjectRecord*> Dataset::split(const std::string& name) const {
  const auto it = manifest.splits.find(name);
  if (it == manifest.splits.end()) throw std::invalid_argument("unknown split '" + name + "'");
  std::unordered_map<std::string, const ObjectRecord*> by_id;
  for (const ObjectRecord& r : records) by_id.emplace(r.id, &r);
  std::vector<const ObjectRecord*> out;
  out.reserve(it->second.size());
  for (const std::string& id : it->second) {
    const auto f = by_id.find(id);
    if (f == by_id.end()) throw std::runtime_error("split '" + name + "' references missing record " + id);
    out.push_back(f->second);
  }
  return out;
}

const ObjectRecord* Dataset::find(const std::string& id) const {
  for (const ObjectRecord& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void fit_manifest_statistics(Dataset& ds, const dist::KMeansOptions& kmeans, std::uint64_t seed) {
  std::vector<double> sizes, translations, rotations, bsizes, btrans;
  for (const ObjectRecord* r : ds.split("train")) {
    for (const Part& p : r->parts) {
      sizes.insert(sizes.end(), p.size.begin(), p.size.end());
      translations.insert(translations.end(), p.translation.begin(), p.translation.end());
      rotations.insert(rotations.end(), p.rotation.begin(), p.rotation.end());
    }
    bsizes.insert(bsizes.end(), r->bbox.size.begin(), r->bbox.size.end());
    btrans.insert(btrans.end(), r->bbox.translation.begin(), r->bbox.translation.end());
  }
  AttributeStats& s = ds.manifest.stats;
  s.part_size = RangeStats::fit(sizes, 3);
  s.part_translation = RangeStats::fit(translations, 3);
  s.part_rotation = RangeStats::fit(rotations, 6);
  s.bbox_size = RangeStats::fit(bsizes, 3);
  s.bbox_translation = RangeStats::fit(btrans, 3);

  auto normalized = [](const std::vector<double>& raw, const RangeStats& st) {
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = st.normalize(static_cast<int>(i % st.min.size()), raw[i]);
    return out;
  };
  const std::size_t rows = sizes.size() / 3;
  dist::KMeansOptions opts = kmeans;
  if (rows < static_cast<std::size_t>(opts.clusters)) opts.clusters = static_cast<int>(std::max<std::size_t>(rows, 1));
  if (rows == 0) {
    ds.manifest.codebooks = {};
    return;
  }
  Rng rng(mix_seed(seed, 0x6b6d65616e73ULL));
  ds.manifest.codebooks.translation =
      dist::fit_kmeans(normalized(translations, s.part_translation), 3, opts, rng, "translation").codebook;
  ds.manifest.codebooks.rotation =
      dist::fit_kmeans(normalized(rotations, s.part_rotation), 6, opts, rng, "rotation").codebook;
  ds.manifest.codebooks.size = dist::fit_kmeans(normalized(sizes, s.part_size), 3, opts, rng, "size").codebook;
}

Dataset make_dataset(const DatasetConfig& config) {
  Dataset ds;
  ds.manifest.seed = config.seed;
  ds.manifest.vocabulary = default_vocabulary();
  const std::array<std::pair<const char*, std::size_t>, 3> splits = {
      {{"train", config.train_per_category}, {"val", config.val_per_category}, {"test", config.test_per_category}}};
  for (const auto& [split, count] : splits) ds.manifest.splits[split];
  for (Category c : config.categories) {
    for (std::size_t s = 0; s < splits.size(); ++s) {
      const auto& [split, count] = splits[s];
      for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t salt = (static_cast<std::uint64_t>(c) << 40) ^ (static_cast<std::uint64_t>(s) << 32) ^ i;
        Rng rng(mix_seed(config.seed, salt));
        ObjectRecord r = generate_object(c, rng, config.style);
        char id[64];
        std::snprintf(id, sizeof id, "%s-%s-%05zu", std::string(category_name(c)).c_str(), split, i);
        r.id = id;
        ds.manifest.splits[split].push_back(r.id);
        ds.records.push_back(std::move(r));
      }
    }
  }
  fit_manifest_statistics(ds, config.kmeans, config.seed);
  return ds;
}

}  // namespace partgen
