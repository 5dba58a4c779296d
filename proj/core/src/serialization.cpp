// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "partgen/dataset.hpp"

namespace partgen {

using nlohmann::json;

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

template <std::size_t N>
void append_array(std::string& out, const std::array<double, N>& a) {
  out += '[';
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ',';
    append_double(out, a[i]);
  }
  out += ']';
}

void append_doubles(std::string& out, std::span<const double> v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    append_double(out, v[i]);
  }
  out += ']';
}

void append_string(std::string& out, const std::string& s) { out += json(s).dump(); }

template <std::size_t N>
std::array<double, N> read_array(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != N) {
    throw std::invalid_argument(std::string("'") + key + "' must be an array of " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number()) throw std::invalid_argument(std::string("'") + key + "' holds a non-number");
    out[i] = v[i].get<double>();
  }
  return out;
}

int label_id(const json& v, const std::vector<std::string>& vocabulary) {
  if (v.is_number_integer()) return v.get<int>();
  const std::string name = v.get<std::string>();
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (vocabulary[i] == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown part label '" + name + "'");
}

void append_range(std::string& out, const char* name, const RangeStats& r) {
  out += "    ";
  append_string(out, name);
  out += ": {\"min\": ";
  append_doubles(out, r.min);
  out += ", \"max\": ";
  append_doubles(out, r.max);
  out += '}';
}

void append_codebook(std::string& out, const char* name, const dist::ClusterCodebook& cb) {
  out += "    ";
  append_string(out, name);
  out += ": {\"dim\": " + std::to_string(cb.dim) + ", \"centers\": ";
  append_doubles(out, cb.centers);
  out += '}';
}

RangeStats read_range(const json& j) {
  RangeStats r;
  r.min = j.at("min").get<std::vector<double>>();
  r.max = j.at("max").get<std::vector<double>>();
  if (r.min.size() != r.max.size()) throw std::invalid_argument("range min/max lengths differ");
  return r;
}

dist::ClusterCodebook read_codebook(const json& j, const std::string& name) {
  dist::ClusterCodebook cb;
  cb.attribute = name;
  cb.dim = j.at("dim").get<int>();
  cb.centers = j.at("centers").get<std::vector<double>>();
  if (cb.dim < 0 || (cb.dim > 0 && cb.centers.size() % static_cast<std::size_t>(cb.dim) != 0)) {
    throw std::invalid_argument("codebook '" + name + "' has a ragged center array");
  }
  return cb;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

std::string record_to_line(const ObjectRecord& r, const std::vector<std::string>& vocabulary) {
  std::string out;
  out.reserve(256 + r.parts.size() * 256);
  out += "{\"id\":";
  append_string(out, r.id);
  out += ",\"category\":";
  append_string(out, std::string(category_name(r.category)));
  out += ",\"bbox\":{\"size\":";
  append_array(out, r.bbox.size);
  out += ",\"translation\":";
  append_array(out, r.bbox.translation);
  out += ",\"rotation6d\":";
  append_array(out, r.bbox.rotation);
  out += "},\"parts\":[";
  for (std::size_t i = 0; i < r.parts.size(); ++i) {
    const Part& p = r.parts[i];
    if (i) out += ',';
    out += "{\"label\":";
    if (p.label >= 0 && static_cast<std::size_t>(p.label) < vocabulary.size()) {
      append_string(out, vocabulary[static_cast<std::size_t>(p.label)]);
    } else {
      out += std::to_string(p.label);
    }
    out += ",\"size\":";
    append_array(out, p.size);
    out += ",\"translation\":";
    append_array(out, p.translation);
    out += ",\"rotation6d\":";
    append_array(out, p.rotation);
    out += '}';
  }
  out += "],\"description\":";
  append_string(out, r.description);
  if (r.truncated) out += ",\"truncated\":true";
  out += '}';
  return out;
}

ObjectRecord record_from_line(std::string_view line, const std::vector<std::string>& vocabulary) {
  const json j = json::parse(line);
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  ObjectRecord r;
  r.id = j.at("id").get<std::string>();
  r.category = parse_category(j.at("category").get<std::string>());
  const json& b = j.at("bbox");
  r.bbox.size = read_array<3>(b, "size");
  r.bbox.translation = read_array<3>(b, "translation");
  r.bbox.rotation = read_array<6>(b, "rotation6d");
  for (const json& pj : j.at("parts")) {
    Part p;
    p.label = label_id(pj.at("label"), vocabulary);
    p.size = read_array<3>(pj, "size");
    p.translation = read_array<3>(pj, "translation");
    p.rotation = read_array<6>(pj, "rotation6d");
    r.parts.push_back(p);
  }
  r.description = j.value("description", std::string{});
  r.truncated = j.value("truncated", false);
  return r;
}

void write_records(const std::filesystem::path& file, std::span<const ObjectRecord> records,
                   const std::vector<std::string>& vocabulary) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const ObjectRecord& r : records) out << record_to_line(r, vocabulary) << '\n';
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

std::vector<ObjectRecord> read_records(const std::filesystem::path& file, const std::vector<std::string>& vocabulary,
                                       bool strict) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<ObjectRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ObjectRecord r = record_from_line(line, vocabulary);
      if (strict) {
        validate_record(r, static_cast<int>(vocabulary.size()));
      } else {
        for (const Part& p : r.parts) validate_part(p, static_cast<int>(vocabulary.size()) - 1);
      }
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(file.string(), line_no, e.what());
    }
  }
  return out;
}

std::string manifest_to_string(const DatasetManifest& m) {
  std::string out;
  out += "{\n  \"format\": \"partgen-manifest\",\n  \"version\": " + std::to_string(m.version) + ",\n";
  out += "  \"seed\": " + std::to_string(m.seed) + ",\n  \"vocabulary\": [";
  for (std::size_t i = 0; i < m.vocabulary.size(); ++i) {
    if (i) out += ", ";
    append_string(out, m.vocabulary[i]);
  }
  out += "],\n  \"splits\": {";
  bool first = true;
  for (const auto& [name, ids] : m.splits) {
    out += first ? "\n    " : ",\n    ";
    first = false;
    append_string(out, name);
    out += ": [";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ", ";
      append_string(out, ids[i]);
    }
    out += ']';
  }
  out += "\n  },\n  \"stats\": {\n";
  append_range(out, "part_size", m.stats.part_size);
  out += ",\n";
  append_range(out, "part_translation", m.stats.part_translation);
  out += ",\n";
  append_range(out, "part_rotation", m.stats.part_rotation);
  out += ",\n";
  append_range(out, "bbox_size", m.stats.bbox_size);
  out += ",\n";
  append_range(out, "bbox_translation", m.stats.bbox_translation);
  out += "\n  },\n  \"codebooks\": {\n";
  append_codebook(out, "translation", m.codebooks.translation);
  out += ",\n";
  append_codebook(out, "rotation", m.codebooks.rotation);
  out += ",\n";
  append_codebook(out, "size", m.codebooks.size);
  out += "\n  }\n}\n";
  return out;
}

DatasetManifest manifest_from_string(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // count newlines up to the failing byte to report a line number
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ParseError(source, line, e.what());
  }
  try {
    if (j.value("format", std::string{}) != "partgen-manifest") throw std::invalid_argument("not a partgen manifest");
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw std::invalid_argument("manifest version " + std::to_string(m.version) + " is not supported (expected " +
                                  std::to_string(kManifestVersion) + ")");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    if (m.vocabulary.empty() || m.vocabulary.back() != "end") {
      throw std::invalid_argument("vocabulary must end with the reserved 'end' label");
    }
    for (const auto& [name, ids] : j.at("splits").items()) m.splits[name] = ids.get<std::vector<std::string>>();
    const json& s = j.at("stats");
    m.stats.part_size = read_range(s.at("part_size"));
    m.stats.part_translation = read_range(s.at("part_translation"));
    m.stats.part_rotation = read_range(s.at("part_rotation"));
    m.stats.bbox_size = read_range(s.at("bbox_size"));
    m.stats.bbox_translation = read_range(s.at("bbox_translation"));
    const json& c = j.at("codebooks");
    m.codebooks.translation = read_codebook(c.at("translation"), "translation");
    m.codebooks.rotation = read_codebook(c.at("rotation"), "rotation");
    m.codebooks.size = read_codebook(c.at("size"), "size");
    return m;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(source, 0, e.what());
  }
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  write_records(dir / kRecordsFile, ds.records, ds.manifest.vocabulary);
  std::ofstream out(dir / kManifestFile, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / kManifestFile).string());
  out << manifest_to_string(ds.manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = manifest_from_string(read_file(dir / kManifestFile), (dir / kManifestFile).string());
  ds.records = read_records(dir / kRecordsFile, ds.manifest.vocabulary);
  std::set<std::string> ids;
  for (const ObjectRecord& r : ds.records) {
    if (!ids.insert(r.id).second) throw std::runtime_error("duplicate record id " + r.id);
  }
  std::set<std::string> seen;
  for (const auto& [name, split_ids] : ds.manifest.splits) {
    for (const std::string& id : split_ids) {
      if (!ids.contains(id)) throw std::runtime_error("split '" + name + "' references missing record " + id);
      if (!seen.insert(id).second) throw std::runtime_error("record " + id + " appears in more than one split");
    }
  }
  return ds;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t manifest_hash(const DatasetManifest& m) { return fnv1a64(manifest_to_string(m)); }

}  // namespace partgen
