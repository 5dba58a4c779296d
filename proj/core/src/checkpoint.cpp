// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "partgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace partgen {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'R', 'T', 'G', 'E', 'N', 'C'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& file) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError(file + ": truncated checkpoint");
  return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in, const std::string& file) {
  const auto n = get<std::uint64_t>(in, file);
  if (n > (std::uint64_t{1} << 34)) throw CheckpointError(file + ": implausible array length");
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw CheckpointError(file + ": truncated checkpoint");
  return v;
}

}  // namespace

void write_checkpoint_file(const std::filesystem::path& file, const CheckpointFile& ckpt) {
  std::filesystem::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, ckpt.header.size());
    out.write(ckpt.header.data(), static_cast<std::streamsize>(ckpt.header.size()));
    put_doubles(out, ckpt.parameters);
    put_doubles(out, ckpt.optimizer);
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& file) {
  const std::string name = file.string();
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + name);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError(name + ": not a partgen checkpoint");
  const auto version = get<std::uint32_t>(in, name);
  if (version != kCheckpointVersion) {
    throw CheckpointError(name + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(in, name);
  if (header_len > (std::uint64_t{1} << 30)) throw CheckpointError(name + ": implausible header length");
  CheckpointFile ckpt;
  ckpt.header.resize(header_len);
  in.read(ckpt.header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError(name + ": truncated checkpoint");
  ckpt.parameters = get_doubles(in, name);
  ckpt.optimizer = get_doubles(in, name);
  return ckpt;
}

}  // namespace partgen
