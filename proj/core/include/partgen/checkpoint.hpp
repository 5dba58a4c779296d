// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint container shared by the generator and the blender:
//
//   8 bytes   magic "PARTGENC"
//   u32       container version
//   u64       header length, then that many bytes of JSON text
//   u64       parameter count, then that many little-endian float64
//   u64       optimizer state count, then that many float64
//
// Model-specific content lives in the JSON header.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace partgen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Resuming against a dataset whose manifest hash differs from the one the
/// checkpoint was trained on.
class ManifestMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training loss became NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointFile {
  std::string header;
  std::vector<double> parameters;
  std::vector<double> optimizer;
};

/// Writes to a temporary sibling and renames it into place.
void write_checkpoint_file(const std::filesystem::path& file, const CheckpointFile& ckpt);
/// Throws CheckpointError on a bad magic, version or truncated payload.
CheckpointFile read_checkpoint_file(const std::filesystem::path& file);

}  // namespace partgen
