// Copyright 2026 The partgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace partgen::cli {

/// Exit statuses of the partgen tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
/// evaluate: the report was written but some items could not be scored.
inline constexpr int kExitPartial = 3;

/// Environment variable naming the default root of command outputs.
inline constexpr const char* kOutputRootEnv = "PARTGEN_OUTPUT_ROOT";

/// Runs the tool on `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace partgen::cli
