// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mixer::cli {

/// Process exit codes of the mixer tool.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,   // runtime error or a failed check
  kUsage = 2,     // bad flags, unknown config, missing data, geometry mismatch
  kDiverged = 3,  // non-finite training loss
};

/// Runs the tool with argv-style arguments (args[0] is the program name).
/// Results go to `out` as key=value lines, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mixer::cli
