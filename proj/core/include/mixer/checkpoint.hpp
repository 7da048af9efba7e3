// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "mixer/train.hpp"

namespace mixer {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Layout: an 8-byte little-endian header length, a JSON header
/// {schema_version, config, tensors: [{name, dtype, shape, byte_offset}],
/// train_state}, then the little-endian f32 blobs in header order. Parameters
/// come first in canonical order, followed by "opt/m/<name>" and
/// "opt/v/<name>" optimizer tensors. Output depends only on the checkpoint
/// contents, so equal checkpoints serialize to equal bytes.
std::string save_checkpoint_bytes(const Checkpoint& ckpt);

/// Throws FormatError on a malformed header, non-contiguous offsets, a body
/// of the wrong length or tensors that do not match the config.
Checkpoint load_checkpoint_bytes(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mixer
