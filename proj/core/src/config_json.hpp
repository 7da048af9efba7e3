// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "mixer/config.hpp"

namespace mixer {

nlohmann::json config_to_json_value(const MixerConfig& config);
MixerConfig config_from_json_value(const nlohmann::json& j);

}  // namespace mixer
