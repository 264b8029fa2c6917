// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "cobra/model.hpp"

namespace cobra {

// Checkpoint layout, all little-endian:
//   magic "CBRA" | u32 version | u32 config text length | key=value lines |
//   u32 block count | blocks: u32 name len, name, u32 rank, u32 dims[rank],
//   row-major f64 data.
// Round-trips are bit-exact.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::map<std::string, std::string> config_record(const ModelConfig& cfg, Variant variant);
ModelConfig config_from_record(const std::map<std::string, std::string>& rec);
Variant variant_from_record(const std::map<std::string, std::string>& rec);

void save_checkpoint(const std::string& path, const Model& model);

/// Rebuilds the model from the embedded config record and fills every
/// parameter by name. Missing/extra/mis-shaped blocks raise
/// CheckpointMismatchError.
Model load_checkpoint(const std::string& path);

}  // namespace cobra
