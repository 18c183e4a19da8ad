// Model persistence: a versioned JSON header (config, adapter registry, seed)
// followed by named parameter blobs as 64-bit little-endian values.
#pragma once

#include <filesystem>

#include "dtrm/dt_model.hpp"

namespace dtrm {

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const DtModel& model);
DtModel load_checkpoint(const std::filesystem::path& path);

}  // namespace dtrm
