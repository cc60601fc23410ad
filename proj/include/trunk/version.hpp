#pragma once

namespace trunk {

inline constexpr const char* kVersion = "0.1.0";
// Bumped whenever the on-disk tree/checkpoint schema changes.
inline constexpr int kTreeSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;

}  // namespace trunk
