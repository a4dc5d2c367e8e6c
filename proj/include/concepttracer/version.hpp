#pragma once

namespace concepttracer {
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSchemaVersion = "1";
}  // namespace concepttracer
