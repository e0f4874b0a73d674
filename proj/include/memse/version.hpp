#pragma once

namespace memse {

inline constexpr const char* kEngineName = "memse";
inline constexpr const char* kEngineVersion = "0.3.0";

}  // namespace memse
