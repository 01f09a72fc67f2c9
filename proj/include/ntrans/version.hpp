#pragma once

namespace ntrans {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ntrans
