#pragma once

namespace tampo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tampo
