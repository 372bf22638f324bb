#pragma once

/// @file format.hpp
/// @brief Number formatting shared by the metrics and config writers.

#include <cstdio>
#include <string>

namespace tampo::format {

/// Shortest %.17g rendering: 17 significant digits round-trip any double.
inline std::string g17(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace tampo::format
