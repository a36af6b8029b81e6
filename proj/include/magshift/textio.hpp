#pragma once

#include <cstdio>
#include <string>

namespace magshift {

// Round-trip-exact decimal rendering used by every exported table, so byte
// identity of artifacts follows from value identity.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace magshift
