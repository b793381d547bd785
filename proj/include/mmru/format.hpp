#pragma once

#include <cstdio>
#include <string>

namespace mmru {

// Decimal text with 12 significant digits, as used by every CSV export.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace mmru
