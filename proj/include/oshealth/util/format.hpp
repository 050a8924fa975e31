#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <system_error>

#include "oshealth/error.hpp"

namespace oshealth::util {

/// Shortest round-trip decimal form; identical output on every run.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

/// Fixed three-decimal form used in human-readable tables.
inline std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::optional<double> parse_optional_double(const std::string& cell) {
  std::size_t b = cell.find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  std::size_t e = cell.find_last_not_of(" \t\r");
  const char* first = cell.data() + b;
  const char* last = cell.data() + e + 1;
  double v = 0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw ArgumentError("not a number: '" + cell + "'");
  return v;
}

}  // namespace oshealth::util
