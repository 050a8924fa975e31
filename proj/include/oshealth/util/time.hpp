#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "oshealth/error.hpp"

namespace oshealth {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

inline constexpr Timestamp kSecondsPerDay = 86400;

namespace util {

struct ParsedTime {
  Timestamp utc = 0;
  std::optional<int> offset_minutes;  // absent for a bare 'Z' or no zone
};

inline Timestamp from_civil(int y, unsigned mo, unsigned d, int h, int mi, int s) {
  using namespace std::chrono;
  sys_days days{year{y} / month{mo} / day{d}};
  return static_cast<Timestamp>(days.time_since_epoch().count()) * kSecondsPerDay +
         h * 3600 + mi * 60 + s;
}

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fff](Z|±HH:MM|±HHMM)?` and the pre-2015
/// archive spelling `YYYY/MM/DD HH:MM:SS ±HHMM`. Returns nullopt on anything else.
inline std::optional<ParsedTime> parse_timestamp(std::string_view s) {
  int y, mo, d, h, mi, sec;
  int consumed = 0;
  std::string str(s);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2d%*1[T ]%2d:%2d:%2d%n", &y, &mo, &d, &h,
                  &mi, &sec, &consumed) != 6 &&
      std::sscanf(str.c_str(), "%4d/%2d/%2d %2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &sec,
                  &consumed) != 6)
    return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60)
    return std::nullopt;
  std::string_view rest = s.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest.front() == '.') {
    std::size_t i = 1;
    while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
    rest.remove_prefix(i);
  }
  while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  ParsedTime out;
  Timestamp local = from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, sec);
  if (rest.empty() || rest == "Z" || rest == "z") {
    out.utc = local;
    return out;
  }
  if (rest.front() != '+' && rest.front() != '-') return std::nullopt;
  int sign = rest.front() == '-' ? -1 : 1;
  rest.remove_prefix(1);
  std::string digits;
  for (char c : rest) {
    if (c >= '0' && c <= '9') digits.push_back(c);
    else if (c != ':') return std::nullopt;
  }
  if (digits.size() != 4 && digits.size() != 2) return std::nullopt;
  int oh = std::stoi(digits.substr(0, 2));
  int om = digits.size() == 4 ? std::stoi(digits.substr(2, 2)) : 0;
  int offset = sign * (oh * 60 + om);
  if (offset < -720 || offset > 840) return std::nullopt;
  out.offset_minutes = offset;
  out.utc = local - static_cast<Timestamp>(offset) * 60;
  return out;
}

inline Timestamp parse_timestamp_or_throw(std::string_view s) {
  auto t = parse_timestamp(s);
  if (!t) throw ArgumentError("unparseable timestamp '" + std::string(s) + "'");
  return t->utc;
}

inline std::chrono::year_month_day civil(Timestamp t) {
  using namespace std::chrono;
  Timestamp days = t >= 0 ? t / kSecondsPerDay : (t - kSecondsPerDay + 1) / kSecondsPerDay;
  return year_month_day{sys_days{std::chrono::days{days}}};
}

/// ISO-8601 UTC, second resolution: `2022-03-26T00:00:00Z`.
inline std::string format_timestamp(Timestamp t) {
  auto ymd = civil(t);
  Timestamp days = t >= 0 ? t / kSecondsPerDay : (t - kSecondsPerDay + 1) / kSecondsPerDay;
  Timestamp sod = t - days * kSecondsPerDay;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), int(sod / 3600),
                int(sod % 3600 / 60), int(sod % 60));
  return buf;
}

/// `YYYY-MM` of the UTC month containing `t`.
inline std::string month_key(Timestamp t) {
  auto ymd = civil(t);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", int(ymd.year()), unsigned(ymd.month()));
  return buf;
}

}  // namespace util
}  // namespace oshealth
