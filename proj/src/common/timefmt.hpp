#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <string>

namespace peakforge {

/// RFC 3339 UTC with millisecond precision, e.g. 2024-08-01T12:34:56.789Z.
inline std::string rfc3339_utc_ms(std::chrono::system_clock::time_point tp) {
  using namespace std::chrono;
  const auto ms = duration_cast<milliseconds>(tp.time_since_epoch());
  const std::time_t secs = static_cast<std::time_t>(ms.count() / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<int>(ms.count() % 1000));
  return buf;
}

inline std::string rfc3339_utc_now_ms() {
  return rfc3339_utc_ms(std::chrono::system_clock::now());
}

}  // namespace peakforge
