#pragma once

// Minute-precision civil time. Timestamps are ISO-8601 "YYYY-MM-DDTHH:MM"
// strings externally and int64 minutes since 1970-01-01T00:00 internally.

#include <cstdint>
#include <string>

namespace traffic {

std::int64_t parse_minutes(const std::string& iso);
std::string format_minutes(std::int64_t minutes);

// 0 = Monday ... 6 = Sunday
int weekday_of(std::int64_t minutes);
std::int64_t minute_of_day(std::int64_t minutes);

}  // namespace traffic
