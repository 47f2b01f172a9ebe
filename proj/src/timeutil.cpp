#include "traffic/timeutil.hpp"

#include <cstdio>

#include "traffic/errors.hpp"

namespace traffic {

namespace {

// days since 1970-01-01 for a civil date (Howard Hinnant's algorithm)
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

bool is_leap(std::int64_t y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

unsigned days_in_month(std::int64_t y, unsigned m) {
    static const unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lengths[m - 1];
}

int digit(char c) { return c >= '0' && c <= '9' ? c - '0' : -1; }

std::int64_t parse_fixed(const std::string& s, std::size_t pos, std::size_t len, const std::string& whole) {
    std::int64_t v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        const int d = digit(s[i]);
        if (d < 0) throw ValidationError("bad timestamp '" + whole + "': expected YYYY-MM-DDTHH:MM");
        v = v * 10 + d;
    }
    return v;
}

}  // namespace

std::int64_t parse_minutes(const std::string& iso) {
    if (iso.size() != 16 || iso[4] != '-' || iso[7] != '-' || iso[10] != 'T' || iso[13] != ':') {
        throw ValidationError("bad timestamp '" + iso + "': expected YYYY-MM-DDTHH:MM");
    }
    const std::int64_t year = parse_fixed(iso, 0, 4, iso);
    const std::int64_t month = parse_fixed(iso, 5, 2, iso);
    const std::int64_t day = parse_fixed(iso, 8, 2, iso);
    const std::int64_t hour = parse_fixed(iso, 11, 2, iso);
    const std::int64_t minute = parse_fixed(iso, 14, 2, iso);
    if (month < 1 || month > 12) throw ValidationError("bad timestamp '" + iso + "': month out of range");
    if (day < 1 || day > days_in_month(year, static_cast<unsigned>(month))) {
        throw ValidationError("bad timestamp '" + iso + "': day out of range");
    }
    if (hour > 23) throw ValidationError("bad timestamp '" + iso + "': hour out of range");
    if (minute > 59) throw ValidationError("bad timestamp '" + iso + "': minute out of range");
    return (days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 24 + hour) * 60 +
           minute;
}

std::string format_minutes(std::int64_t minutes) {
    std::int64_t days = minutes / (24 * 60);
    std::int64_t rem = minutes % (24 * 60);
    if (rem < 0) {
        rem += 24 * 60;
        --days;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld", static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 60), static_cast<long long>(rem % 60));
    return buf;
}

int weekday_of(std::int64_t minutes) {
    std::int64_t days = minutes / (24 * 60);
    if (minutes % (24 * 60) < 0) --days;
    // 1970-01-01 was a Thursday (index 3 counting Monday as 0)
    const std::int64_t w = (days + 3) % 7;
    return static_cast<int>(w < 0 ? w + 7 : w);
}

std::int64_t minute_of_day(std::int64_t minutes) {
    const std::int64_t rem = minutes % (24 * 60);
    return rem < 0 ? rem + 24 * 60 : rem;
}

}  // namespace traffic
