#include "ridecast/timeutil.hpp"

#include <cstdio>

namespace ridecast {

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

std::int64_t parse_iso_minutes(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &se);
    require(n == 5 || n == 6, "timestamp must be ISO 8601 (YYYY-MM-DDTHH:MM[:SS]): " + s);
    require(mo >= 1 && mo <= 12 && d >= 1 && d <= 31, "timestamp has an invalid date: " + s);
    require(h >= 0 && h < 24 && mi >= 0 && mi < 60, "timestamp has an invalid time: " + s);
    require(se == 0, "timestamp seconds must be 00: " + s);
    return days_from_civil(y, mo, d) * kMinutesPerDay + h * 60 + mi;
}

std::string format_iso_minutes(std::int64_t minutes) {
    std::int64_t days = minutes / kMinutesPerDay;
    std::int64_t rem = minutes % kMinutesPerDay;
    if (rem < 0) {
        rem += kMinutesPerDay;
        days -= 1;
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:00", y, m, d,
                  static_cast<int>(rem / 60), static_cast<int>(rem % 60));
    return std::string(buf);
}

int weekday_of(std::int64_t minutes) {
    std::int64_t days = minutes / kMinutesPerDay;
    if (minutes % kMinutesPerDay < 0) days -= 1;
    return static_cast<int>(((days + 3) % 7 + 7) % 7); // 1970-01-01 was a Thursday
}

int hour_of(std::int64_t minutes) {
    std::int64_t rem = minutes % kMinutesPerDay;
    if (rem < 0) rem += kMinutesPerDay;
    return static_cast<int>(rem / 60);
}

int slot_of_day(std::int64_t minutes) {
    std::int64_t rem = minutes % kMinutesPerDay;
    if (rem < 0) rem += kMinutesPerDay;
    return static_cast<int>(rem / kStepMinutes);
}

} // namespace ridecast
