#pragma once

#include <cstdint>
#include <string>

#include "ridecast/common.hpp"

namespace ridecast {

// Timestamps are minutes since 1970-01-01T00:00 (no timezone). The panel grid
// is half-hour aligned, so most values are multiples of 30.

constexpr std::int64_t kMinutesPerDay = 24 * 60;
constexpr std::int64_t kStepMinutes = 30;
constexpr int kStepsPerDay = 48;
constexpr int kStepsPerWeek = 7 * kStepsPerDay;

std::int64_t days_from_civil(int y, int m, int d);
void civil_from_days(std::int64_t z, int& y, int& m, int& d);

// "YYYY-MM-DDTHH:MM" or "YYYY-MM-DDTHH:MM:SS" (seconds must be 00)
std::int64_t parse_iso_minutes(const std::string& s);
std::string format_iso_minutes(std::int64_t minutes);

inline bool half_hour_aligned(std::int64_t minutes) { return minutes % kStepMinutes == 0; }

// Monday = 0 ... Sunday = 6
int weekday_of(std::int64_t minutes);
// hour of day, 0..23
int hour_of(std::int64_t minutes);
// half-hour slot of day, 0..47
int slot_of_day(std::int64_t minutes);

} // namespace ridecast
