#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace qs {

// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

inline constexpr std::int64_t kSecondsPerDay = 86400;

// Accepts integer (or decimal) epoch seconds and RFC-3339 date-times.
// A date-time without a zone designator is read as UTC.
std::optional<Timestamp> parse_timestamp(std::string_view text);

std::string format_rfc3339(Timestamp ts);

Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                         int second = 0);

// Fixed-offset zone. Calendar days, weekdays and periods are evaluated in local time.
struct TimeZone {
  std::int32_t offset_seconds = 0;

  // "UTC", "Z", "+01:00", "-0530", "+2".
  static std::optional<TimeZone> parse(std::string_view text);
  std::string name() const;

  friend bool operator==(const TimeZone&, const TimeZone&) = default;
};

std::int64_t local_day_number(Timestamp ts, TimeZone tz);
int local_hour(Timestamp ts, TimeZone tz);
std::chrono::weekday local_weekday(Timestamp ts, TimeZone tz);

// Whole calendar days between the local days of `from` and `to`.
std::int64_t calendar_days_between(Timestamp from, Timestamp to, TimeZone tz);

struct IsoWeek {
  int year = 0;
  unsigned week = 0;
  friend auto operator<=>(const IsoWeek&, const IsoWeek&) = default;
};

IsoWeek iso_week(Timestamp ts, TimeZone tz);

}  // namespace qs
