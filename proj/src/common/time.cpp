#include "qs/time.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace qs {
namespace {

using std::chrono::days;
using std::chrono::sys_days;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  auto res = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return res.ec == std::errc{};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<Timestamp> parse_epoch(std::string_view s) {
  std::size_t i = 0;
  if (s[0] == '-' || s[0] == '+') i = 1;
  if (i >= s.size()) return std::nullopt;
  bool seen_dot = false;
  bool seen_digit = false;
  for (std::size_t k = i; k < s.size(); ++k) {
    if (s[k] == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
    } else if (std::isdigit(static_cast<unsigned char>(s[k]))) {
      seen_digit = true;
    } else {
      return std::nullopt;
    }
  }
  if (!seen_digit) return std::nullopt;
  if (!seen_dot) {
    std::int64_t v = 0;
    auto start = s.data() + (s[0] == '+' ? 1 : 0);
    auto res = std::from_chars(start, s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
  }
  std::string buf(s);
  double v = std::strtod(buf.c_str(), nullptr);
  if (!std::isfinite(v)) return std::nullopt;
  return static_cast<Timestamp>(std::floor(v));
}

std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  // YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+HH:MM|-HH:MM]
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!read_int(s, 0, 4, year) || s.size() < 10 || s[4] != '-' || !read_int(s, 5, 2, month) ||
      s[7] != '-' || !read_int(s, 8, 2, day)) {
    return std::nullopt;
  }
  std::size_t pos = 10;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != 't' && s[pos] != ' ') return std::nullopt;
    if (!read_int(s, pos + 1, 2, hour) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !read_int(s, pos + 4, 2, minute)) {
      return std::nullopt;
    }
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
      if (!read_int(s, pos + 1, 2, second)) return std::nullopt;
      pos += 3;
    }
    if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
      ++pos;
      std::size_t digits = 0;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        ++pos;
        ++digits;
      }
      if (digits == 0) return std::nullopt;
    }
  }
  std::int64_t offset = 0;
  if (pos < s.size()) {
    auto zone = TimeZone::parse(s.substr(pos));
    if (!zone) return std::nullopt;
    offset = zone->offset_seconds;
  }
  if (month < 1 || month > 12 || hour > 23 || minute > 59 || second > 60) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{unsigned(month)},
                                  std::chrono::day{unsigned(day)}};
  if (!ymd.ok()) return std::nullopt;
  std::int64_t d = sys_days{ymd}.time_since_epoch().count();
  return d * kSecondsPerDay + hour * 3600 + minute * 60 + second - offset;
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  auto s = trim(text);
  if (s.empty()) return std::nullopt;
  if (s.size() >= 10 && s[4] == '-') return parse_rfc3339(s);
  return parse_epoch(s);
}

std::string format_rfc3339(Timestamp ts) {
  std::int64_t day = floor_div(ts, kSecondsPerDay);
  std::int64_t sec = ts - day * kSecondsPerDay;
  std::chrono::year_month_day ymd{sys_days{days{day}}};
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), int(sec / 3600), int(sec % 3600 / 60),
                int(sec % 60));
  return buf;
}

Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour, int minute,
                         int second) {
  std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                  std::chrono::day{day}};
  std::int64_t d = sys_days{ymd}.time_since_epoch().count();
  return d * kSecondsPerDay + hour * 3600 + minute * 60 + second;
}

std::optional<TimeZone> TimeZone::parse(std::string_view text) {
  auto s = trim(text);
  if (s == "Z" || s == "z" || s == "UTC" || s == "utc" || s == "GMT") return TimeZone{0};
  if (s.size() >= 4 && (s.substr(0, 3) == "UTC" || s.substr(0, 3) == "GMT")) s.remove_prefix(3);
  if (s.empty() || (s[0] != '+' && s[0] != '-')) return std::nullopt;
  int sign = s[0] == '-' ? -1 : 1;
  s.remove_prefix(1);
  int hours = 0, minutes = 0;
  if (s.size() == 1 || s.size() == 2) {
    if (!read_int(s, 0, s.size(), hours)) return std::nullopt;
  } else if (s.size() == 4) {
    if (!read_int(s, 0, 2, hours) || !read_int(s, 2, 2, minutes)) return std::nullopt;
  } else if (s.size() == 5 && s[2] == ':') {
    if (!read_int(s, 0, 2, hours) || !read_int(s, 3, 2, minutes)) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (hours > 18 || minutes > 59) return std::nullopt;
  return TimeZone{sign * (hours * 3600 + minutes * 60)};
}

std::string TimeZone::name() const {
  if (offset_seconds == 0) return "UTC";
  int total = offset_seconds < 0 ? -offset_seconds : offset_seconds;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%02d:%02d", offset_seconds < 0 ? '-' : '+', total / 3600,
                total % 3600 / 60);
  return buf;
}

std::int64_t local_day_number(Timestamp ts, TimeZone tz) {
  return floor_div(ts + tz.offset_seconds, kSecondsPerDay);
}

int local_hour(Timestamp ts, TimeZone tz) {
  std::int64_t local = ts + tz.offset_seconds;
  std::int64_t sec = local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
  return static_cast<int>(sec / 3600);
}

std::chrono::weekday local_weekday(Timestamp ts, TimeZone tz) {
  return std::chrono::weekday{sys_days{days{local_day_number(ts, tz)}}};
}

std::int64_t calendar_days_between(Timestamp from, Timestamp to, TimeZone tz) {
  return local_day_number(to, tz) - local_day_number(from, tz);
}

IsoWeek iso_week(Timestamp ts, TimeZone tz) {
  sys_days d{days{local_day_number(ts, tz)}};
  unsigned iso = std::chrono::weekday{d}.iso_encoding();
  sys_days thursday = d + days{4 - static_cast<int>(iso)};
  std::chrono::year_month_day ymd{thursday};
  sys_days jan1{ymd.year() / std::chrono::January / 1};
  return IsoWeek{int(ymd.year()), static_cast<unsigned>((thursday - jan1).count() / 7 + 1)};
}

}  // namespace qs
