#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace epialert {

/// One UTC calendar day, stored as days since 1970-01-01.
class Day {
public:
  Day() = default;
  constexpr explicit Day(int days_since_epoch) : value_(days_since_epoch) {}

  static constexpr Day from_ymd(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year},
                                          std::chrono::month{month},
                                          std::chrono::day{day}};
    const std::chrono::sys_days sd{ymd};
    return Day{static_cast<int>(sd.time_since_epoch().count())};
  }

  /// Parses "YYYY-MM-DD". Rejects impossible dates.
  static std::optional<Day> parse(std::string_view text);

  /// Parses an ISO-8601 timestamp and truncates it to its UTC day.
  /// Accepts a bare date, a trailing "Z", or a "+HH:MM"/"-HH:MM" offset.
  static std::optional<Day> parse_timestamp(std::string_view text);

  std::string to_string() const {
    const std::chrono::year_month_day ymd{
        std::chrono::sys_days{std::chrono::days{value_}}};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()));
    return buf;
  }

  std::chrono::weekday weekday() const {
    return std::chrono::weekday{std::chrono::sys_days{std::chrono::days{value_}}};
  }

  bool is_weekend() const {
    const auto wd = weekday();
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
  }

  constexpr int since_epoch() const { return value_; }

  constexpr Day operator+(int days) const { return Day{value_ + days}; }
  constexpr Day operator-(int days) const { return Day{value_ - days}; }
  constexpr int operator-(Day other) const { return value_ - other.value_; }
  Day& operator++() { ++value_; return *this; }
  constexpr auto operator<=>(const Day&) const = default;

private:
  int value_ = 0;
};

/// Inclusive interval of calendar days.
struct DayRange {
  Day first;
  Day last;

  constexpr int length() const { return last - first + 1; }
  constexpr bool contains(Day d) const { return first <= d && d <= last; }
  constexpr bool empty() const { return last < first; }
  constexpr auto operator<=>(const DayRange&) const = default;
};

namespace detail {

inline bool read_digits(std::string_view& s, int count, int& out) {
  if (s.size() < static_cast<std::size_t>(count)) return false;
  int v = 0;
  for (int i = 0; i < count; ++i) {
    const char c = s[static_cast<std::size_t>(i)];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  s.remove_prefix(static_cast<std::size_t>(count));
  out = v;
  return true;
}

inline bool consume(std::string_view& s, char c) {
  if (s.empty() || s.front() != c) return false;
  s.remove_prefix(1);
  return true;
}

// Parses the date part and leaves the rest of the input in `s`.
inline std::optional<Day> parse_date_part(std::string_view& s) {
  int y = 0, m = 0, d = 0;
  if (!read_digits(s, 4, y) || !consume(s, '-') || !read_digits(s, 2, m) ||
      !consume(s, '-') || !read_digits(s, 2, d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{unsigned(m)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Day::from_ymd(y, unsigned(m), unsigned(d));
}

}  // namespace detail

inline std::optional<Day> Day::parse(std::string_view text) {
  auto day = detail::parse_date_part(text);
  if (!day || !text.empty()) return std::nullopt;
  return day;
}

inline std::optional<Day> Day::parse_timestamp(std::string_view text) {
  auto day = detail::parse_date_part(text);
  if (!day) return std::nullopt;
  if (text.empty()) return day;

  if (!detail::consume(text, 'T')) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  if (!detail::read_digits(text, 2, hh) || !detail::consume(text, ':') ||
      !detail::read_digits(text, 2, mm)) {
    return std::nullopt;
  }
  if (detail::consume(text, ':')) {
    if (!detail::read_digits(text, 2, ss)) return std::nullopt;
    if (detail::consume(text, '.')) {  // ignore fractional seconds
      if (text.empty() || text.front() < '0' || text.front() > '9') return std::nullopt;
      while (!text.empty() && text.front() >= '0' && text.front() <= '9')
        text.remove_prefix(1);
    }
  }
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;

  int offset_minutes = 0;
  if (!text.empty()) {
    const char sign = text.front();
    if (sign == 'Z') {
      text.remove_prefix(1);
    } else if (sign == '+' || sign == '-') {
      text.remove_prefix(1);
      int oh = 0, om = 0;
      if (!detail::read_digits(text, 2, oh) || !detail::consume(text, ':') ||
          !detail::read_digits(text, 2, om) || oh > 14 || om > 59) {
        return std::nullopt;
      }
      offset_minutes = (sign == '-' ? -1 : 1) * (oh * 60 + om);
    } else {
      return std::nullopt;
    }
  }
  if (!text.empty()) return std::nullopt;

  // Shift local wall-clock minutes to UTC, then floor to a day.
  const std::int64_t minutes = std::int64_t{day->since_epoch()} * 1440 +
                               hh * 60 + mm - offset_minutes;
  std::int64_t floored = minutes / 1440;
  if (minutes < 0 && minutes % 1440 != 0) --floored;
  return Day{static_cast<int>(floored)};
}

}  // namespace epialert
