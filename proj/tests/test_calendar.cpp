#include <catch2/catch_amalgamated.hpp>

#include "epialert/calendar.hpp"

using epialert::Day;
using epialert::DayRange;

TEST_CASE("date parsing round-trips") {
  const auto day = Day::parse("2010-03-06");
  REQUIRE(day.has_value());
  CHECK(day->to_string() == "2010-03-06");
  CHECK(*day == Day::from_ymd(2010, 3, 6));
}

TEST_CASE("date parsing rejects malformed input") {
  CHECK_FALSE(Day::parse("2010-3-06").has_value());
  CHECK_FALSE(Day::parse("2010-02-30").has_value());
  CHECK_FALSE(Day::parse("2010-13-01").has_value());
  CHECK_FALSE(Day::parse("2010-03-06T00:00:00Z").has_value());
  CHECK_FALSE(Day::parse("").has_value());
}

TEST_CASE("timestamps truncate to the UTC day") {
  CHECK(Day::parse_timestamp("2010-03-06T14:00:00Z") == Day::from_ymd(2010, 3, 6));
  CHECK(Day::parse_timestamp("2010-03-06T23:59:59Z") == Day::from_ymd(2010, 3, 6));
  CHECK(Day::parse_timestamp("2010-03-06") == Day::from_ymd(2010, 3, 6));
  CHECK(Day::parse_timestamp("2010-03-06T14:00:00.250Z") == Day::from_ymd(2010, 3, 6));
}

TEST_CASE("timestamp offsets shift into UTC before truncation") {
  CHECK(Day::parse_timestamp("2010-03-07T01:00:00+09:00") == Day::from_ymd(2010, 3, 6));
  CHECK(Day::parse_timestamp("2010-03-06T23:30:00-02:00") == Day::from_ymd(2010, 3, 7));
  CHECK(Day::parse_timestamp("2010-03-06T12:00:00+00:00") == Day::from_ymd(2010, 3, 6));
}

TEST_CASE("timestamp parsing rejects garbage") {
  CHECK_FALSE(Day::parse_timestamp("2010-03-06T25:00:00Z").has_value());
  CHECK(Day::parse_timestamp("2010-03-06T14:00").has_value());  // seconds optional
  CHECK_FALSE(Day::parse_timestamp("not a date").has_value());
  CHECK_FALSE(Day::parse_timestamp("2010-03-06T14:00:00X").has_value());
}

TEST_CASE("weekday and weekend classification") {
  CHECK(Day::from_ymd(2010, 3, 1).weekday() == std::chrono::Monday);
  CHECK_FALSE(Day::from_ymd(2010, 3, 1).is_weekend());
  CHECK(Day::from_ymd(2010, 3, 6).is_weekend());  // Saturday
  CHECK(Day::from_ymd(2010, 3, 7).is_weekend());  // Sunday
  CHECK_FALSE(Day::from_ymd(2010, 3, 8).is_weekend());
}

TEST_CASE("day arithmetic and ranges") {
  const Day d = Day::from_ymd(2010, 1, 1);
  CHECK((d + 31).to_string() == "2010-02-01");
  CHECK((d + 59).to_string() == "2010-03-01");
  CHECK(Day::from_ymd(2010, 5, 9) - d == 128);

  const DayRange trial{d, Day::from_ymd(2010, 5, 9)};
  CHECK(trial.length() == 129);  // the Jan..May 2010 window the fixtures use
  CHECK(trial.contains(Day::from_ymd(2010, 3, 15)));
  CHECK_FALSE(trial.contains(Day::from_ymd(2010, 5, 10)));
}
