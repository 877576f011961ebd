#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "epialert/detectors.hpp"
#include "epialert/events.hpp"

namespace epialert {

/// One silver-standard report day for a topic.
struct SilverReport {
  TopicKey topic;
  Day report_day;

  auto operator<=>(const SilverReport&) const = default;
};

/// The period during which a system alarm counts toward a silver report:
/// the 7 days before the report plus the report day itself.
struct QualifyingWindow {
  TopicKey topic;
  Day start_day;
  Day end_day;

  static QualifyingWindow for_report(const SilverReport& report) {
    return {report.topic, report.report_day - 7, report.report_day};
  }

  bool contains(Day d) const { return start_day <= d && d <= end_day; }
  auto operator<=>(const QualifyingWindow&) const = default;
};

inline std::vector<QualifyingWindow> qualifying_windows(
    std::span<const SilverReport> reports) {
  std::vector<QualifyingWindow> windows;
  windows.reserve(reports.size());
  for (const SilverReport& r : reports)
    windows.push_back(QualifyingWindow::for_report(r));
  return windows;
}

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
  long surveillance_days = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    surveillance_days += o.surveillance_days;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Scores alarms against qualifying windows:
///   tp - windows holding at least one alarm day (multiple alarms count once)
///   fn - windows holding none
///   fp - each alarm day outside every window
///   tn - each quiet day outside every window
/// A window may begin before the range (early reports); only in-range days
/// are classified. Overlapping windows are each credited on their own.
inline ConfusionCounts confusion(const AlarmSeries& alarms,
                                 std::span<const QualifyingWindow> windows,
                                 DayRange range) {
  if (alarms.start_day != range.first || alarms.length() != range.length())
    throw std::invalid_argument("confusion: alarm series does not cover the range");
  for (const QualifyingWindow& w : windows) {
    if (w.topic != alarms.topic)
      throw std::invalid_argument("confusion: window topic mismatch");
    if (!range.contains(w.end_day))
      throw std::out_of_range("confusion: qualifying window outside the range");
  }

  ConfusionCounts counts;
  counts.surveillance_days = range.length();

  for (const QualifyingWindow& w : windows) {
    const int lo = std::max(0, w.start_day - range.first);
    const int hi = w.end_day - range.first;
    bool hit = false;
    for (int i = lo; i <= hi && !hit; ++i)
      hit = alarms.days[static_cast<std::size_t>(i)].alarm;
    (hit ? counts.tp : counts.fn) += 1;
  }

  // Merge windows into disjoint covered intervals, then classify the gaps.
  std::vector<std::pair<int, int>> covered;
  for (const QualifyingWindow& w : windows)
    covered.emplace_back(std::max(0, w.start_day - range.first),
                         w.end_day - range.first);
  std::sort(covered.begin(), covered.end());
  std::vector<std::pair<int, int>> merged;
  for (const auto& iv : covered) {
    if (!merged.empty() && iv.first <= merged.back().second + 1)
      merged.back().second = std::max(merged.back().second, iv.second);
    else
      merged.push_back(iv);
  }
  int cursor = 0;
  auto classify_gap = [&](int from, int to) {  // [from, to)
    for (int i = from; i < to; ++i)
      (alarms.days[static_cast<std::size_t>(i)].alarm ? counts.fp : counts.tn) += 1;
  };
  for (const auto& iv : merged) {
    classify_gap(cursor, iv.first);
    cursor = iv.second + 1;
  }
  classify_gap(cursor, range.length());
  return counts;
}

/// 95% (by default) Wilson score interval, clamped to [0,1].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

inline Interval wilson_ci(long successes, long trials, double z = 1.96) {
  if (trials <= 0) throw std::invalid_argument("wilson_ci: trials must be > 0");
  if (successes < 0 || successes > trials)
    throw std::invalid_argument("wilson_ci: successes out of range");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      (z / denom) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// A proportion metric; empty when its denominator is zero (rendered as
/// N/A downstream, never as 0).
struct MetricValue {
  std::optional<double> value;
  std::optional<Interval> ci;
  bool operator==(const MetricValue&) const = default;
};

struct EvalResult {
  ConfusionCounts counts;
  MetricValue se, sp, ppv, npv;
  std::optional<double> f1;
  long alarm_days = 0;
  double alarm_rate_per_100 = 0.0;
  std::optional<double> timeliness_days;
};

/// F1 as the harmonic mean of sensitivity and PPV.
inline std::optional<double> harmonic_f1(std::optional<double> se,
                                         std::optional<double> ppv) {
  if (!se || !ppv || *se + *ppv <= 0.0) return std::nullopt;
  return 2.0 * *se * *ppv / (*se + *ppv);
}

namespace detail {

inline MetricValue proportion(long successes, long trials) {
  if (trials <= 0) return {};
  return {static_cast<double>(successes) / static_cast<double>(trials),
          wilson_ci(successes, trials)};
}

}  // namespace detail

/// Sensitivity, specificity, PPV, NPV (each with a Wilson CI) and F1 from
/// raw confusion counts.
inline EvalResult metrics(const ConfusionCounts& c) {
  EvalResult r;
  r.counts = c;
  r.se = detail::proportion(c.tp, c.tp + c.fn);
  r.sp = detail::proportion(c.tn, c.tn + c.fp);
  r.ppv = detail::proportion(c.tp, c.tp + c.fp);
  r.npv = detail::proportion(c.tn, c.tn + c.fn);
  r.f1 = harmonic_f1(r.se.value, r.ppv.value);
  return r;
}

inline double alarm_rate(long alarm_days, long surveillance_days) {
  if (surveillance_days <= 0)
    throw std::invalid_argument("alarm_rate: surveillance_days must be > 0");
  return 100.0 * static_cast<double>(alarm_days) /
         static_cast<double>(surveillance_days);
}

inline double alarm_rate(const AlarmSeries& alarms, long surveillance_days) {
  return alarm_rate(alarms.alarm_day_count(), surveillance_days);
}

namespace detail {

// Sums (report_day - earliest alarm day) over windows that hold an alarm.
inline void accumulate_timeliness(const AlarmSeries& alarms,
                                  std::span<const QualifyingWindow> windows,
                                  double& lead_sum, long& alarmed_windows) {
  const DayRange range = alarms.range();
  for (const QualifyingWindow& w : windows) {
    const int lo = std::max(0, w.start_day - range.first);
    const int hi = std::min(range.length() - 1, w.end_day - range.first);
    for (int i = lo; i <= hi; ++i) {
      if (alarms.days[static_cast<std::size_t>(i)].alarm) {
        lead_sum += w.end_day - (range.first + i);
        ++alarmed_windows;
        break;
      }
    }
  }
}

}  // namespace detail

/// Mean days the earliest in-window alarm precedes its silver report;
/// empty when no window holds an alarm.
inline std::optional<double> timeliness(const AlarmSeries& alarms,
                                        std::span<const QualifyingWindow> windows) {
  double sum = 0.0;
  long count = 0;
  detail::accumulate_timeliness(alarms, windows, sum, count);
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

/// One prepared surveillance stream: the detector-ready count series plus
/// its silver-standard reports.
struct EvalStream {
  CountSeries series;
  std::vector<SilverReport> reports;
};

/// Scores already-computed alarm series against their reports, pooling the
/// confusion counts before deriving metrics (micro-aggregation).
inline EvalResult evaluate_alarm_streams(
    std::span<const std::pair<AlarmSeries, std::vector<SilverReport>>> streams) {
  if (streams.empty())
    throw std::invalid_argument("evaluate: at least one stream required");
  ConfusionCounts total;
  long alarm_days = 0;
  double lead_sum = 0.0;
  long alarmed_windows = 0;
  for (const auto& [alarms, reports] : streams) {
    const auto windows = qualifying_windows(reports);
    total += confusion(alarms, windows, alarms.range());
    alarm_days += alarms.alarm_day_count();
    detail::accumulate_timeliness(alarms, windows, lead_sum, alarmed_windows);
  }
  EvalResult result = metrics(total);
  result.alarm_days = alarm_days;
  result.alarm_rate_per_100 = alarm_rate(alarm_days, total.surveillance_days);
  if (alarmed_windows > 0)
    result.timeliness_days = lead_sum / static_cast<double>(alarmed_windows);
  return result;
}

/// Runs one detector config over every stream and pools the scores.
inline EvalResult evaluate_run(std::span<const EvalStream> streams,
                               const DetectorConfig& cfg) {
  std::vector<std::pair<AlarmSeries, std::vector<SilverReport>>> scored;
  scored.reserve(streams.size());
  for (const EvalStream& s : streams)
    scored.emplace_back(run_detector(s.series, cfg), s.reports);
  return evaluate_alarm_streams(scored);
}

struct SilverParseResult {
  std::vector<SilverReport> reports;
  std::vector<ParseError> errors;
};

/// Silver-standard CSV: topic_disease,topic_country,report_date. A header
/// row is detected by the literal "topic_disease" in column 1.
inline SilverParseResult parse_silver_csv(std::istream& in) {
  SilverParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto fields = detail::split_csv_line(stripped);
    if (line_no == 1 && !fields.empty() && detail::trim(fields[0]) == "topic_disease")
      continue;
    if (fields.size() != 3) {
      result.errors.push_back(
          {line_no, "expected 3 CSV fields, got " + std::to_string(fields.size())});
      continue;
    }
    const auto day = Day::parse(detail::trim(fields[2]));
    if (!day) {
      result.errors.push_back({line_no, "bad report date '" + detail::trim(fields[2]) + "'"});
      continue;
    }
    SilverReport report;
    report.topic.disease = fold_key(detail::trim(fields[0]));
    report.topic.country = fold_key(detail::trim(fields[1]));
    report.report_day = *day;
    if (report.topic.disease.empty() || report.topic.country.empty()) {
      result.errors.push_back({line_no, "empty disease or country key"});
      continue;
    }
    result.reports.push_back(std::move(report));
  }
  return result;
}

inline SilverParseResult parse_silver_csv(const std::string& text) {
  std::istringstream in(text);
  return parse_silver_csv(in);
}

}  // namespace epialert
