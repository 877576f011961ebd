#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "epialert/events.hpp"

namespace epialert {

/// The five snapshot aberration-detection models. All share a short sliding
/// baseline that assumes a stationary background, separated from the target
/// day by a guard period so onset data cannot contaminate the baseline.
enum class Model { C2, C3, W2, Fstat, Ewma };

enum class FstatCombine {
  paper_literal_sum,  // S_t = sigma_test^2 + sigma_base^2
  variance_ratio,     // S_t = sigma_test^2 / max(sigma_base^2, min_sigma^2)
};

inline std::string_view to_string(Model m) {
  switch (m) {
    case Model::C2: return "C2";
    case Model::C3: return "C3";
    case Model::W2: return "W2";
    case Model::Fstat: return "FSTAT";
    case Model::Ewma: return "EWMA";
  }
  return "?";
}

inline std::string_view to_string(FstatCombine c) {
  return c == FstatCombine::paper_literal_sum ? "paper_literal_sum" : "variance_ratio";
}

inline std::optional<Model> model_from_string(std::string_view token) {
  const std::string t = fold_key(token);
  if (t == "c2") return Model::C2;
  if (t == "c3") return Model::C3;
  if (t == "w2") return Model::W2;
  if (t == "fstat" || t == "f-stat" || t == "f") return Model::Fstat;
  if (t == "ewma") return Model::Ewma;
  return std::nullopt;
}

inline std::optional<FstatCombine> fstat_combine_from_string(std::string_view token) {
  const std::string t = fold_key(token);
  if (t == "paper_literal_sum") return FstatCombine::paper_literal_sum;
  if (t == "variance_ratio") return FstatCombine::variance_ratio;
  return std::nullopt;
}

struct DetectorConfig {
  Model model = Model::C2;
  double threshold = 0.2;  // alarm cutoff on S_t, strict >
  int baseline_len = 7;    // baseline window days
  int guard_len = 2;       // gap between baseline and target day
  double k = 1.0;          // C2-family stddev multiplier
  double lambda = 0.2;     // EWMA smoothing, in (0,1)
  double min_sigma = 0.2;  // lower clamp on the baseline stddev
  double c3_gate_sigma = 3.0;
  int fstat_test_len = 3;  // test window: target day plus the guard days
  FstatCombine fstat_combine = FstatCombine::paper_literal_sum;

  int warmup_days() const { return baseline_len + guard_len; }

  void validate() const {
    if (baseline_len < 2) throw std::invalid_argument("baseline_len must be >= 2");
    if (guard_len < 0) throw std::invalid_argument("guard_len must be >= 0");
    if (!(lambda > 0.0 && lambda < 1.0))
      throw std::invalid_argument("lambda must lie in (0,1)");
    if (!(min_sigma > 0.0)) throw std::invalid_argument("min_sigma must be > 0");
    if (fstat_test_len < 1) throw std::invalid_argument("fstat_test_len must be >= 1");
    if (fstat_test_len > baseline_len + guard_len + 1)
      throw std::invalid_argument("fstat_test_len cannot reach past the series start");
    if (!std::isfinite(threshold)) throw std::invalid_argument("threshold must be finite");
  }

  /// Stock config for a model, carrying its tuned alerting threshold.
  static DetectorConfig defaults_for(Model m) {
    DetectorConfig cfg;
    cfg.model = m;
    switch (m) {
      case Model::C2:
      case Model::W2: cfg.threshold = 0.2; break;
      case Model::C3: cfg.threshold = 0.3; break;
      case Model::Fstat: cfg.threshold = 0.6; break;
      case Model::Ewma: cfg.threshold = 2.0; break;
    }
    return cfg;
  }

  bool operator==(const DetectorConfig&) const = default;
};

/// Mean and clamped stddev of the baseline window feeding one target day.
struct BaselineStats {
  double mu = 0.0;
  double sigma = 0.0;  // >= min_sigma
  int n = 0;
  std::vector<Day> window_days;
};

/// Baseline over [t - guard - baseline_len, t - guard - 1]. For W2 the
/// Saturday/Sunday days are dropped before computing, compensating for
/// weekend reporting outages; alerting itself can happen on any day.
///
/// Returns nullopt when the W2 filter leaves fewer than 2 samples
/// (degenerate window: statistic undefined, no alarm that day). Throws
/// std::out_of_range when t is inside the warmup or past the series.
inline std::optional<BaselineStats> baseline_stats(const CountSeries& series,
                                                   int t,
                                                   const DetectorConfig& cfg) {
  if (t < cfg.warmup_days())
    throw std::out_of_range("baseline_stats: target day inside warmup");
  if (t >= series.length())
    throw std::out_of_range("baseline_stats: target day past series end");

  BaselineStats stats;
  const int begin = t - cfg.guard_len - cfg.baseline_len;
  const int end = t - cfg.guard_len;  // exclusive
  double sum = 0.0;
  std::vector<int> window_counts;
  window_counts.reserve(static_cast<std::size_t>(cfg.baseline_len));
  for (int i = begin; i < end; ++i) {
    const Day day = series.day_at(i);
    if (cfg.model == Model::W2 && day.is_weekend()) continue;
    window_counts.push_back(series.counts[static_cast<std::size_t>(i)]);
    stats.window_days.push_back(day);
    sum += series.counts[static_cast<std::size_t>(i)];
  }
  stats.n = static_cast<int>(window_counts.size());
  if (stats.n < 2) return std::nullopt;  // only reachable via the W2 filter

  stats.mu = sum / stats.n;
  double sq = 0.0;
  for (int c : window_counts) sq += (c - stats.mu) * (c - stats.mu);
  const double sample_sd = std::sqrt(sq / (stats.n - 1));
  stats.sigma = std::max(cfg.min_sigma, sample_sd);
  return stats;
}

/// EARS C2 statistic: standardized excess of the day count over the
/// baseline mean plus k stddevs, clipped at zero.
inline double c2_stat(double day_count, const BaselineStats& base,
                      const DetectorConfig& cfg) {
  return std::max(0.0, (day_count - (base.mu + cfg.k * base.sigma)) / base.sigma);
}

namespace detail {

// Unfiltered baseline window; every model except W2 uses this one.
inline BaselineStats plain_baseline(const CountSeries& series, int t,
                                    const DetectorConfig& cfg) {
  DetectorConfig plain = cfg;
  plain.model = Model::C2;
  return *baseline_stats(series, t, plain);
}

}  // namespace detail

/// C3 extends C2 with the two guard-period observations: each previous
/// day's C2 term joins the sum only while that day's count stays below its
/// own baseline mean plus c3_gate_sigma stddevs. Guard terms whose baseline
/// would fall inside the warmup contribute 0.
inline double c3_stat(const CountSeries& series, int t, const DetectorConfig& cfg) {
  const BaselineStats base = detail::plain_baseline(series, t, cfg);
  double total = c2_stat(series.counts[static_cast<std::size_t>(t)], base, cfg);
  for (int i = 1; i <= 2; ++i) {
    const int ti = t - i;
    if (ti < cfg.warmup_days()) continue;
    const BaselineStats prev = detail::plain_baseline(series, ti, cfg);
    const double count = series.counts[static_cast<std::size_t>(ti)];
    if (count < prev.mu + cfg.c3_gate_sigma * prev.sigma)
      total += c2_stat(count, prev, cfg);
  }
  return total;
}

/// W2: the C2 statistic over the weekend-filtered baseline. nullopt when
/// the filtered window is degenerate.
inline std::optional<double> w2_stat(const CountSeries& series, int t,
                                     const DetectorConfig& cfg) {
  DetectorConfig w2cfg = cfg;
  w2cfg.model = Model::W2;
  const auto base = baseline_stats(series, t, w2cfg);
  if (!base) return std::nullopt;
  return c2_stat(series.counts[static_cast<std::size_t>(t)], *base, w2cfg);
}

/// F-statistic: mean squared deviation from the baseline mean, taken over
/// the test window (the fstat_test_len most recent days) and over the
/// baseline window. The two are combined either as the literal sum or as a
/// clamped variance ratio, selected by cfg.fstat_combine.
inline double f_stat(const CountSeries& series, int t, const DetectorConfig& cfg) {
  if (t - cfg.fstat_test_len + 1 < 0)
    throw std::out_of_range("f_stat: test window reaches past the series start");
  const double mu_b = detail::plain_baseline(series, t, cfg).mu;

  double test_sq = 0.0;
  for (int i = t - cfg.fstat_test_len + 1; i <= t; ++i) {
    const double d = series.counts[static_cast<std::size_t>(i)] - mu_b;
    test_sq += d * d;
  }
  const double sigma_test2 = test_sq / cfg.fstat_test_len;

  double base_sq = 0.0;
  const int begin = t - cfg.guard_len - cfg.baseline_len;
  for (int i = begin; i < begin + cfg.baseline_len; ++i) {
    const double d = series.counts[static_cast<std::size_t>(i)] - mu_b;
    base_sq += d * d;
  }
  const double sigma_base2 = base_sq / cfg.baseline_len;

  if (cfg.fstat_combine == FstatCombine::paper_literal_sum)
    return sigma_test2 + sigma_base2;
  return sigma_test2 / std::max(sigma_base2, cfg.min_sigma * cfg.min_sigma);
}

/// EWMA statistic. The smoothed value Y starts at the first day of the
/// series (Y_1 = C_1) and is carried forward; the result standardizes
/// Y_t against the baseline of the raw counts.
inline double ewma_stat(const CountSeries& series, int t, const DetectorConfig& cfg) {
  const BaselineStats base = detail::plain_baseline(series, t, cfg);
  double y = series.counts[0];
  for (int i = 1; i <= t; ++i)
    y = cfg.lambda * series.counts[static_cast<std::size_t>(i)] + (1.0 - cfg.lambda) * y;
  return (y - base.mu) / (base.sigma * std::sqrt(cfg.lambda / (2.0 - cfg.lambda)));
}

/// The configured model's statistic for day t; nullopt when degenerate.
inline std::optional<double> detector_stat(const CountSeries& series, int t,
                                           const DetectorConfig& cfg) {
  switch (cfg.model) {
    case Model::C2: {
      const BaselineStats base = detail::plain_baseline(series, t, cfg);
      return c2_stat(series.counts[static_cast<std::size_t>(t)], base, cfg);
    }
    case Model::C3: return c3_stat(series, t, cfg);
    case Model::W2: return w2_stat(series, t, cfg);
    case Model::Fstat: return f_stat(series, t, cfg);
    case Model::Ewma: return ewma_stat(series, t, cfg);
  }
  return std::nullopt;
}

struct AlarmDay {
  Day day;
  std::optional<double> statistic;  // empty during warmup / degenerate windows
  bool alarm = false;

  bool operator==(const AlarmDay&) const = default;
};

/// Per-day alarm flags and statistic values for one topic stream.
struct AlarmSeries {
  TopicKey topic;
  Day start_day;
  std::vector<AlarmDay> days;

  int length() const { return static_cast<int>(days.size()); }
  DayRange range() const { return {start_day, start_day + length() - 1}; }
  long alarm_day_count() const {
    long n = 0;
    for (const AlarmDay& d : days) n += d.alarm ? 1 : 0;
    return n;
  }

  bool operator==(const AlarmSeries&) const = default;
};

/// Runs one model over a full series. Warmup days carry an undefined
/// statistic and never alarm; afterwards a day alarms iff S_t exceeds the
/// threshold strictly.
inline AlarmSeries run_detector(const CountSeries& series, const DetectorConfig& cfg) {
  cfg.validate();
  if (series.length() <= cfg.warmup_days())
    throw std::invalid_argument(
        "run_detector: series must be longer than baseline_len + guard_len");

  AlarmSeries alarms;
  alarms.topic = series.topic;
  alarms.start_day = series.start_day;
  alarms.days.reserve(series.counts.size());
  for (int t = 0; t < series.length(); ++t) {
    AlarmDay day{series.day_at(t), std::nullopt, false};
    if (t >= cfg.warmup_days()) {
      day.statistic = detector_stat(series, t, cfg);
      day.alarm = day.statistic.has_value() && *day.statistic > cfg.threshold;
    }
    alarms.days.push_back(std::move(day));
  }
  return alarms;
}

}  // namespace epialert
