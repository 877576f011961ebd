#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "epialert/detectors.hpp"
#include "support/reference.hpp"

using namespace epialert;
using refcheck::make_series;

namespace {

const Day kMonday = Day::from_ymd(2010, 3, 1);

std::vector<int> random_counts(std::mt19937_64& rng, int len, int max_count) {
  std::vector<int> counts;
  counts.reserve(len);
  for (int i = 0; i < len; ++i)
    counts.push_back(static_cast<int>(rng() % (max_count + 1)));
  return counts;
}

}  // namespace

TEST_CASE("baseline of a constant window clamps sigma to the minimum") {
  const auto series = make_series({2, 2, 2, 2, 2, 2, 2, 2, 2, 2});
  const auto base = baseline_stats(series, 9, DetectorConfig{});
  REQUIRE(base.has_value());
  CHECK(base->mu == 2.0);
  CHECK(base->sigma == 0.2);
  CHECK(base->n == 7);
}

TEST_CASE("baseline mean and sample stddev match the spreadsheet values") {
  const auto series = make_series({0, 1, 0, 2, 1, 0, 3, 0, 0, 0});
  const auto base = baseline_stats(series, 9, DetectorConfig{});
  REQUIRE(base.has_value());
  CHECK(base->mu == Catch::Approx(1.0));
  CHECK(base->sigma == Catch::Approx(1.1547).margin(1e-4));
  CHECK(base->window_days.size() == 7);
  CHECK(base->window_days.front() == kMonday);
}

TEST_CASE("baseline_stats rejects warmup targets") {
  const auto series = make_series(std::vector<int>(12, 1));
  CHECK_THROWS_AS(baseline_stats(series, 8, DetectorConfig{}), std::out_of_range);
  CHECK_THROWS_AS(baseline_stats(series, 12, DetectorConfig{}), std::out_of_range);
  CHECK_NOTHROW(baseline_stats(series, 9, DetectorConfig{}));
}

TEST_CASE("W2 baseline drops Saturday and Sunday before computing") {
  // Window Mon..Sun with weekday counts 1 and weekend counts 0.
  const auto series = make_series({1, 1, 1, 1, 1, 0, 0, 0, 0, 3}, kMonday);
  DetectorConfig cfg = DetectorConfig::defaults_for(Model::W2);
  const auto base = baseline_stats(series, 9, cfg);
  REQUIRE(base.has_value());
  CHECK(base->n == 5);
  CHECK(base->mu == Catch::Approx(1.0));
  CHECK(base->sigma == 0.2);  // zero sample variance, clamped
  for (Day d : base->window_days) CHECK_FALSE(d.is_weekend());
}

TEST_CASE("c2 statistic evaluates the standardized excess") {
  const DetectorConfig cfg;
  CHECK(c2_stat(5.0, {5.0, 0.2, 7, {}}, cfg) == 0.0);  // at-mean count clips to 0
  CHECK(c2_stat(3.0, {2.0, 0.2, 7, {}}, cfg) == Catch::Approx(4.0));
  CHECK(c2_stat(4.0, {1.0, 1.1547005383792515, 7, {}}, cfg) ==
        Catch::Approx(1.598).margin(1e-3));
}

TEST_CASE("c3 adds gated guard-period terms") {
  DetectorConfig cfg = DetectorConfig::defaults_for(Model::C3);

  SECTION("constant series scores zero") {
    const auto series = make_series(std::vector<int>(12, 2));
    CHECK(c3_stat(series, 11, cfg) == 0.0);
  }

  SECTION("elevated guard days are excluded by the 3-sigma gate") {
    const auto series = make_series({2, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 5});
    // target C2 = (5 - 2.2)/0.2 = 14; both guard-day counts 3 >= 2 + 3*0.2
    CHECK(c3_stat(series, 11, cfg) == Catch::Approx(14.0));
  }

  SECTION("calm guard days pass the gate but contribute zero") {
    const auto series = make_series({2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 5});
    CHECK(c3_stat(series, 11, cfg) == Catch::Approx(14.0));
  }
}

TEST_CASE("w2 equals c2 after weekend removal on the fixture") {
  const auto series = make_series({1, 1, 1, 1, 1, 0, 0, 0, 0, 3}, kMonday);
  DetectorConfig cfg = DetectorConfig::defaults_for(Model::W2);
  const auto s = w2_stat(series, 9, cfg);
  REQUIRE(s.has_value());
  CHECK(*s == Catch::Approx(9.0));  // (3 - 1.2) / 0.2

  const auto zero_series = make_series({0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, kMonday);
  const auto z = w2_stat(zero_series, 9, cfg);
  REQUIRE(z.has_value());
  CHECK(*z == 0.0);
}

TEST_CASE("w2 reports a degenerate window when under 2 weekdays remain") {
  DetectorConfig cfg = DetectorConfig::defaults_for(Model::W2);
  cfg.baseline_len = 2;
  cfg.guard_len = 0;
  // Start on Saturday: the first valid target day has an all-weekend window.
  const auto series = make_series({0, 0, 1, 1, 1, 1, 1, 1, 1, 1},
                                  Day::from_ymd(2010, 3, 6));
  CHECK_FALSE(w2_stat(series, 2, cfg).has_value());  // window Sat+Sun
  CHECK_FALSE(w2_stat(series, 3, cfg).has_value());  // window Sun+Mon, 1 weekday
  CHECK(w2_stat(series, 4, cfg).has_value());        // window Mon+Tue

  const AlarmSeries alarms = run_detector(series, cfg);
  CHECK_FALSE(alarms.days[2].statistic.has_value());
  CHECK_FALSE(alarms.days[2].alarm);
  CHECK(alarms.days[4].statistic.has_value());
}

TEST_CASE("f statistic combines test and baseline deviation from the baseline mean") {
  const auto series = make_series({1, 1, 1, 1, 1, 1, 1, 1, 1, 4});
  DetectorConfig cfg = DetectorConfig::defaults_for(Model::Fstat);

  SECTION("literal sum mode, as printed") {
    CHECK(f_stat(series, 9, cfg) == Catch::Approx(3.0));  // test window [1,1,4]
    const auto constant = make_series(std::vector<int>(12, 3));
    CHECK(f_stat(constant, 11, cfg) == 0.0);
  }

  SECTION("variance ratio mode clamps the denominator") {
    cfg.fstat_combine = FstatCombine::variance_ratio;
    CHECK(f_stat(series, 9, cfg) == Catch::Approx(75.0));  // 3.0 / 0.2^2
  }
}

TEST_CASE("ewma follows the smoothing recursion from the first series day") {
  DetectorConfig cfg = DetectorConfig::defaults_for(Model::Ewma);

  SECTION("a constant series is a fixed point") {
    const auto series = make_series(std::vector<int>(12, 4));
    CHECK(ewma_stat(series, 11, cfg) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("spreadsheet recursion fixture") {
    const auto series = make_series({0, 1, 0, 2, 1, 0, 3, 1, 1, 4});
    CHECK(ewma_stat(series, 9, cfg) == Catch::Approx(1.557).margin(1e-3));
  }

  SECTION("lambda near 1 degenerates to the unclipped z-score") {
    std::mt19937_64 rng(5);
    cfg.lambda = 1.0 - 1e-9;
    for (int trial = 0; trial < 40; ++trial) {
      const auto series = make_series(random_counts(rng, 20, 10));
      for (int t = cfg.warmup_days(); t < series.length(); ++t) {
        const auto base = baseline_stats(series, t, cfg);
        const double z = (series.counts[t] - base->mu) / base->sigma;
        CHECK(std::abs(ewma_stat(series, t, cfg) - z) < 1e-6);
      }
    }
  }

  SECTION("statistic can go negative on falling counts") {
    auto counts = std::vector<int>{8, 8, 8, 8, 8, 8, 8, 8, 8, 0, 0, 0};
    const auto series = make_series(counts);
    CHECK(ewma_stat(series, 11, cfg) < 0.0);
  }
}

TEST_CASE("run_detector flags alarms strictly above the threshold") {
  SECTION("constant series never alarms for any model") {
    const auto series = make_series(std::vector<int>(40, 2));
    for (Model m : {Model::C2, Model::C3, Model::W2, Model::Fstat, Model::Ewma}) {
      const auto alarms = run_detector(series, DetectorConfig::defaults_for(m));
      CHECK(alarms.alarm_day_count() == 0);
    }
  }

  SECTION("the c3 fixture alarms on its spike day") {
    const auto series = make_series({2, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 5});
    const auto alarms = run_detector(series, DetectorConfig::defaults_for(Model::C3));
    CHECK(alarms.days[11].alarm);  // 14.0 > 0.3
  }

  SECTION("the c2 fixture alarms at the stock threshold") {
    auto counts = std::vector<int>(12, 2);
    counts[11] = 3;  // S = 4.0 > 0.2
    const auto alarms =
        run_detector(make_series(counts), DetectorConfig::defaults_for(Model::C2));
    CHECK(alarms.days[11].alarm);
    CHECK(alarms.days[11].statistic == Catch::Approx(4.0));
  }

  SECTION("at-threshold values do not alarm") {
    auto counts = std::vector<int>(12, 2);
    counts[11] = 3;  // S = 4.0 exactly
    DetectorConfig cfg = DetectorConfig::defaults_for(Model::C2);
    cfg.threshold = 4.0;
    CHECK(run_detector(make_series(counts), cfg).alarm_day_count() == 0);
    cfg.threshold = 3.999;
    CHECK(run_detector(make_series(counts), cfg).alarm_day_count() == 1);
  }

  SECTION("warmup days carry no statistic and no alarm") {
    auto counts = std::vector<int>(12, 0);
    counts[3] = 9;  // a spike inside the warmup must stay silent
    const auto alarms =
        run_detector(make_series(counts), DetectorConfig::defaults_for(Model::C2));
    for (int t = 0; t < 9; ++t) {
      CHECK_FALSE(alarms.days[t].statistic.has_value());
      CHECK_FALSE(alarms.days[t].alarm);
    }
    for (int t = 9; t < 12; ++t) CHECK(alarms.days[t].statistic.has_value());
  }

  SECTION("series not longer than the warmup are rejected") {
    const auto series = make_series(std::vector<int>(9, 1));
    CHECK_THROWS_AS(run_detector(series, DetectorConfig{}), std::invalid_argument);
  }
}

TEST_CASE("per-model defaults carry the documented tuned thresholds") {
  CHECK(DetectorConfig::defaults_for(Model::C2).threshold == 0.2);
  CHECK(DetectorConfig::defaults_for(Model::W2).threshold == 0.2);
  CHECK(DetectorConfig::defaults_for(Model::C3).threshold == 0.3);
  CHECK(DetectorConfig::defaults_for(Model::Fstat).threshold == 0.6);
  CHECK(DetectorConfig::defaults_for(Model::Ewma).threshold == 2.0);
  for (Model m : {Model::C2, Model::C3, Model::W2, Model::Fstat, Model::Ewma}) {
    const auto cfg = DetectorConfig::defaults_for(m);
    CHECK(cfg.baseline_len == 7);
    CHECK(cfg.guard_len == 2);
    CHECK(cfg.k == 1.0);
    CHECK(cfg.lambda == 0.2);
    CHECK(cfg.min_sigma == 0.2);
    CHECK_NOTHROW(cfg.validate());
  }
}

TEST_CASE("config validation enforces the parameter ranges") {
  DetectorConfig cfg;
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.baseline_len = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.min_sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.fstat_test_len = 11;  // would reach past the series start at first valid t
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.fstat_test_len = 10;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("c2 is non-decreasing in the day count") {
  std::mt19937_64 rng(17);
  const DetectorConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    const auto series = make_series(random_counts(rng, 12, 8));
    const auto base = baseline_stats(series, 11, cfg);
    double prev = -1.0;
    for (int count = 0; count <= 20; ++count) {
      const double s = c2_stat(count, *base, cfg);
      CHECK(s >= prev);
      prev = s;
    }
  }
}

TEST_CASE("c3 dominates c2 day by day") {
  std::mt19937_64 rng(19);
  const DetectorConfig cfg = DetectorConfig::defaults_for(Model::C3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto series = make_series(random_counts(rng, 25, 10));
    for (int t = cfg.warmup_days(); t < series.length(); ++t) {
      const auto base = baseline_stats(series, t, cfg);
      CHECK(c3_stat(series, t, cfg) >= c2_stat(series.counts[t], *base, cfg) - 1e-12);
    }
  }
}

TEST_CASE("w2 equals c2 when the window holds no weekend day") {
  std::mt19937_64 rng(23);
  DetectorConfig cfg;
  cfg.baseline_len = 5;  // Mon..Fri window when the series starts on a Monday
  for (int trial = 0; trial < 30; ++trial) {
    const auto series = make_series(random_counts(rng, 8, 9), kMonday);
    const int t = 7;
    const auto base = baseline_stats(series, t, cfg);
    const auto w2 = w2_stat(series, t, cfg);
    REQUIRE(w2.has_value());
    CHECK(*w2 == c2_stat(series.counts[t], *base, cfg));
  }
}

TEST_CASE("c2 is shift-invariant while sigma stays unclamped") {
  std::mt19937_64 rng(29);
  const DetectorConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    auto counts = random_counts(rng, 12, 6);
    counts[2] = 0;  // both inside the t=11 baseline window [2,8]
    counts[3] = 9;  // guarantees sample sd well above min_sigma
    const auto series = make_series(counts);
    const auto base = baseline_stats(series, 11, cfg);
    REQUIRE(base->sigma > cfg.min_sigma);

    auto shifted_counts = counts;
    for (int& c : shifted_counts) c += 5;
    const auto shifted = make_series(shifted_counts);
    const auto shifted_base = baseline_stats(shifted, 11, cfg);
    CHECK(c2_stat(shifted.counts[11], *shifted_base, cfg) ==
          Catch::Approx(c2_stat(series.counts[11], *base, cfg)).margin(1e-9));
  }
}

TEST_CASE("identical inputs give bit-identical alarm series") {
  std::mt19937_64 rng(37);
  const auto series = make_series(random_counts(rng, 40, 12));
  for (Model m : {Model::C2, Model::C3, Model::W2, Model::Fstat, Model::Ewma}) {
    const auto cfg = DetectorConfig::defaults_for(m);
    CHECK(run_detector(series, cfg) == run_detector(series, cfg));
  }
}

TEST_CASE("all statistics but ewma are non-negative") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 25; ++trial) {
    const auto series = make_series(random_counts(rng, 30, 15));
    for (Model m : {Model::C2, Model::C3, Model::W2, Model::Fstat}) {
      const auto cfg = DetectorConfig::defaults_for(m);
      for (int t = cfg.warmup_days(); t < series.length(); ++t) {
        const auto s = detector_stat(series, t, cfg);
        if (s) CHECK(*s >= 0.0);
      }
    }
  }
}
