#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "epialert/calendar.hpp"
#include "epialert/evaluation.hpp"
#include "epialert/events.hpp"

namespace epialert {

namespace detail {

// mt19937_64 is fully specified by the standard, and the draws below use
// only IEEE double arithmetic, so generated fixtures are reproducible
// across platforms (std::poisson_distribution is not).
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline int poisson_draw(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  int k = -1;
  double p = 1.0;
  do {
    ++k;
    p *= uniform01(rng);
  } while (p > limit);
  return k;
}

}  // namespace detail

/// One synthetic language channel: its own background rate and how many
/// extra events per day it contributes during the outbreak burst.
struct SynthChannel {
  std::string language;
  double background_rate = 1.0;
  double burst_magnitude = 0.0;
};

struct SynthSpec {
  TopicKey topic{"cholera", "ao"};
  DayRange range{Day::from_ymd(2010, 1, 1), Day::from_ymd(2010, 5, 9)};
  std::vector<SynthChannel> channels{{"en", 1.0, 10.0}};
  Day burst_day = Day::from_ymd(2010, 3, 1);
  int burst_len = 3;
  bool weekend_outage = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (range.empty()) throw std::invalid_argument("synth: empty day range");
    if (channels.empty()) throw std::invalid_argument("synth: no language channels");
    if (burst_len < 0) throw std::invalid_argument("synth: negative burst length");
    for (const SynthChannel& c : channels) {
      if (c.background_rate < 0.0)
        throw std::invalid_argument("synth: negative background rate");
      if (c.burst_magnitude < 0.0)
        throw std::invalid_argument("synth: negative burst magnitude");
      if (c.language.empty()) throw std::invalid_argument("synth: empty language code");
    }
    double magnitude = 0.0;
    for (const SynthChannel& c : channels) magnitude += c.burst_magnitude;
    if (magnitude > 0.0 && !range.contains(burst_day))
      throw std::invalid_argument("synth: burst day outside the range");
  }
};

struct SynthOutput {
  std::vector<EventFrame> frames;   // ordered by channel, then day
  std::vector<SilverReport> reports;
};

/// Poisson background per channel plus a fixed burst, expanded into event
/// frames; one silver report sits at the first burst day. Fully
/// deterministic for a given spec.
inline SynthOutput synth_events(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthOutput out;

  const DayRange burst{spec.burst_day, spec.burst_day + (spec.burst_len - 1)};
  for (const SynthChannel& channel : spec.channels) {
    for (Day day = spec.range.first; day <= spec.range.last; ++day) {
      int count = detail::poisson_draw(rng, channel.background_rate);
      if (spec.burst_len > 0 && burst.contains(day))
        count += static_cast<int>(std::llround(channel.burst_magnitude));
      if (spec.weekend_outage && day.is_weekend()) count = 0;
      for (int i = 0; i < count; ++i) {
        EventFrame frame;
        frame.disease = spec.topic.disease;
        frame.country = spec.topic.country;
        frame.language = channel.language;
        frame.observed_day = day;
        out.frames.push_back(std::move(frame));
      }
    }
  }

  double magnitude = 0.0;
  for (const SynthChannel& c : spec.channels) magnitude += c.burst_magnitude;
  if (magnitude > 0.0 && spec.burst_len > 0)
    out.reports.push_back({spec.topic, spec.burst_day});
  return out;
}

/// NDJSON lines for the generated frames. Download hours cycle through the
/// day so timestamps stay distinct and deterministic.
inline std::string render_synth_events_ndjson(const SynthOutput& out) {
  std::string text;
  Day prev{0};
  int hour = 0;
  bool first = true;
  for (const EventFrame& f : out.frames) {
    if (first || f.observed_day != prev) hour = 0;
    first = false;
    prev = f.observed_day;
    nlohmann::json obj;
    obj["disease"] = f.disease;
    obj["country"] = f.country;
    obj["language"] = f.language;
    char ts[40];
    std::snprintf(ts, sizeof(ts), "%sT%02d:00:00Z", f.observed_day.to_string().c_str(),
                  hour);
    obj["timestamp"] = ts;
    hour = (hour + 1) % 24;
    text += obj.dump();
    text += '\n';
  }
  return text;
}

inline std::string render_silver_csv(const std::vector<SilverReport>& reports) {
  std::string text = "topic_disease,topic_country,report_date\n";
  for (const SilverReport& r : reports)
    text += r.topic.disease + "," + r.topic.country + "," + r.report_day.to_string() + "\n";
  return text;
}

}  // namespace epialert
