#pragma once

#include <algorithm>
#include <cctype>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "epialert/calendar.hpp"

namespace epialert {

/// disease + country pair identifying one surveillance stream.
/// Keys are case-folded at ingestion so equality is plain string equality.
struct TopicKey {
  std::string disease;
  std::string country;

  auto operator<=>(const TopicKey&) const = default;
};

/// One text-mined event, already normalized upstream to root terms.
struct EventFrame {
  std::string disease;
  std::string country;
  std::optional<std::string> province;
  std::string language;   // ISO-639-1
  Day observed_day;       // UTC day of the download timestamp

  bool operator==(const EventFrame&) const = default;
};

/// Per-topic calendar-day counts over a contiguous range. Missing days are
/// explicit zeros; `languages` records which codes contributed frames.
struct CountSeries {
  TopicKey topic;
  Day start_day;
  std::vector<int> counts;
  std::set<std::string> languages;

  int length() const { return static_cast<int>(counts.size()); }
  Day day_at(int index) const { return start_day + index; }
  DayRange range() const { return {start_day, start_day + length() - 1}; }

  bool operator==(const CountSeries&) const = default;
};

/// The 13 source languages of the news stream.
inline const std::set<std::string>& default_languages() {
  static const std::set<std::string> langs = {"ar", "zh", "nl", "en", "fr", "de",
                                              "it", "ko", "pt", "ru", "es", "vi",
                                              "th"};
  return langs;
}

/// ASCII-lowercases a key so topic equality is case-insensitive.
inline std::string fold_key(std::string_view raw) {
  std::string out(raw);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

enum class EventFormat { ndjson, csv };

struct ParseOptions {
  EventFormat format = EventFormat::ndjson;
  std::set<std::string> languages = default_languages();
  std::optional<DayRange> range;  // when set, frames outside it are rejected
};

/// One rejected input line; parsing continues past it.
struct ParseError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ParseResult {
  std::vector<EventFrame> frames;
  std::vector<ParseError> errors;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<std::string> validate_frame(EventFrame& frame,
                                                 const std::string& timestamp,
                                                 const ParseOptions& opts) {
  const auto day = Day::parse_timestamp(timestamp);
  if (!day) return "bad timestamp '" + timestamp + "'";
  frame.observed_day = *day;
  if (!opts.languages.contains(frame.language))
    return "unknown language code '" + frame.language + "'";
  if (opts.range && !opts.range->contains(frame.observed_day))
    return "day " + frame.observed_day.to_string() + " outside the trial range";
  return std::nullopt;
}

}  // namespace detail

/// Reads one event frame per line (NDJSON object or CSV row
/// disease,country,province,language,timestamp). Malformed lines become
/// error records; the rest of the input is still parsed.
inline ParseResult parse_event_frames(std::istream& in,
                                      const ParseOptions& opts = {}) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;

    EventFrame frame;
    std::string timestamp;
    if (opts.format == EventFormat::ndjson) {
      nlohmann::json obj = nlohmann::json::parse(stripped, nullptr, false);
      if (obj.is_discarded() || !obj.is_object()) {
        result.errors.push_back({line_no, "malformed JSON object"});
        continue;
      }
      bool ok = true;
      for (const char* key : {"disease", "country", "language", "timestamp"}) {
        if (!obj.contains(key) || !obj[key].is_string()) {
          result.errors.push_back({line_no, std::string("missing string field '") + key + "'"});
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      frame.disease = fold_key(obj["disease"].get<std::string>());
      frame.country = fold_key(obj["country"].get<std::string>());
      frame.language = fold_key(obj["language"].get<std::string>());
      if (obj.contains("province") && obj["province"].is_string())
        frame.province = obj["province"].get<std::string>();
      timestamp = obj["timestamp"].get<std::string>();
    } else {
      const auto fields = detail::split_csv_line(stripped);
      if (line_no == 1 && !fields.empty() && detail::trim(fields[0]) == "disease")
        continue;  // optional header row
      if (fields.size() != 5) {
        result.errors.push_back({line_no, "expected 5 CSV fields, got " +
                                              std::to_string(fields.size())});
        continue;
      }
      frame.disease = fold_key(detail::trim(fields[0]));
      frame.country = fold_key(detail::trim(fields[1]));
      const std::string province = detail::trim(fields[2]);
      if (!province.empty()) frame.province = province;
      frame.language = fold_key(detail::trim(fields[3]));
      timestamp = detail::trim(fields[4]);
      if (frame.disease.empty() || frame.country.empty()) {
        result.errors.push_back({line_no, "empty disease or country key"});
        continue;
      }
    }

    if (auto err = detail::validate_frame(frame, timestamp, opts)) {
      result.errors.push_back({line_no, *err});
      continue;
    }
    result.frames.push_back(std::move(frame));
  }
  return result;
}

inline ParseResult parse_event_frames(const std::string& text,
                                      const ParseOptions& opts = {}) {
  std::istringstream in(text);
  return parse_event_frames(in, opts);
}

/// Daily counts of frames matching `topic` with language in `languages`.
/// Days with no matching frame stay 0; an empty selection is an all-zero series.
inline CountSeries bucket_counts(std::span<const EventFrame> frames,
                                 const TopicKey& topic,
                                 const std::set<std::string>& languages,
                                 DayRange range) {
  if (range.empty()) throw std::invalid_argument("bucket_counts: empty day range");
  CountSeries series;
  series.topic = topic;
  series.start_day = range.first;
  series.counts.assign(static_cast<std::size_t>(range.length()), 0);
  for (const EventFrame& f : frames) {
    if (f.disease != topic.disease || f.country != topic.country) continue;
    if (!languages.contains(f.language)) continue;
    if (!range.contains(f.observed_day)) continue;
    ++series.counts[static_cast<std::size_t>(f.observed_day - range.first)];
    series.languages.insert(f.language);
  }
  return series;
}

/// Element-wise sum of per-language series for one topic; treats the
/// languages jointly as a single univariate stream.
inline CountSeries aggregate_languages(std::span<const CountSeries> series_list) {
  if (series_list.empty())
    throw std::invalid_argument("aggregate_languages: no input series");
  CountSeries out = series_list.front();
  for (std::size_t i = 1; i < series_list.size(); ++i) {
    const CountSeries& s = series_list[i];
    if (s.topic != out.topic)
      throw std::invalid_argument("aggregate_languages: mismatched topics");
    if (s.start_day != out.start_day || s.counts.size() != out.counts.size())
      throw std::invalid_argument("aggregate_languages: mismatched day ranges");
    for (std::size_t d = 0; d < out.counts.size(); ++d) out.counts[d] += s.counts[d];
    out.languages.insert(s.languages.begin(), s.languages.end());
  }
  return out;
}

/// Frequency purge: days with a count of exactly 1 are zeroed.
inline CountSeries purge_singletons(CountSeries series) {
  for (int& c : series.counts)
    if (c == 1) c = 0;
  return series;
}

}  // namespace epialert
