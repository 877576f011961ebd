#pragma once

#include <algorithm>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "epialert/detectors.hpp"
#include "epialert/events.hpp"

namespace epialert {

/// One alerting day, carrying everything a downstream feed shows: the test
/// statistic, the topic, the day count, the baseline mean/stddev and the
/// languages that contributed events that day.
struct AlertRecord {
  Day day;
  std::string disease;
  std::string country;
  std::optional<std::string> province;
  Model model = Model::C2;
  double statistic = 0.0;
  double threshold = 0.0;
  double baseline_mean = 0.0;
  double baseline_sd = 0.0;
  int day_count = 0;
  std::vector<std::string> languages;     // sorted
  std::vector<std::string> source_refs;   // optional article identifiers
  std::optional<std::string> focus_species;

  bool operator==(const AlertRecord&) const = default;
};

enum class FeedFormat { ndjson, atom };

/// One record per alarming day. When the per-language buckets that fed the
/// aggregate are supplied, a day's contributing languages are those with a
/// nonzero count on it; otherwise the series' own language set is used.
inline std::vector<AlertRecord> emit_alerts(
    const AlarmSeries& alarms, const CountSeries& series,
    const DetectorConfig& cfg,
    std::span<const CountSeries> per_language = {}) {
  if (alarms.topic != series.topic || alarms.start_day != series.start_day ||
      alarms.length() != series.length())
    throw std::invalid_argument("emit_alerts: alarms do not match the series");
  for (const CountSeries& s : per_language)
    if (s.topic != series.topic || s.start_day != series.start_day ||
        s.length() != series.length())
      throw std::invalid_argument("emit_alerts: per-language bucket mismatch");

  std::vector<AlertRecord> records;
  for (int t = 0; t < alarms.length(); ++t) {
    const AlarmDay& day = alarms.days[static_cast<std::size_t>(t)];
    if (!day.alarm) continue;
    AlertRecord rec;
    rec.day = day.day;
    rec.disease = series.topic.disease;
    rec.country = series.topic.country;
    rec.model = cfg.model;
    rec.statistic = *day.statistic;
    rec.threshold = cfg.threshold;
    const auto base = baseline_stats(series, t, cfg);  // alarm implies non-degenerate
    rec.baseline_mean = base->mu;
    rec.baseline_sd = base->sigma;
    rec.day_count = series.counts[static_cast<std::size_t>(t)];
    if (per_language.empty()) {
      rec.languages.assign(series.languages.begin(), series.languages.end());
    } else {
      for (const CountSeries& s : per_language)
        if (s.counts[static_cast<std::size_t>(t)] > 0)
          for (const std::string& lang : s.languages) rec.languages.push_back(lang);
      std::sort(rec.languages.begin(), rec.languages.end());
      rec.languages.erase(std::unique(rec.languages.begin(), rec.languages.end()),
                          rec.languages.end());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

namespace detail {

inline nlohmann::json alert_to_json(const AlertRecord& r) {
  nlohmann::json obj;
  obj["day"] = r.day.to_string();
  obj["disease"] = r.disease;
  obj["country"] = r.country;
  obj["province"] = r.province ? nlohmann::json(*r.province) : nlohmann::json(nullptr);
  obj["model"] = std::string(to_string(r.model));
  obj["statistic"] = r.statistic;
  obj["threshold"] = r.threshold;
  obj["baseline_mean"] = r.baseline_mean;
  obj["baseline_sd"] = r.baseline_sd;
  obj["count"] = r.day_count;
  obj["languages"] = r.languages;
  obj["source_refs"] = r.source_refs;
  obj["focus_species"] =
      r.focus_species ? nlohmann::json(*r.focus_species) : nlohmann::json(nullptr);
  return obj;
}

inline std::string xml_escape(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string format_stat(double v) {
  nlohmann::json j = v;  // shortest round-trip formatting
  return j.dump();
}

inline std::vector<AlertRecord> sorted_records(std::span<const AlertRecord> records) {
  std::vector<AlertRecord> sorted(records.begin(), records.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const AlertRecord& a, const AlertRecord& b) {
                     return std::tie(a.day, a.disease, a.country, a.model) <
                            std::tie(b.day, b.disease, b.country, b.model);
                   });
  return sorted;
}

}  // namespace detail

/// One JSON object per line, ordered by (day, topic). Byte-stable for
/// identical input.
inline std::string render_feed_ndjson(std::span<const AlertRecord> records) {
  std::string out;
  for (const AlertRecord& r : detail::sorted_records(records)) {
    out += detail::alert_to_json(r).dump();
    out += '\n';
  }
  return out;
}

/// Atom feed with one entry per alert. The feed's updated element tracks
/// the last record day, keeping output a pure function of the records.
inline std::string render_feed_atom(std::span<const AlertRecord> records,
                                    std::string_view title = "epialert alerts") {
  const auto sorted = detail::sorted_records(records);
  std::string updated = "1970-01-01";
  if (!sorted.empty()) updated = sorted.back().day.to_string();

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
  out += "<feed xmlns=\"http://www.w3.org/2005/Atom\">\n";
  out += "  <title>" + detail::xml_escape(title) + "</title>\n";
  out += "  <id>urn:epialert:feed</id>\n";
  out += "  <updated>" + updated + "T00:00:00Z</updated>\n";
  for (const AlertRecord& r : sorted) {
    const std::string model(to_string(r.model));
    out += "  <entry>\n";
    out += "    <title>" + detail::xml_escape(model) + " alert: " +
           detail::xml_escape(r.disease) + " / " + detail::xml_escape(r.country) +
           " on " + r.day.to_string() + "</title>\n";
    out += "    <id>urn:epialert:" + detail::xml_escape(model) + ":" +
           detail::xml_escape(r.disease) + ":" + detail::xml_escape(r.country) +
           ":" + r.day.to_string() + "</id>\n";
    out += "    <updated>" + r.day.to_string() + "T00:00:00Z</updated>\n";
    out += "    <summary>statistic " + detail::format_stat(r.statistic) +
           " exceeded threshold " + detail::format_stat(r.threshold) +
           "; count " + std::to_string(r.day_count) + ", baseline mean " +
           detail::format_stat(r.baseline_mean) + ", baseline sd " +
           detail::format_stat(r.baseline_sd);
    if (!r.languages.empty()) {
      out += "; languages ";
      for (std::size_t i = 0; i < r.languages.size(); ++i) {
        if (i > 0) out += ",";
        out += detail::xml_escape(r.languages[i]);
      }
    }
    out += "</summary>\n";
    out += "  </entry>\n";
  }
  out += "</feed>\n";
  return out;
}

inline std::string render_feed(std::span<const AlertRecord> records, FeedFormat format) {
  return format == FeedFormat::ndjson ? render_feed_ndjson(records)
                                      : render_feed_atom(records);
}

struct AlertParseResult {
  std::vector<AlertRecord> records;
  std::vector<ParseError> errors;
};

/// Reads back the NDJSON feed; emit -> parse round-trips exactly.
inline AlertParseResult parse_alert_records(std::istream& in) {
  AlertParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(stripped, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      result.errors.push_back({line_no, "malformed JSON object"});
      continue;
    }
    try {
      AlertRecord rec;
      const auto day = Day::parse(obj.at("day").get<std::string>());
      if (!day) throw std::runtime_error("bad day");
      rec.day = *day;
      rec.disease = obj.at("disease").get<std::string>();
      rec.country = obj.at("country").get<std::string>();
      if (obj.contains("province") && obj["province"].is_string())
        rec.province = obj["province"].get<std::string>();
      const auto model = model_from_string(obj.at("model").get<std::string>());
      if (!model) throw std::runtime_error("bad model");
      rec.model = *model;
      rec.statistic = obj.at("statistic").get<double>();
      rec.threshold = obj.at("threshold").get<double>();
      rec.baseline_mean = obj.at("baseline_mean").get<double>();
      rec.baseline_sd = obj.at("baseline_sd").get<double>();
      rec.day_count = obj.at("count").get<int>();
      rec.languages = obj.at("languages").get<std::vector<std::string>>();
      if (obj.contains("source_refs") && obj["source_refs"].is_array())
        rec.source_refs = obj["source_refs"].get<std::vector<std::string>>();
      if (obj.contains("focus_species") && obj["focus_species"].is_string())
        rec.focus_species = obj["focus_species"].get<std::string>();
      result.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      result.errors.push_back({line_no, std::string("bad alert record: ") + e.what()});
    }
  }
  return result;
}

inline AlertParseResult parse_alert_records(const std::string& text) {
  std::istringstream in(text);
  return parse_alert_records(in);
}

}  // namespace epialert
