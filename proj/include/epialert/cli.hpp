#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "epialert/alertfeed.hpp"
#include "epialert/detectors.hpp"
#include "epialert/evaluation.hpp"
#include "epialert/events.hpp"
#include "epialert/synth.hpp"
#include "epialert/tuning.hpp"

namespace epialert::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Problems with input data or manifests; mapped to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Declarative description of one run; command-line flags override fields.
struct RunManifest {
  std::string events_path;
  EventFormat events_format = EventFormat::ndjson;
  std::string silver_path;
  std::string alarms_dir;  // evaluate from staged detect output instead of events
  std::set<std::string> known_languages = default_languages();
  std::set<std::string> languages;         // filter; empty means every known language
  std::vector<TopicKey> topics;            // empty: derived from the data
  std::optional<DayRange> range;           // absent: inferred from the data
  std::vector<DetectorConfig> detectors;   // empty: all five models at stock defaults
  std::string output_dir = "out";
  std::optional<TuneGrid> grid;
  SynthSpec synth;
  std::string synth_events_out;  // default: <output_dir>/synth_events.ndjson
  std::string synth_silver_out;  // default: <output_dir>/synth_silver.csv

  std::set<std::string> effective_languages() const {
    const std::set<std::string>& filter = languages.empty() ? known_languages : languages;
    for (const std::string& lang : filter)
      if (!known_languages.contains(lang))
        throw DataError("language filter contains unknown code '" + lang + "'");
    return filter;
  }

  std::vector<DetectorConfig> effective_detectors() const {
    std::vector<DetectorConfig> configs = detectors;
    if (configs.empty())
      for (Model m : {Model::C2, Model::C3, Model::W2, Model::Fstat, Model::Ewma})
        configs.push_back(DetectorConfig::defaults_for(m));
    std::set<std::string> seen;
    for (const DetectorConfig& cfg : configs) {
      cfg.validate();
      if (!seen.insert(std::string(to_string(cfg.model))).second)
        throw DataError("duplicate detector model " + std::string(to_string(cfg.model)));
    }
    return configs;
  }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization

inline json detector_config_to_json(const DetectorConfig& cfg) {
  json obj;
  obj["model"] = std::string(to_string(cfg.model));
  obj["threshold"] = cfg.threshold;
  obj["k"] = cfg.k;
  obj["lambda"] = cfg.lambda;
  obj["min_sigma"] = cfg.min_sigma;
  obj["baseline_len"] = cfg.baseline_len;
  obj["guard_len"] = cfg.guard_len;
  obj["fstat_test_len"] = cfg.fstat_test_len;
  obj["fstat_combine"] = std::string(to_string(cfg.fstat_combine));
  obj["c3_gate_sigma"] = cfg.c3_gate_sigma;
  return obj;
}

inline DetectorConfig detector_config_from_json(const json& obj) {
  if (!obj.is_object() || !obj.contains("model"))
    throw DataError("detector config needs a 'model' field");
  const auto model = model_from_string(obj["model"].get<std::string>());
  if (!model) throw DataError("unknown model '" + obj["model"].get<std::string>() + "'");
  DetectorConfig cfg = DetectorConfig::defaults_for(*model);
  if (obj.contains("threshold")) cfg.threshold = obj["threshold"].get<double>();
  if (obj.contains("k")) cfg.k = obj["k"].get<double>();
  if (obj.contains("lambda")) cfg.lambda = obj["lambda"].get<double>();
  if (obj.contains("min_sigma")) cfg.min_sigma = obj["min_sigma"].get<double>();
  if (obj.contains("baseline_len")) cfg.baseline_len = obj["baseline_len"].get<int>();
  if (obj.contains("guard_len")) cfg.guard_len = obj["guard_len"].get<int>();
  if (obj.contains("fstat_test_len")) cfg.fstat_test_len = obj["fstat_test_len"].get<int>();
  if (obj.contains("fstat_combine")) {
    const auto combine = fstat_combine_from_string(obj["fstat_combine"].get<std::string>());
    if (!combine)
      throw DataError("unknown fstat_combine '" + obj["fstat_combine"].get<std::string>() + "'");
    cfg.fstat_combine = *combine;
  }
  if (obj.contains("c3_gate_sigma")) cfg.c3_gate_sigma = obj["c3_gate_sigma"].get<double>();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid detector config: ") + e.what());
  }
  return cfg;
}

namespace detail {

inline Day parse_day_or_throw(const std::string& text, const std::string& what) {
  const auto day = Day::parse(text);
  if (!day) throw DataError("bad " + what + " '" + text + "' (expected YYYY-MM-DD)");
  return *day;
}

inline DayRange range_from_json(const json& obj) {
  if (!obj.is_object() || !obj.contains("first") || !obj.contains("last"))
    throw DataError("range needs 'first' and 'last' dates");
  const DayRange range{parse_day_or_throw(obj["first"].get<std::string>(), "range first"),
                       parse_day_or_throw(obj["last"].get<std::string>(), "range last")};
  if (range.empty()) throw DataError("range is empty");
  return range;
}

inline std::set<std::string> folded_set(const json& arr, const char* what) {
  if (!arr.is_array()) throw DataError(std::string(what) + " must be an array");
  std::set<std::string> out;
  for (const auto& v : arr) out.insert(fold_key(v.get<std::string>()));
  return out;
}

}  // namespace detail

inline RunManifest manifest_from_json(const json& obj) {
  RunManifest m;
  if (!obj.is_object()) throw DataError("manifest must be a JSON object");
  if (obj.contains("events")) m.events_path = obj["events"].get<std::string>();
  if (obj.contains("events_format")) {
    const std::string f = obj["events_format"].get<std::string>();
    if (f == "ndjson") m.events_format = EventFormat::ndjson;
    else if (f == "csv") m.events_format = EventFormat::csv;
    else throw DataError("events_format must be ndjson or csv");
  }
  if (obj.contains("silver")) m.silver_path = obj["silver"].get<std::string>();
  if (obj.contains("alarms")) m.alarms_dir = obj["alarms"].get<std::string>();
  if (obj.contains("known_languages"))
    m.known_languages = detail::folded_set(obj["known_languages"], "known_languages");
  if (obj.contains("languages"))
    m.languages = detail::folded_set(obj["languages"], "languages");
  if (obj.contains("topics")) {
    for (const auto& t : obj["topics"])
      m.topics.push_back({fold_key(t.at("disease").get<std::string>()),
                          fold_key(t.at("country").get<std::string>())});
  }
  if (obj.contains("range")) m.range = detail::range_from_json(obj["range"]);
  if (obj.contains("detectors"))
    for (const auto& d : obj["detectors"]) m.detectors.push_back(detector_config_from_json(d));
  if (obj.contains("output_dir")) m.output_dir = obj["output_dir"].get<std::string>();
  if (obj.contains("grid")) {
    const auto& g = obj["grid"];
    TuneGrid grid;
    if (g.contains("model")) {
      const auto model = model_from_string(g["model"].get<std::string>());
      if (!model) throw DataError("unknown grid model");
      grid.model = *model;
    }
    if (g.contains("thresholds"))
      grid.thresholds = g["thresholds"].get<std::vector<double>>();
    if (g.contains("lambdas")) grid.lambdas = g["lambdas"].get<std::vector<double>>();
    m.grid = grid;
  }
  if (obj.contains("synth")) {
    const auto& s = obj["synth"];
    if (s.contains("disease")) m.synth.topic.disease = fold_key(s["disease"].get<std::string>());
    if (s.contains("country")) m.synth.topic.country = fold_key(s["country"].get<std::string>());
    if (s.contains("range")) m.synth.range = detail::range_from_json(s["range"]);
    if (s.contains("burst_day"))
      m.synth.burst_day = detail::parse_day_or_throw(s["burst_day"].get<std::string>(), "burst day");
    if (s.contains("burst_len")) m.synth.burst_len = s["burst_len"].get<int>();
    if (s.contains("weekend_outage")) m.synth.weekend_outage = s["weekend_outage"].get<bool>();
    if (s.contains("seed")) m.synth.seed = s["seed"].get<std::uint64_t>();
    if (s.contains("channels")) {
      m.synth.channels.clear();
      for (const auto& c : s["channels"]) {
        SynthChannel channel;
        channel.language = fold_key(c.at("language").get<std::string>());
        if (c.contains("background_rate"))
          channel.background_rate = c["background_rate"].get<double>();
        if (c.contains("burst_magnitude"))
          channel.burst_magnitude = c["burst_magnitude"].get<double>();
        m.synth.channels.push_back(std::move(channel));
      }
    }
    if (s.contains("events_out")) m.synth_events_out = s["events_out"].get<std::string>();
    if (s.contains("silver_out")) m.synth_silver_out = s["silver_out"].get<std::string>();
  }
  return m;
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw DataError("manifest '" + path + "' is not valid JSON");
  try {
    return manifest_from_json(obj);
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces

/// One topic ready for detection: purged aggregate plus the raw
/// per-language buckets (kept for language attribution in alerts).
struct PreparedStream {
  TopicKey topic;
  CountSeries series;
  std::vector<CountSeries> per_language;
  std::vector<SilverReport> reports;
};

namespace detail {

inline std::vector<EventFrame> load_events(const RunManifest& m, std::ostream& diag) {
  if (m.events_path.empty()) throw DataError("no events path given");
  std::ifstream in(m.events_path);
  if (!in) throw DataError("cannot open events file '" + m.events_path + "'");
  ParseOptions opts;
  opts.format = m.events_format;
  opts.languages = m.known_languages;
  opts.range = m.range;
  const ParseResult parsed = parse_event_frames(in, opts);
  for (const ParseError& e : parsed.errors)
    diag << m.events_path << ":" << e.line << ": " << e.message << "\n";
  return parsed.frames;
}

inline std::vector<SilverReport> load_silver(const RunManifest& m, std::ostream& diag) {
  if (m.silver_path.empty()) throw DataError("no silver-standard path given");
  std::ifstream in(m.silver_path);
  if (!in) throw DataError("cannot open silver file '" + m.silver_path + "'");
  const SilverParseResult parsed = parse_silver_csv(in);
  for (const ParseError& e : parsed.errors)
    diag << m.silver_path << ":" << e.line << ": " << e.message << "\n";
  return parsed.reports;
}

inline DayRange resolve_range(const RunManifest& m,
                              std::span<const EventFrame> frames) {
  if (m.range) return *m.range;
  if (frames.empty()) throw DataError("cannot infer a date range from empty events");
  Day lo = frames.front().observed_day, hi = lo;
  for (const EventFrame& f : frames) {
    lo = std::min(lo, f.observed_day);
    hi = std::max(hi, f.observed_day);
  }
  return {lo, hi};
}

inline std::vector<TopicKey> resolve_topics(const RunManifest& m,
                                            std::span<const EventFrame> frames) {
  if (!m.topics.empty()) return m.topics;
  std::set<TopicKey> topics;
  for (const EventFrame& f : frames) topics.insert({f.disease, f.country});
  return {topics.begin(), topics.end()};
}

inline PreparedStream prepare_stream(std::span<const EventFrame> frames,
                                     const TopicKey& topic,
                                     const std::set<std::string>& languages,
                                     DayRange range) {
  PreparedStream stream;
  stream.topic = topic;
  for (const std::string& lang : languages)
    stream.per_language.push_back(bucket_counts(frames, topic, {lang}, range));
  stream.series = purge_singletons(aggregate_languages(stream.per_language));
  return stream;
}

/// Attaches in-range silver reports to their streams. Reports whose topic
/// has no stream, or whose day is out of range, are warned about and skipped.
inline void attach_reports(std::vector<PreparedStream>& streams,
                           std::span<const SilverReport> reports, DayRange range,
                           std::ostream& diag) {
  std::map<TopicKey, PreparedStream*> by_topic;
  for (PreparedStream& s : streams) by_topic[s.topic] = &s;
  for (const SilverReport& r : reports) {
    const auto it = by_topic.find(r.topic);
    if (it == by_topic.end()) {
      diag << "warning: silver topic " << r.topic.disease << "/" << r.topic.country
           << " has no event stream; skipped\n";
      continue;
    }
    if (!range.contains(r.report_day)) {
      diag << "warning: silver report " << r.topic.disease << "/" << r.topic.country
           << " on " << r.report_day.to_string() << " outside the range; skipped\n";
      continue;
    }
    it->second->reports.push_back(r);
  }
  for (PreparedStream& s : streams) std::sort(s.reports.begin(), s.reports.end());
}

inline std::string safe_name(std::string_view raw) {
  std::string out;
  for (char c : raw)
    out.push_back((std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
                      ? c
                      : '-');
  return out;
}

inline std::string stream_file_stem(const DetectorConfig& cfg, const TopicKey& topic) {
  return std::string(to_string(cfg.model)) + "__" + safe_name(topic.disease) + "__" +
         safe_name(topic.country);
}

inline void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << content;
}

inline std::string alarm_series_ndjson(const AlarmSeries& alarms, Model model) {
  std::string out;
  for (const AlarmDay& d : alarms.days) {
    json obj;
    obj["alarm"] = d.alarm;
    obj["country"] = alarms.topic.country;
    obj["day"] = d.day.to_string();
    obj["disease"] = alarms.topic.disease;
    obj["model"] = std::string(to_string(model));
    obj["statistic"] = d.statistic ? json(*d.statistic) : json(nullptr);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics report rendering

inline std::string fmt2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string opt2(const std::optional<double>& v) {
  return v ? fmt2(*v) : std::string("N/A");
}

inline std::string metric_cell(const MetricValue& m) {
  if (!m.value) return "N/A";
  std::string cell = fmt2(*m.value);
  if (m.ci) cell += " (" + fmt2(m.ci->lo) + "," + fmt2(m.ci->hi) + ")";
  return cell;
}

struct ReportRow {
  DetectorConfig cfg;
  EvalResult eval;
};

struct ReportContext {
  std::set<std::string> language_filter;
  long streams = 0;
  long silver_reports = 0;
};

inline std::string render_metrics_table(std::span<const ReportRow> rows,
                                        const ReportContext& ctx) {
  std::ostringstream out;
  auto col = [&](const std::string& text, int width) {
    out << text;
    for (int i = static_cast<int>(text.size()); i < width; ++i) out << ' ';
  };
  col("model", 8);
  col("Se", 19);
  col("Sp", 19);
  col("PPV", 19);
  col("NPV", 19);
  col("Alarms^A", 10);
  col("Days^B", 8);
  out << "F1\n";
  for (const ReportRow& row : rows) {
    col(std::string(to_string(row.cfg.model)), 8);
    col(metric_cell(row.eval.se), 19);
    col(metric_cell(row.eval.sp), 19);
    col(metric_cell(row.eval.ppv), 19);
    col(metric_cell(row.eval.npv), 19);
    col(fmt2(row.eval.alarm_rate_per_100), 10);
    col(opt2(row.eval.timeliness_days), 8);
    out << opt2(row.eval.f1) << "\n";
  }
  long days = rows.empty() ? 0 : rows.front().eval.counts.surveillance_days;
  out << "# streams: " << ctx.streams << "  surveillance_days: " << days
      << "  silver_reports: " << ctx.silver_reports << "  languages:";
  for (const std::string& lang : ctx.language_filter) out << " " << lang;
  out << "\n";
  out << "# ^A alarm days per 100 surveillance days\n";
  out << "# ^B mean days the earliest in-window alarm precedes its silver report\n";
  out << "# 95% CI (Wilson score) in parentheses; N/A = zero denominator\n";
  return out.str();
}

inline json metrics_to_json(std::span<const ReportRow> rows, const ReportContext& ctx) {
  json doc;
  doc["languages"] = std::vector<std::string>(ctx.language_filter.begin(),
                                              ctx.language_filter.end());
  doc["streams"] = ctx.streams;
  doc["silver_reports"] = ctx.silver_reports;
  doc["surveillance_days"] =
      rows.empty() ? 0 : rows.front().eval.counts.surveillance_days;
  doc["rows"] = json::array();
  auto metric_json = [](const MetricValue& m) -> json {
    if (!m.value) return nullptr;
    json obj;
    obj["value"] = *m.value;
    if (m.ci) obj["ci"] = {m.ci->lo, m.ci->hi};
    return obj;
  };
  for (const ReportRow& row : rows) {
    json r;
    r["model"] = std::string(to_string(row.cfg.model));
    r["threshold"] = row.cfg.threshold;
    r["se"] = metric_json(row.eval.se);
    r["sp"] = metric_json(row.eval.sp);
    r["ppv"] = metric_json(row.eval.ppv);
    r["npv"] = metric_json(row.eval.npv);
    r["f1"] = row.eval.f1 ? json(*row.eval.f1) : json(nullptr);
    r["alarm_days"] = row.eval.alarm_days;
    r["alarm_rate_per_100"] = row.eval.alarm_rate_per_100;
    r["timeliness_days"] =
        row.eval.timeliness_days ? json(*row.eval.timeliness_days) : json(nullptr);
    r["confusion"] = {{"tp", row.eval.counts.tp},
                      {"fp", row.eval.counts.fp},
                      {"fn", row.eval.counts.fn},
                      {"tn", row.eval.counts.tn}};
    doc["rows"].push_back(std::move(r));
  }
  return doc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

/// Ingest events, run every configured detector over every topic, and write
/// alarm series plus alert feeds. Topic/model pairs run on a worker pool;
/// files are written in a deterministic order regardless of completion.
inline int cmd_detect(const RunManifest& manifest, std::ostream& diag) {
  const auto frames = detail::load_events(manifest, diag);
  fs::create_directories(manifest.output_dir);
  if (frames.empty() && !manifest.range) {
    diag << "no events parsed; nothing to detect\n";
    return 0;
  }
  const DayRange range = detail::resolve_range(manifest, frames);
  const auto topics = detail::resolve_topics(manifest, frames);
  const auto languages = manifest.effective_languages();
  const auto configs = manifest.effective_detectors();

  std::vector<std::future<PreparedStream>> prep;
  prep.reserve(topics.size());
  for (const TopicKey& topic : topics)
    prep.push_back(std::async(std::launch::async, [&, topic] {
      return detail::prepare_stream(frames, topic, languages, range);
    }));
  std::vector<PreparedStream> streams;
  streams.reserve(topics.size());
  for (auto& f : prep) streams.push_back(f.get());

  struct Output {
    std::string alarms_ndjson;
    std::string feed_ndjson;
    std::string feed_atom;
  };
  std::vector<std::future<Output>> jobs;
  for (const DetectorConfig& cfg : configs)
    for (const PreparedStream& stream : streams)
      jobs.push_back(std::async(std::launch::async, [&cfg, &stream] {
        const AlarmSeries alarms = run_detector(stream.series, cfg);
        const auto records = emit_alerts(alarms, stream.series, cfg, stream.per_language);
        return Output{detail::alarm_series_ndjson(alarms, cfg.model),
                      render_feed_ndjson(records), render_feed_atom(records)};
      }));

  std::size_t job = 0;
  for (const DetectorConfig& cfg : configs) {
    for (const PreparedStream& stream : streams) {
      const Output out = jobs[job++].get();
      const std::string stem = detail::stream_file_stem(cfg, stream.topic);
      const fs::path base(manifest.output_dir);
      detail::write_file(base / "alarms" / (stem + ".ndjson"), out.alarms_ndjson);
      detail::write_file(base / "feed" / (stem + ".ndjson"), out.feed_ndjson);
      detail::write_file(base / "feed" / (stem + ".atom"), out.feed_atom);
    }
  }
  diag << "detect: " << streams.size() << " topic(s) x " << configs.size()
       << " model(s) over " << range.length() << " days -> " << manifest.output_dir
       << "\n";
  return 0;
}

namespace detail {

/// Reads the alarm NDJSON files under `dir` and regroups them into one
/// AlarmSeries per (model, topic). Lines are self-describing, so the file
/// layout does not matter.
inline std::map<std::string, std::map<TopicKey, AlarmSeries>> load_alarm_groups(
    const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("alarms dir '" + dir + "' not found");
  struct Entry {
    Day day;
    std::optional<double> statistic;
    bool alarm;
  };
  std::map<std::string, std::map<TopicKey, std::vector<Entry>>> grouped;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ndjson")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& path : files) {
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (epialert::detail::trim(line).empty()) continue;
      json obj = json::parse(line, nullptr, false);
      if (obj.is_discarded() || !obj.is_object() || !obj.contains("model") ||
          !obj.contains("day") || !obj.contains("alarm"))
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": malformed alarm record");
      const auto day = Day::parse(obj["day"].get<std::string>());
      if (!day)
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad day");
      Entry e{*day, std::nullopt, obj["alarm"].get<bool>()};
      if (obj.contains("statistic") && obj["statistic"].is_number())
        e.statistic = obj["statistic"].get<double>();
      const TopicKey topic{fold_key(obj.at("disease").get<std::string>()),
                           fold_key(obj.at("country").get<std::string>())};
      grouped[obj["model"].get<std::string>()][topic].push_back(e);
    }
  }

  std::map<std::string, std::map<TopicKey, AlarmSeries>> result;
  for (auto& [model, topics] : grouped) {
    for (auto& [topic, entries] : topics) {
      std::sort(entries.begin(), entries.end(),
                [](const Entry& a, const Entry& b) { return a.day < b.day; });
      AlarmSeries series;
      series.topic = topic;
      series.start_day = entries.front().day;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].day != series.start_day + static_cast<int>(i))
          throw DataError("alarm series for " + topic.disease + "/" + topic.country +
                          " (" + model + ") has gaps or duplicate days");
        series.days.push_back({entries[i].day, entries[i].statistic, entries[i].alarm});
      }
      result[model][topic] = std::move(series);
    }
  }
  return result;
}

}  // namespace detail

/// Score alarms against the silver standard and write the metrics report
/// (text table + JSON). Alarms come either from the events file (fused run)
/// or from a staged cmd_detect output directory; both give identical
/// reports for the same manifest.
inline int cmd_evaluate(const RunManifest& manifest, std::ostream& diag) {
  const auto silver = detail::load_silver(manifest, diag);
  const auto configs = manifest.effective_detectors();

  struct ScoredConfig {
    DetectorConfig cfg;
    std::vector<std::pair<AlarmSeries, std::vector<SilverReport>>> streams;
  };
  std::vector<ScoredConfig> scored;
  long stream_count = 0;
  long attached_reports = 0;

  if (!manifest.alarms_dir.empty()) {
    const auto groups = detail::load_alarm_groups(manifest.alarms_dir);
    for (const DetectorConfig& cfg : configs) {
      const auto it = groups.find(std::string(to_string(cfg.model)));
      if (it == groups.end() || it->second.empty())
        throw DataError("no alarm files for model " +
                        std::string(to_string(cfg.model)) + " under '" +
                        manifest.alarms_dir + "'");
      ScoredConfig sc{cfg, {}};
      // Reuse the event-side report attachment by building placeholder streams.
      std::vector<PreparedStream> placeholders;
      DayRange range = it->second.begin()->second.range();
      if (manifest.range) range = *manifest.range;
      for (const auto& [topic, alarms] : it->second) {
        if (alarms.range() != range)
          throw DataError("alarm series ranges disagree for model " +
                          std::string(to_string(cfg.model)));
        PreparedStream p;
        p.topic = topic;
        placeholders.push_back(std::move(p));
      }
      detail::attach_reports(placeholders, silver, range, diag);
      std::size_t i = 0;
      for (const auto& [topic, alarms] : it->second)
        sc.streams.emplace_back(alarms, placeholders[i++].reports);
      scored.push_back(std::move(sc));
    }
  } else {
    const auto frames = detail::load_events(manifest, diag);
    if (frames.empty() && !manifest.range) throw DataError("no events parsed");
    const DayRange range = detail::resolve_range(manifest, frames);
    const auto topics = detail::resolve_topics(manifest, frames);
    const auto languages = manifest.effective_languages();
    std::vector<PreparedStream> streams;
    for (const TopicKey& topic : topics)
      streams.push_back(detail::prepare_stream(frames, topic, languages, range));
    detail::attach_reports(streams, silver, range, diag);
    for (const DetectorConfig& cfg : configs) {
      ScoredConfig sc{cfg, {}};
      std::vector<std::future<AlarmSeries>> jobs;
      for (const PreparedStream& s : streams)
        jobs.push_back(std::async(std::launch::async,
                                  [&] { return run_detector(s.series, cfg); }));
      for (std::size_t i = 0; i < streams.size(); ++i)
        sc.streams.emplace_back(jobs[i].get(), streams[i].reports);
      scored.push_back(std::move(sc));
    }
  }

  std::vector<detail::ReportRow> rows;
  for (const ScoredConfig& sc : scored) {
    if (sc.streams.empty()) throw DataError("no evaluable streams");
    rows.push_back({sc.cfg, evaluate_alarm_streams(sc.streams)});
  }
  stream_count = static_cast<long>(scored.front().streams.size());
  for (const auto& [alarms, reports] : scored.front().streams)
    attached_reports += static_cast<long>(reports.size());

  detail::ReportContext ctx;
  ctx.language_filter = manifest.effective_languages();
  ctx.streams = stream_count;
  ctx.silver_reports = attached_reports;

  const std::string table = detail::render_metrics_table(rows, ctx);
  const json doc = detail::metrics_to_json(rows, ctx);
  fs::create_directories(manifest.output_dir);
  detail::write_file(fs::path(manifest.output_dir) / "metrics.txt", table);
  detail::write_file(fs::path(manifest.output_dir) / "metrics.json",
                     doc.dump(2) + "\n");
  diag << table;
  return 0;
}

/// Grid-search detector thresholds (and lambdas for EWMA) on held-out
/// streams; writes the chosen config and the per-point report.
inline int cmd_tune(const RunManifest& manifest, std::ostream& diag) {
  if (!manifest.grid) throw DataError("tune needs a grid (manifest 'grid' or --model)");
  TuneGrid grid = *manifest.grid;
  std::sort(grid.thresholds.begin(), grid.thresholds.end());
  grid.thresholds.erase(std::unique(grid.thresholds.begin(), grid.thresholds.end()),
                        grid.thresholds.end());
  std::sort(grid.lambdas.begin(), grid.lambdas.end());
  grid.lambdas.erase(std::unique(grid.lambdas.begin(), grid.lambdas.end()),
                     grid.lambdas.end());
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid grid: ") + e.what());
  }

  const auto silver = detail::load_silver(manifest, diag);
  const auto frames = detail::load_events(manifest, diag);
  if (frames.empty() && !manifest.range) throw DataError("no events parsed");
  const DayRange range = detail::resolve_range(manifest, frames);
  const auto topics = detail::resolve_topics(manifest, frames);
  const auto languages = manifest.effective_languages();
  std::vector<PreparedStream> prepared;
  for (const TopicKey& topic : topics)
    prepared.push_back(detail::prepare_stream(frames, topic, languages, range));
  detail::attach_reports(prepared, silver, range, diag);

  std::vector<EvalStream> held_out;
  for (PreparedStream& p : prepared)
    held_out.push_back({std::move(p.series), std::move(p.reports)});

  DetectorConfig base = DetectorConfig::defaults_for(grid.model);
  for (const DetectorConfig& cfg : manifest.detectors)
    if (cfg.model == grid.model) base = cfg;

  TuneResult result;
  try {
    result = grid_search(held_out, grid, base);
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }

  json report;
  report["model"] = std::string(to_string(grid.model));
  report["points"] = json::array();
  for (const TunePoint& p : result.points) {
    json point;
    point["threshold"] = p.threshold;
    point["lambda"] = p.lambda;
    point["f1"] = p.f1 ? json(*p.f1) : json(nullptr);
    point["timeliness_days"] =
        p.timeliness_days ? json(*p.timeliness_days) : json(nullptr);
    point["alarm_rate_per_100"] = p.alarm_rate_per_100;
    report["points"].push_back(std::move(point));
  }
  report["chosen"] = detector_config_to_json(result.chosen);

  fs::create_directories(manifest.output_dir);
  detail::write_file(fs::path(manifest.output_dir) / "tuned_config.json",
                     detector_config_to_json(result.chosen).dump(2) + "\n");
  detail::write_file(fs::path(manifest.output_dir) / "tuning_report.json",
                     report.dump(2) + "\n");
  diag << "tune: chose threshold " << result.chosen.threshold;
  if (grid.model == Model::Ewma) diag << ", lambda " << result.chosen.lambda;
  diag << " for " << to_string(grid.model) << "\n";
  return 0;
}

/// Generate a synthetic event stream plus its silver timeline.
inline int cmd_synth(const RunManifest& manifest, std::ostream& diag) {
  try {
    manifest.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  const SynthOutput out = synth_events(manifest.synth);
  const fs::path events_path = manifest.synth_events_out.empty()
                                   ? fs::path(manifest.output_dir) / "synth_events.ndjson"
                                   : fs::path(manifest.synth_events_out);
  const fs::path silver_path = manifest.synth_silver_out.empty()
                                   ? fs::path(manifest.output_dir) / "synth_silver.csv"
                                   : fs::path(manifest.synth_silver_out);
  detail::write_file(events_path, render_synth_events_ndjson(out));
  detail::write_file(silver_path, render_silver_csv(out.reports));
  diag << "synth: " << out.frames.size() << " frames, " << out.reports.size()
       << " silver report(s) -> " << events_path.string() << ", "
       << silver_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing

namespace detail {

inline std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 1 usage error, 2 data error.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"burst alerting for multilingual news-event count streams"};
  app.require_subcommand(1);

  std::string manifest_path;
  std::string events_path, events_format, silver_path, alarms_dir, output_dir;
  std::string first_day, last_day, languages_csv, models_csv;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest_path, "run manifest (JSON)");
    cmd->add_option("--out", output_dir, "output directory");
    cmd->add_option("--languages", languages_csv, "language filter, e.g. en,es");
    cmd->add_option("--first", first_day, "range start (YYYY-MM-DD)");
    cmd->add_option("--last", last_day, "range end (YYYY-MM-DD)");
  };

  CLI::App* detect = app.add_subcommand("detect", "run detectors over an event file");
  add_common(detect);
  detect->add_option("--events", events_path, "event frames (NDJSON or CSV)");
  detect->add_option("--events-format", events_format, "ndjson|csv");
  detect->add_option("--models", models_csv, "models to run, e.g. C2,EWMA");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score alarms against silver reports");
  add_common(evaluate);
  evaluate->add_option("--events", events_path, "event frames (fused run)");
  evaluate->add_option("--events-format", events_format, "ndjson|csv");
  evaluate->add_option("--alarms", alarms_dir, "staged alarm directory from detect");
  evaluate->add_option("--silver", silver_path, "silver-standard CSV");
  evaluate->add_option("--models", models_csv, "models to score");

  CLI::App* tune = app.add_subcommand("tune", "grid-search a detector threshold");
  add_common(tune);
  tune->add_option("--events", events_path, "held-out event frames");
  tune->add_option("--events-format", events_format, "ndjson|csv");
  tune->add_option("--silver", silver_path, "held-out silver CSV");
  std::string tune_model, thresholds_csv, lambdas_csv;
  tune->add_option("--model", tune_model, "model to tune");
  tune->add_option("--thresholds", thresholds_csv, "threshold candidates, e.g. 0.1,0.2");
  tune->add_option("--lambdas", lambdas_csv, "lambda candidates (EWMA)");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic event stream");
  add_common(synth);
  std::string disease, country, burst_day, events_out, silver_out;
  double background = 0.0, magnitude = 0.0;
  int burst_len = 0;
  std::uint64_t seed = 0;
  bool weekend_outage = false;
  synth->add_option("--disease", disease, "topic disease key");
  synth->add_option("--country", country, "topic country key");
  auto* bg_opt =
      synth->add_option("--background", background, "mean background events/day per language");
  synth->add_option("--burst-day", burst_day, "first burst day (YYYY-MM-DD)");
  auto* len_opt = synth->add_option("--burst-len", burst_len, "burst length in days");
  auto* mag_opt =
      synth->add_option("--burst-magnitude", magnitude, "extra events/day per language");
  synth->add_flag("--weekend-outage", weekend_outage, "zero out Saturday/Sunday counts");
  auto* seed_opt = synth->add_option("--seed", seed, "RNG seed");
  synth->add_option("--events-out", events_out, "output events path");
  synth->add_option("--silver-out", silver_out, "output silver path");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunManifest manifest;
    if (!manifest_path.empty()) manifest = load_manifest(manifest_path);
    if (!events_path.empty()) manifest.events_path = events_path;
    if (!events_format.empty()) {
      if (events_format == "ndjson") manifest.events_format = EventFormat::ndjson;
      else if (events_format == "csv") manifest.events_format = EventFormat::csv;
      else throw DataError("events format must be ndjson or csv");
    }
    if (!silver_path.empty()) manifest.silver_path = silver_path;
    if (!alarms_dir.empty()) manifest.alarms_dir = alarms_dir;
    if (!output_dir.empty()) manifest.output_dir = output_dir;
    if (!languages_csv.empty()) {
      manifest.languages.clear();
      for (const std::string& lang : detail::split_list(languages_csv))
        manifest.languages.insert(fold_key(lang));
    }
    if (!first_day.empty() || !last_day.empty()) {
      if (first_day.empty() || last_day.empty())
        throw DataError("--first and --last must be given together");
      manifest.range = DayRange{detail::parse_day_or_throw(first_day, "--first"),
                                detail::parse_day_or_throw(last_day, "--last")};
      if (manifest.range->empty()) throw DataError("--first is after --last");
    }
    if (!models_csv.empty()) {
      manifest.detectors.clear();
      for (const std::string& token : detail::split_list(models_csv)) {
        const auto model = model_from_string(token);
        if (!model) throw DataError("unknown model '" + token + "'");
        manifest.detectors.push_back(DetectorConfig::defaults_for(*model));
      }
    }

    if (detect->parsed()) return cmd_detect(manifest, err);
    if (evaluate->parsed()) return cmd_evaluate(manifest, err);
    if (tune->parsed()) {
      if (!tune_model.empty()) {
        const auto model = model_from_string(tune_model);
        if (!model) throw DataError("unknown model '" + tune_model + "'");
        TuneGrid grid = manifest.grid && manifest.grid->model == *model
                            ? *manifest.grid
                            : TuneGrid::defaults_for(*model);
        grid.model = *model;
        if (!thresholds_csv.empty()) {
          grid.thresholds.clear();
          for (const std::string& v : detail::split_list(thresholds_csv))
            grid.thresholds.push_back(std::stod(v));
        }
        if (!lambdas_csv.empty()) {
          grid.lambdas.clear();
          for (const std::string& v : detail::split_list(lambdas_csv))
            grid.lambdas.push_back(std::stod(v));
        }
        manifest.grid = grid;
      } else if (manifest.grid) {
        if (!thresholds_csv.empty()) {
          manifest.grid->thresholds.clear();
          for (const std::string& v : detail::split_list(thresholds_csv))
            manifest.grid->thresholds.push_back(std::stod(v));
        }
        if (!lambdas_csv.empty()) {
          manifest.grid->lambdas.clear();
          for (const std::string& v : detail::split_list(lambdas_csv))
            manifest.grid->lambdas.push_back(std::stod(v));
        }
      }
      return cmd_tune(manifest, err);
    }
    if (synth->parsed()) {
      if (!disease.empty()) manifest.synth.topic.disease = fold_key(disease);
      if (!country.empty()) manifest.synth.topic.country = fold_key(country);
      if (manifest.range) manifest.synth.range = *manifest.range;
      if (!burst_day.empty())
        manifest.synth.burst_day = detail::parse_day_or_throw(burst_day, "--burst-day");
      if (len_opt->count() > 0) manifest.synth.burst_len = burst_len;
      if (seed_opt->count() > 0) manifest.synth.seed = seed;
      if (weekend_outage) manifest.synth.weekend_outage = true;
      if (!languages_csv.empty() || bg_opt->count() > 0 || mag_opt->count() > 0) {
        std::vector<std::string> langs;
        if (!languages_csv.empty()) {
          for (const std::string& lang : detail::split_list(languages_csv))
            langs.push_back(fold_key(lang));
        } else {
          for (const SynthChannel& c : manifest.synth.channels)
            langs.push_back(c.language);
        }
        const double bg = bg_opt->count() > 0
                              ? background
                              : manifest.synth.channels.front().background_rate;
        const double mag = mag_opt->count() > 0
                               ? magnitude
                               : manifest.synth.channels.front().burst_magnitude;
        manifest.synth.channels.clear();
        for (const std::string& lang : langs)
          manifest.synth.channels.push_back({lang, bg, mag});
      }
      if (!events_out.empty()) manifest.synth_events_out = events_out;
      if (!silver_out.empty()) manifest.synth_silver_out = silver_out;
      return cmd_synth(manifest, err);
    }
    err << "no subcommand given\n";
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

inline int run_main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args));
}

}  // namespace epialert::cli
