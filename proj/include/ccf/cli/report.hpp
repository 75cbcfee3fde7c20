#pragma once

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccf/data/dataset.hpp"
#include "ccf/errors.hpp"

#ifndef CCF_VERSION
#define CCF_VERSION "unknown"
#endif

namespace ccf::cli {

using Json = nlohmann::ordered_json;

enum class OutputFormat { text, records };

inline OutputFormat parse_output_format(const std::string& s) {
  if (s == "text") return OutputFormat::text;
  if (s == "records") return OutputFormat::records;
  throw InvalidParameter("unknown output format '" + s + "' (expected text or records)");
}

/// Result of one command. `records` and `summary` depend only on the config
/// and seed; timestamps live in the metadata alone.
struct Report {
  std::string command;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::vector<Json> records;
  Json summary = Json::object();
  std::optional<bool> pass;  // set by commands that carry assertions
  std::string started, finished;

  std::string config_hash() const { return fnv1a_hex(config.dump()); }

  Json metadata() const {
    Json m;
    m["command"] = command;
    m["code_version"] = CCF_VERSION;
    m["config_hash"] = config_hash();
    m["seed"] = seed;
    m["started"] = started;
    m["finished"] = finished;
    m["config"] = config;
    return m;
  }

  Json summary_record() const {
    Json s;
    s["summary"] = summary;
    if (pass) s["summary"]["pass"] = *pass;
    return s;
  }
};

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_records(std::ostream& os, const Report& r) {
  for (const auto& rec : r.records) os << rec.dump() << '\n';
  os << r.summary_record().dump() << '\n';
}

/// Writes metadata.json and results.jsonl into `dir`.
inline void write_report(const std::filesystem::path& dir, const Report& r) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "metadata.json", std::ios::trunc);
    if (!os) throw Error("cannot write " + (dir / "metadata.json").string());
    os << r.metadata().dump(2) << '\n';
  }
  std::ofstream os(dir / "results.jsonl", std::ios::trunc);
  if (!os) throw Error("cannot write " + (dir / "results.jsonl").string());
  write_records(os, r);
}

/// Reads a report written by `write_report`. The last record must be the summary.
inline Report read_report(const std::filesystem::path& dir) {
  Report r;
  {
    std::ifstream is(dir / "metadata.json");
    if (!is) throw Error("cannot open " + (dir / "metadata.json").string());
    Json m;
    try {
      m = Json::parse(is);
      r.command = m.at("command").get<std::string>();
      r.seed = m.at("seed").get<std::uint64_t>();
      r.started = m.at("started").get<std::string>();
      r.finished = m.at("finished").get<std::string>();
      r.config = m.at("config");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("metadata.json: " + std::string(e.what()));
    }
  }
  std::ifstream is(dir / "results.jsonl");
  if (!is) throw Error("cannot open " + (dir / "results.jsonl").string());
  std::string line;
  std::size_t line_no = 0;
  bool have_summary = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (have_summary) throw ParseError("record after the summary", line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
    if (j.contains("summary")) {
      have_summary = true;
      r.summary = j["summary"];
      if (r.summary.contains("pass")) {
        r.pass = r.summary["pass"].get<bool>();
        r.summary.erase("pass");
      }
    } else {
      r.records.push_back(std::move(j));
    }
  }
  if (!have_summary) throw ParseError("results.jsonl has no summary record");
  return r;
}

namespace detail {

inline std::string scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(6) << v.get<double>();
    return os.str();
  }
  if (v.is_null()) return "-";
  return v.dump();
}

inline void flat_line(std::ostream& os, const Json& obj) {
  bool first = true;
  for (const auto& item : obj.items()) {
    if (!first) os << "  ";
    first = false;
    os << item.key() << '=';
    if (item.value().is_structured()) {
      os << item.value().dump();
    } else {
      os << scalar_text(item.value());
    }
  }
  os << '\n';
}

}  // namespace detail

/// Human-readable rendering: one line per record, then the summary.
inline void render_text(std::ostream& os, const Report& r) {
  os << r.command << "  seed=" << r.seed << "  config=" << r.config_hash() << '\n';
  for (const auto& rec : r.records) detail::flat_line(os, rec);
  if (!r.summary.empty()) {
    os << "summary: ";
    detail::flat_line(os, r.summary);
  }
  if (r.pass) os << (*r.pass ? "PASS" : "FAIL") << '\n';
}

inline void emit(std::ostream& os, const Report& r, OutputFormat f) {
  if (f == OutputFormat::records) {
    write_records(os, r);
  } else {
    render_text(os, r);
  }
}

/// NaN is not representable in JSON; store it as null.
inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace ccf::cli
