#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ccf/data/dataset.hpp"
#include "ccf/errors.hpp"

namespace ccf {

/// On-disk dataset encodings.
///
/// delimited-text: first line "d,K"; then one sample per line,
///   "x_1,...,x_d,label" with 0-based integer labels.
/// raw-matrix: no header; whitespace-separated numbers, one sample per line,
///   label in the last column. K is inferred as max(label) + 1 unless given.
/// Blank lines and lines starting with '#' are ignored by both readers.
enum class TabularFormat { delimited_text, raw_matrix };

inline TabularFormat parse_tabular_format(const std::string& s) {
  if (s == "delimited-text" || s == "csv") return TabularFormat::delimited_text;
  if (s == "raw-matrix") return TabularFormat::raw_matrix;
  throw InvalidParameter("unknown dataset format '" + s + "'");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, bool comma) {
  std::vector<std::string_view> out;
  if (comma) {
    std::size_t start = 0;
    for (;;) {
      const std::size_t pos = line.find(',', start);
      out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  } else {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      const std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
      if (i > start) out.push_back(line.substr(start, i - start));
    }
  }
  return out;
}

inline double parse_real(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("cannot parse number '" + std::string(s) + "'", line);
  }
  return v;
}

inline std::size_t parse_count(std::string_view s, std::size_t line, const char* what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(std::string("cannot parse ") + what + " '" + std::string(s) + "'", line);
  }
  return v;
}

inline bool skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

}  // namespace detail

inline Dataset read_tabular(std::istream& is, TabularFormat format,
                            std::optional<std::size_t> class_count = std::nullopt) {
  const bool comma = format == TabularFormat::delimited_text;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  std::size_t K = class_count.value_or(0);
  bool have_header = false;
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> label_lines;

  while (std::getline(is, line)) {
    ++line_no;
    if (detail::skippable(line)) continue;
    const auto fields = detail::split_fields(line, comma);
    if (comma && !have_header) {
      if (fields.size() != 2) throw ParseError("header must be 'dims,K'", line_no);
      dim = detail::parse_count(fields[0], line_no, "dimension");
      const std::size_t header_k = detail::parse_count(fields[1], line_no, "class count");
      if (!class_count) K = header_k;
      have_header = true;
      continue;
    }
    if (fields.size() < 2) throw ParseError("row needs at least one feature and a label", line_no);
    if (!dim) dim = fields.size() - 1;
    if (fields.size() != *dim + 1) {
      throw ParseError("expected " + std::to_string(*dim + 1) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t i = 0; i < *dim; ++i) values.push_back(detail::parse_real(fields[i], line_no));
    labels.push_back(detail::parse_count(fields.back(), line_no, "label"));
    label_lines.push_back(line_no);
  }

  if (format == TabularFormat::raw_matrix && !class_count) {
    for (std::size_t y : labels) K = std::max(K, y + 1);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= K) {
      throw ParseError("label " + std::to_string(labels[i]) + " out of range for " +
                           std::to_string(K) + " classes",
                       label_lines[i]);
    }
  }
  Dataset ds;
  const std::size_t n = labels.size();
  ds.inputs = Tensor({n, dim.value_or(0)}, std::move(values));
  ds.labels = std::move(labels);
  ds.class_count = K;
  return ds;
}

inline void write_tabular(std::ostream& os, const Dataset& ds,
                          TabularFormat format = TabularFormat::delimited_text) {
  const bool comma = format == TabularFormat::delimited_text;
  const char sep = comma ? ',' : ' ';
  const std::size_t d = ds.dim();
  if (comma) os << d << ',' << ds.class_count << '\n';
  char buf[64];
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto x = ds.inputs.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const auto res = std::to_chars(buf, buf + sizeof buf, x[i]);  // shortest round-trip form
      os.write(buf, res.ptr - buf);
      os << sep;
    }
    os << ds.labels[r] << '\n';
  }
}

inline Dataset load_tabular(const std::filesystem::path& path, TabularFormat format,
                            std::optional<std::size_t> class_count = std::nullopt) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open dataset " + path.string());
  Dataset ds = read_tabular(is, format, class_count);
  ds.split = path.filename().string();
  return ds;
}

inline void save_tabular(const std::filesystem::path& path, const Dataset& ds,
                         TabularFormat format = TabularFormat::delimited_text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_tabular(os, ds, format);
}

}  // namespace ccf
