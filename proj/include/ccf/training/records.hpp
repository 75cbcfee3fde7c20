#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/model/checkpoint.hpp"
#include "ccf/training/train.hpp"

namespace ccf {

/// Tab-separated run record: a header line naming the columns, then one
/// line per epoch in this order. Reals use the shortest round-trip form;
/// an untracked CAS is written as "nan".
inline constexpr std::string_view kRunRecordHeader =
    "# epoch\tlr\ttrain_robust_loss\ttrain_robust_acc\ttest_clean_acc\ttest_robust_acc\tcas";

namespace detail {

inline void put_real(std::ostream& os, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  os.write(buf, res.ptr - buf);
}

}  // namespace detail

inline void write_run_records(std::ostream& os, const std::vector<EpochRow>& rows) {
  os << kRunRecordHeader << '\n';
  for (const auto& r : rows) {
    os << r.epoch;
    for (double v : {r.lr, r.train_robust_loss, r.train_robust_acc, r.test_clean_acc, r.test_robust_acc, r.cas}) {
      os << '\t';
      detail::put_real(os, v);
    }
    os << '\n';
  }
}

inline std::vector<EpochRow> read_run_records(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError("empty run record");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunRecordHeader) throw ParseError("unexpected run record header", line_no);
  std::vector<EpochRow> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != 7) throw ParseError("expected 7 fields", line_no);
    EpochRow r;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), r.epoch);
    if (ec != std::errc() || p != fields[0].data() + fields[0].size()) throw ParseError("bad epoch", line_no);
    double* targets[] = {&r.lr, &r.train_robust_loss, &r.train_robust_acc, &r.test_clean_acc,
                         &r.test_robust_acc, &r.cas};
    for (std::size_t k = 0; k < 6; ++k) {
      const auto f = fields[k + 1];
      auto [q, e] = std::from_chars(f.data(), f.data() + f.size(), *targets[k]);
      if (e != std::errc() || q != f.data() + f.size()) {
        throw ParseError("cannot parse number '" + std::string(f) + "'", line_no);
      }
    }
    if (r.epoch != rows.size()) throw ParseError("epochs must be contiguous from 0", line_no);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<std::pair<std::string, double>> row_metrics(const EpochRow& r) {
  return {{"test_robust_acc", r.test_robust_acc},
          {"test_clean_acc", r.test_clean_acc},
          {"train_robust_loss", r.train_robust_loss},
          {"cas", r.cas}};
}

struct RunFiles {
  std::filesystem::path records, best, last;

  static RunFiles in(const std::filesystem::path& dir) {
    return {dir / "records.tsv", dir / "best.ckpt", dir / "last.ckpt"};
  }
};

/// Writes records.tsv, best.ckpt and last.ckpt into `dir` (created if needed).
inline RunFiles save_run(const std::filesystem::path& dir, const RunRecord& rec) {
  std::filesystem::create_directories(dir);
  const auto files = RunFiles::in(dir);
  {
    std::ofstream os(files.records, std::ios::trunc);
    if (!os) throw Error("cannot open " + files.records.string() + " for writing");
    write_run_records(os, rec.rows);
  }
  Checkpoint best{rec.best, -1, {}};
  if (const auto* r = rec.best_row()) {
    best.epoch = static_cast<std::int64_t>(r->epoch);
    best.metrics = row_metrics(*r);
  }
  save_checkpoint(files.best, best);
  Checkpoint last{rec.last, -1, {}};
  if (const auto* r = rec.last_row()) {
    last.epoch = static_cast<std::int64_t>(r->epoch);
    last.metrics = row_metrics(*r);
  }
  save_checkpoint(files.last, last);
  return files;
}

inline std::vector<EpochRow> load_run_records(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open run record " + path.string());
  return read_run_records(is);
}

}  // namespace ccf
