#pragma once

// Tab-separated ingestion shared by the dataset parsers.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "glab/error.hpp"

namespace glab::detail {

struct TsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<TsvRow> read_tsv(std::istream& in) {
  std::vector<TsvRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    TsvRow row{n, {}};
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      row.fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IngestError("cannot open " + p.string());
  return in;
}

inline std::string where(const std::string& source, const TsvRow& r) { return source + ":" + std::to_string(r.line); }

inline void need_fields(const std::string& source, const TsvRow& r, std::size_t lo, std::size_t hi) {
  if (r.fields.size() < lo || r.fields.size() > hi) {
    throw IngestError(where(source, r) + ": expected " + std::to_string(lo) +
                      (lo == hi ? "" : "-" + std::to_string(hi)) + " tab-separated fields, got " +
                      std::to_string(r.fields.size()));
  }
}

inline double parse_number(const std::string& source, const TsvRow& r, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError(where(source, r) + ": '" + s + "' is not a finite number");
  }
}

}  // namespace glab::detail
