#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nnr/points.hpp"

namespace nnr {

//! Shortest round-trip decimal form of a double, locale-independent.
inline std::string format_double(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // prefer the shorter form when it round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[40];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

//! Parses one CSV line of numeric fields; throws on malformed cells.
inline std::vector<double> parse_csv_row(const std::string& line, std::size_t line_no) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find(',', start);
    if (end == std::string::npos) end = line.size();
    const std::string cell = line.substr(start, end - start);
    char* tail = nullptr;
    const double v = std::strtod(cell.c_str(), &tail);
    while (tail && (*tail == ' ' || *tail == '\t' || *tail == '\r')) ++tail;
    if (cell.empty() || tail == cell.c_str() || (tail && *tail != '\0'))
      throw std::invalid_argument("CSV: malformed numeric cell '" + cell + "' on line " +
                                  std::to_string(line_no));
    out.push_back(v);
    if (end == line.size()) break;
    start = end + 1;
  }
  return out;
}

//! Loads a point set from CSV: one point per row, d numeric columns.
//! `skip_header` drops the first row.
inline PointSet read_points_csv(const std::string& path, bool skip_header = false) {
  std::ifstream in(path);
  if (!in.good()) throw std::invalid_argument("CSV: cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  PointSet ps;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_header && line_no == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto row = parse_csv_row(line, line_no);
    if (first_data_row) {
      ps = PointSet(row.size());
      first_data_row = false;
    } else if (row.size() != ps.dim()) {
      throw std::invalid_argument("CSV: row " + std::to_string(line_no) + " has " +
                                  std::to_string(row.size()) + " columns, expected " +
                                  std::to_string(ps.dim()));
    }
    ps.add(row);
  }
  if (first_data_row) throw std::invalid_argument("CSV: no data rows in '" + path + "'");
  return ps;
}

inline void write_points_csv(const std::string& path, const PointSet& ps) {
  std::ofstream out(path);
  if (!out.good()) throw std::invalid_argument("CSV: cannot write '" + path + "'");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto p = ps[i];
    for (std::size_t a = 0; a < ps.dim(); ++a) {
      if (a) out << ',';
      out << format_double(p[a]);
    }
    out << '\n';
  }
}

}  // namespace nnr
