#pragma once

#include <charconv>
#include <cstdio>
#include <system_error>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace merge_planner::csv {

/// Shortest text that reads back to the same double (17 significant digits).
inline std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

inline std::vector<std::string> split_row(std::string_view line, char sep = ',') {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == sep) {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

inline double parse_double(const std::string& cell) {
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (first != last && *first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::invalid_argument || cell.empty()) throw std::invalid_argument("not a number: '" + cell + "'");
  if (ec == std::errc::result_out_of_range) throw std::invalid_argument("number out of range: '" + cell + "'");
  if (ptr != last) throw std::invalid_argument("trailing characters in number: '" + cell + "'");
  return v;
}

inline long parse_int(const std::string& cell) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(cell, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("not an integer: '" + cell + "'");
  }
  if (used != cell.size()) throw std::invalid_argument("trailing characters in integer: '" + cell + "'");
  return v;
}

/// Reads a CSV whose first row must equal `header`; returns the data rows.
inline std::vector<std::vector<std::string>> read_table(std::istream& in, const std::vector<std::string>& header) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty CSV input");
  if (split_row(line) != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw std::invalid_argument("CSV header mismatch, expected '" + want + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_row(line);
    if (cells.size() != header.size()) throw std::invalid_argument("CSV row has wrong column count: " + line);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace merge_planner::csv
