#include "isdf/io.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

namespace isdf {

namespace {

bool needs_quoting(const std::string& cell) {
  return cell.find_first_of(",\"\r\n") != std::string::npos;
}

std::string quoted(const std::string& cell) {
  std::string out;
  out.reserve(cell.size() + 2);
  out.push_back('"');
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Split one logical CSV record into cells, honoring quoted fields.  `line`
/// must already contain the full record (quoted cells never span records in
/// the numeric tables this library writes or consumes).
std::vector<std::string> split_record(const std::string& line, int line_no,
                                      const std::string& path) {
  std::vector<std::string> cells;
  std::string cell;
  bool in_quotes = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (in_quotes) {
    throw IoError(path + ":" + std::to_string(line_no) + ": unterminated quoted cell");
  }
  cells.push_back(std::move(cell));
  return cells;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  auto it = std::find(headers.begin(), headers.end(), name);
  if (it == headers.end()) {
    throw LengthMismatch("CsvTable: no column named '" + name + "'");
  }
  return static_cast<int>(it - headers.begin());
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  // Shortest representation that round-trips: try increasing precision.
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, value);
    double back = 0.0;
    auto [ptr, ec] = std::from_chars(buf, buf + std::string::traits_type::length(buf), back);
    if (ec == std::errc() && back == value) return buf;
    (void)ptr;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_double(const std::string& field) {
  const char* begin = field.c_str();
  const char* end = begin + field.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  const char* stop = end;
  while (stop != begin && (stop[-1] == ' ' || stop[-1] == '\t')) --stop;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, stop, value);
  if (ec != std::errc() || ptr != stop || begin == stop) {
    throw IoError("not a numeric field: '" + field + "'");
  }
  return value;
}

void write_csv(const std::string& path, const std::vector<std::string>& headers,
               const Matrix& data) {
  if (static_cast<int>(headers.size()) != data.cols()) {
    throw LengthMismatch("write_csv: " + std::to_string(headers.size()) +
                         " headers for " + std::to_string(data.cols()) + " columns");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  std::string line;
  for (size_t j = 0; j < headers.size(); ++j) {
    if (j) line.push_back(',');
    line += needs_quoting(headers[j]) ? quoted(headers[j]) : headers[j];
  }
  line += "\r\n";
  out << line;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (j) line.push_back(',');
      line += format_double(data(i, j));
    }
    line += "\r\n";
    out << line;
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    const int record_line = line_no;
    // A quoted cell may contain embedded line breaks: keep appending physical
    // lines until the quote count balances (doubled escapes cancel out).
    while (std::count(line.begin(), line.end(), '"') % 2 != 0) {
      std::string more;
      if (!std::getline(in, more)) break;  // split_record reports the imbalance
      ++line_no;
      if (!more.empty() && more.back() == '\r') more.pop_back();
      line.push_back('\n');
      line += more;
    }
    auto cells = split_record(line, record_line, path);
    if (record_line == 1) {
      if (cells.empty() || (cells.size() == 1 && cells[0].empty())) {
        throw IoError(path + ":1: missing header row");
      }
      table.headers = std::move(cells);
      continue;
    }
    if (cells.size() != table.headers.size()) {
      throw IoError(path + ":" + std::to_string(record_line) + ": expected " +
                    std::to_string(table.headers.size()) + " cells, found " +
                    std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (size_t j = 0; j < cells.size(); ++j) {
      try {
        row[j] = parse_double(cells[j]);
      } catch (const IoError& e) {
        throw IoError(path + ":" + std::to_string(record_line) + ": column '" +
                      table.headers[j] + "': " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  if (table.headers.empty()) throw IoError(path + ":1: missing header row");

  table.data.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(table.headers.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) {
      table.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return table;
}

}  // namespace isdf
