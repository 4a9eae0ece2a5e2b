#pragma once

/**
 * CSV table io: RFC-4180 files with a mandatory header row, UTF-8 text,
 * '.' decimal separator independent of locale, and round-trip-exact numeric
 * formatting.  All numeric payloads of the library (observations, state
 * paths, replication reports) travel through these two functions.
 */

#include "isdf/common.hpp"

#include <string>
#include <vector>

namespace isdf {

/// A parsed CSV file: one header cell per column, all body cells numeric.
struct CsvTable {
  std::vector<std::string> headers;
  Matrix data;  ///< rows × columns, column order as in `headers`

  /// Index of a named column; LengthMismatch if absent.
  int column(const std::string& name) const;
};

/// Shortest decimal form that parses back to exactly the same double
/// ("%.17g" fallback); infinities and NaN render as "inf"/"-inf"/"nan".
std::string format_double(double value);

/// Locale-independent parse of a full numeric field (accepts inf/nan forms).
/// Throws IoError naming the offending text when the field is not numeric.
double parse_double(const std::string& field);

/// Write `headers` + `data` as RFC-4180 CSV (CRLF line endings; cells quoted
/// when they contain a comma, quote, or newline).  Throws IoError on any
/// filesystem failure and LengthMismatch when the header count differs from
/// the column count.
void write_csv(const std::string& path, const std::vector<std::string>& headers,
               const Matrix& data);

/// Read an RFC-4180 CSV with a header row into a numeric table.  Accepts
/// both CRLF and LF line endings and quoted cells.  Throws IoError with a
/// 1-based line number on missing file, ragged rows, or non-numeric cells.
CsvTable read_csv(const std::string& path);

}  // namespace isdf
