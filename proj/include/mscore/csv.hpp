#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, embedded
// commas and line breaks.

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mscore::csv {

using Row = std::vector<std::string>;

/// Reads one record. Returns nullopt at end of input. `line` is advanced by
/// the number of physical lines consumed.
std::optional<Row> read_row(std::istream& in, std::size_t& line);

std::string escape(std::string_view field);
std::string join(const Row& row);

/// Header-indexed view of a CSV stream.
class Table {
 public:
  explicit Table(std::istream& in);

  const Row& header() const { return header_; }
  std::optional<std::size_t> column(std::string_view name) const;

  /// Next data row with its 1-based data row number; nullopt at end.
  std::optional<Row> next();
  std::size_t row_number() const { return row_number_; }

 private:
  std::istream& in_;
  Row header_;
  std::size_t line_ = 0;
  std::size_t row_number_ = 0;
};

}  // namespace mscore::csv
