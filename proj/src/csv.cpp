#include "mscore/csv.hpp"

#include "mscore/error.hpp"

namespace mscore::csv {

std::optional<Row> read_row(std::istream& in, std::size_t& line) {
  if (in.peek() == std::char_traits<char>::eof()) return std::nullopt;
  Row row;
  std::string field;
  bool quoted = false;
  bool after_quote = false;
  ++line;
  for (int ch = in.get(); ch != std::char_traits<char>::eof(); ch = in.get()) {
    char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !after_quote) {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      after_quote = false;
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r' && !after_quote) field.pop_back();
      row.push_back(std::move(field));
      return row;
    } else if (c == '\r' && in.peek() == '\n') {
      // swallowed with the following LF
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorKind::malformed_row, "unterminated quoted field");
  row.push_back(std::move(field));
  return row;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string join(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += escape(row[i]);
  }
  return out;
}

Table::Table(std::istream& in) : in_(in) {
  auto h = read_row(in_, line_);
  if (!h) throw Error(ErrorKind::malformed_row, "missing header");
  header_ = std::move(*h);
  if (!header_.empty() && header_[0].starts_with("\xEF\xBB\xBF")) header_[0].erase(0, 3);
}

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

std::optional<Row> Table::next() {
  while (true) {
    auto row = read_row(in_, line_);
    if (!row) return std::nullopt;
    ++row_number_;
    if (row->size() == 1 && (*row)[0].empty()) continue;  // blank line
    if (row->size() != header_.size()) {
      throw Error(ErrorKind::malformed_row,
                  "row " + std::to_string(row_number_) + ": expected " +
                      std::to_string(header_.size()) + " fields, got " + std::to_string(row->size()));
    }
    return row;
  }
}

}  // namespace mscore::csv
