#pragma once

#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "barsctr/error.hpp"

namespace barsctr::data {

// RFC 4180 reader: comma delimiter, double-quote quoting with "" escapes,
// quoted fields may span lines. CRLF and LF line ends are both accepted.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : it_(in), end_() {}

  // Reads the next record; returns false at end of input.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    if (it_ == end_) return false;
    ++record_;
    std::string cell;
    bool in_quotes = false;
    bool any = false;
    while (it_ != end_) {
      const char c = *it_;
      ++it_;
      any = true;
      if (in_quotes) {
        if (c == '"') {
          if (it_ != end_ && *it_ == '"') {
            cell.push_back('"');
            ++it_;
          } else {
            in_quotes = false;
          }
        } else {
          cell.push_back(c);
        }
        continue;
      }
      if (c == '"') {
        in_quotes = true;
      } else if (c == ',') {
        fields.push_back(std::move(cell));
        cell.clear();
      } else if (c == '\n') {
        break;
      } else if (c == '\r') {
        if (it_ != end_ && *it_ == '\n') ++it_;
        break;
      } else {
        cell.push_back(c);
      }
    }
    if (in_quotes) throw ParseError(record_, "<record>", "unterminated quoted field");
    fields.push_back(std::move(cell));
    return any;
  }

  // 1-based index of the record returned by the last next().
  std::size_t record_number() const { return record_; }

 private:
  std::istreambuf_iterator<char> it_, end_;
  std::size_t record_ = 0;
};

inline void write_csv_cell(std::ostream& out, std::string_view cell) {
  if (cell.find_first_of(",\"\r\n") == std::string_view::npos) {
    out << cell;
    return;
  }
  out << '"';
  for (char c : cell) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    write_csv_cell(out, cells[i]);
  }
  out << '\n';
}

}  // namespace barsctr::data
