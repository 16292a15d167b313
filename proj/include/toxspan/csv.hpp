#pragma once

#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toxspan {
namespace csv {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

using Row = std::vector<std::string>;

// RFC-4180 style reader: comma separated, LF or CRLF row breaks, double
// quotes around fields that contain commas, quotes, or newlines, with
// embedded quotes doubled. A leading UTF-8 BOM is dropped. Quote characters
// inside an unquoted field are taken literally; bytes after a closing quote
// and before the next separator are an error.
std::vector<Row> parse(std::string_view content);

// Quotes a field only when it needs quoting.
std::string escape_field(std::string_view field);

void write_row(std::ostream& out, const Row& fields);

}  // namespace csv
}  // namespace toxspan
