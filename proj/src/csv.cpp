#include "toxspan/csv.hpp"

namespace toxspan {
namespace csv {

std::vector<Row> parse(std::string_view content) {
  if (content.substr(0, 3) == "\xEF\xBB\xBF") {
    content.remove_prefix(3);
  }

  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t record = 1;  // 1-based physical record for error messages

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    ++record;
  };

  std::size_t i = 0;
  const std::size_t n = content.size();
  while (i < n) {
    char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          field.push_back('"');
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field.push_back(c);
        ++i;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_was_quoted) {
          in_quotes = true;
          field_was_quoted = true;
        } else if (field_was_quoted) {
          throw ParseError("csv record " + std::to_string(record) +
                           ": data after closing quote");
        } else {
          field.push_back(c);  // bare quote mid-field, keep it
        }
        ++i;
        break;
      case ',':
        end_field();
        ++i;
        break;
      case '\r':
        if (i + 1 < n && content[i + 1] == '\n') {
          end_row();
          i += 2;
        } else {
          field.push_back(c);
          ++i;
        }
        break;
      case '\n':
        end_row();
        ++i;
        break;
      default:
        if (field_was_quoted) {
          throw ParseError("csv record " + std::to_string(record) +
                           ": data after closing quote");
        }
        field.push_back(c);
        ++i;
        break;
    }
  }
  if (in_quotes) {
    throw ParseError("csv record " + std::to_string(record) +
                     ": unterminated quoted field");
  }
  if (!field.empty() || field_was_quoted || !row.empty()) {
    end_row();
  }
  return rows;
}

std::string escape_field(std::string_view field) {
  bool needs_quotes = false;
  for (char c : field) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      needs_quotes = true;
      break;
    }
  }
  if (!needs_quotes) {
    return std::string(field);
  }
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') {
      out.push_back('"');
    }
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i != 0) {
      out << ',';
    }
    out << escape_field(fields[i]);
  }
  out << '\n';
}

}  // namespace csv
}  // namespace toxspan
