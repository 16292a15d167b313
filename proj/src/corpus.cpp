#include "toxspan/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "toxspan/csv.hpp"
#include "toxspan/utf8.hpp"

namespace toxspan {

namespace {

bool is_space_char(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trimmed(std::string_view s) {
  while (!s.empty() && is_space_char(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space_char(s.back())) s.remove_suffix(1);
  return s;
}

int parse_nonnegative_int(std::string_view token, const std::string& where) {
  token = trimmed(token);
  int value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value < 0) {
    throw csv::ParseError(where + ": bad span offset '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

void normalize_offsets(OffsetSet& offsets) {
  std::sort(offsets.begin(), offsets.end());
  offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
}

OffsetSet parse_span_list(std::string_view field, const std::string& where) {
  std::string_view body = trimmed(field);
  if (body.size() < 2 || body.front() != '[' || body.back() != ']') {
    throw csv::ParseError(where + ": span list must be bracketed, got '" +
                          std::string(field) + "'");
  }
  body = trimmed(body.substr(1, body.size() - 2));
  OffsetSet offsets;
  if (body.empty()) {
    return offsets;
  }
  std::size_t start = 0;
  while (true) {
    std::size_t comma = body.find(',', start);
    std::string_view token = (comma == std::string_view::npos)
                                 ? body.substr(start)
                                 : body.substr(start, comma - start);
    offsets.push_back(parse_nonnegative_int(token, where));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return offsets;
}

Corpus parse_dataset(std::string_view content, std::ostream* warnings) {
  auto records = csv::parse(content);
  if (records.empty()) {
    throw csv::ParseError("dataset: missing header row");
  }
  const csv::Row& header = records.front();
  std::size_t spans_col = header.size();
  std::size_t text_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "spans") spans_col = i;
    if (header[i] == "text") text_col = i;
  }
  if (spans_col == header.size() || text_col == header.size()) {
    throw csv::ParseError("dataset: header must contain 'spans' and 'text' columns");
  }

  Corpus corpus;
  corpus.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const csv::Row& rec = records[r];
    const std::string where = "row " + std::to_string(r);
    if (rec.size() <= std::max(spans_col, text_col)) {
      throw csv::ParseError(where + ": expected at least " +
                            std::to_string(std::max(spans_col, text_col) + 1) +
                            " columns, got " + std::to_string(rec.size()));
    }
    AnnotatedText row;
    row.text = rec[text_col];
    row.gold_offsets = parse_span_list(rec[spans_col], where);

    std::size_t before = row.gold_offsets.size();
    normalize_offsets(row.gold_offsets);
    if (row.gold_offsets.size() != before && warnings != nullptr) {
      *warnings << "warning: " << where << ": dropped "
                << (before - row.gold_offsets.size()) << " duplicate offset(s)\n";
    }

    std::size_t text_len = utf8::length(row.text);
    for (int off : row.gold_offsets) {
      if (static_cast<std::size_t>(off) >= text_len) {
        throw csv::ParseError(where + ": offset " + std::to_string(off) +
                              " out of range for text of length " +
                              std::to_string(text_len));
      }
    }
    corpus.rows.push_back(std::move(row));
  }
  return corpus;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, std::size_t train_size) {
  if (train_size > corpus.size()) {
    throw std::out_of_range("split_corpus: train_size " + std::to_string(train_size) +
                            " exceeds corpus size " + std::to_string(corpus.size()));
  }
  Corpus head;
  Corpus tail;
  head.rows.assign(corpus.rows.begin(), corpus.rows.begin() + train_size);
  tail.rows.assign(corpus.rows.begin() + train_size, corpus.rows.end());
  return {std::move(head), std::move(tail)};
}

namespace {

std::string format_span_list(const OffsetSet& offsets) {
  std::string out = "[";
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (i != 0) out += ", ";
    out += std::to_string(offsets[i]);
  }
  out += "]";
  return out;
}

}  // namespace

std::string write_corpus(const Corpus& corpus) {
  std::ostringstream out;
  out << "spans,text\n";
  for (const AnnotatedText& row : corpus.rows) {
    csv::write_row(out, {format_span_list(row.gold_offsets), row.text});
  }
  return out.str();
}

void write_predictions(const std::vector<PredictionRow>& rows, std::ostream& sink) {
  for (const auto& [id, offsets] : rows) {
    sink << id << ",\"" << format_span_list(offsets) << "\"\n";
  }
}

std::vector<PredictionRow> read_predictions(std::string_view content) {
  auto records = csv::parse(content);
  std::vector<PredictionRow> rows;
  rows.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const std::string where = "prediction row " + std::to_string(r + 1);
    if (records[r].size() != 2) {
      throw csv::ParseError(where + ": expected 'id,spans', got " +
                            std::to_string(records[r].size()) + " fields");
    }
    const std::string& id_field = records[r][0];
    std::int64_t id = 0;
    auto [ptr, ec] = std::from_chars(id_field.data(), id_field.data() + id_field.size(), id);
    if (ec != std::errc() || ptr != id_field.data() + id_field.size() || id < 0) {
      throw csv::ParseError(where + ": bad row id '" + id_field + "'");
    }
    OffsetSet offsets = parse_span_list(records[r][1], where);
    normalize_offsets(offsets);
    rows.emplace_back(id, std::move(offsets));
  }
  std::unordered_set<std::int64_t> ids;
  for (const auto& [id, offsets] : rows) {
    if (!ids.insert(id).second) {
      throw csv::ParseError("predictions: duplicate row id " + std::to_string(id));
    }
  }
  return rows;
}

std::vector<OffsetSet> align_predictions(const std::vector<PredictionRow>& rows,
                                         std::size_t corpus_size) {
  if (rows.size() != corpus_size) {
    throw std::invalid_argument("predictions cover " + std::to_string(rows.size()) +
                                " rows but corpus has " + std::to_string(corpus_size));
  }
  std::vector<OffsetSet> aligned(corpus_size);
  std::vector<bool> seen(corpus_size, false);
  for (const auto& [id, offsets] : rows) {
    if (id < 0 || static_cast<std::size_t>(id) >= corpus_size || seen[id]) {
      throw std::invalid_argument("prediction row id " + std::to_string(id) +
                                  " does not map onto corpus rows 0.." +
                                  std::to_string(corpus_size - 1));
    }
    seen[id] = true;
    aligned[id] = offsets;
  }
  return aligned;
}

}  // namespace toxspan
