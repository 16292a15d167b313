#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace toxspan {

// Sorted, duplicate-free set of toxic character offsets. Offsets count
// Unicode code points from the start of the row's text (see utf8.hpp).
using OffsetSet = std::vector<int>;

// Sorts and deduplicates in place.
void normalize_offsets(OffsetSet& offsets);

struct AnnotatedText {
  std::string text;
  OffsetSet gold_offsets;  // each < code-point length of text
};

struct Corpus {
  std::vector<AnnotatedText> rows;  // in file order

  std::size_t size() const { return rows.size(); }
};

// Parses the bracketed span syntax used by the dataset, e.g. "[8, 9, 10]"
// or "[]". Whitespace between integers is arbitrary. Throws csv::ParseError
// on malformed input; `where` names the offending row in the message.
OffsetSet parse_span_list(std::string_view field, const std::string& where);

// Parses a dataset CSV with header columns `spans` and `text` (extra
// columns are ignored). Row order is preserved. Duplicate offsets are
// dropped with a note to `warnings` when given; offsets at or beyond the
// text's code-point length are an error. Row numbers in diagnostics are
// 1-based data rows (the header is row 0).
Corpus parse_dataset(std::string_view content, std::ostream* warnings = nullptr);

// First `train_size` rows and the remaining tail, in order. Throws
// std::out_of_range when train_size exceeds the corpus.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, std::size_t train_size);

// Serializes a corpus back to the dataset CSV format (header `spans,text`).
// parse_dataset(write_corpus(c)) reproduces c.
std::string write_corpus(const Corpus& corpus);

// One prediction row: row id within the evaluated file, plus the predicted
// offsets (sorted ascending).
using PredictionRow = std::pair<std::int64_t, OffsetSet>;

// Emits one CSV line per row: `id,"[8, 9, 10]"`. The spans field matches
// the dataset syntax so parse_span_list can read it back.
void write_predictions(const std::vector<PredictionRow>& rows, std::ostream& sink);

// Reads lines written by write_predictions. Ids must be unique.
std::vector<PredictionRow> read_predictions(std::string_view content);

// Checks that predictions cover row ids 0..corpus_size-1 exactly and
// returns them as a vector indexed by row. Throws std::invalid_argument
// on any mismatch.
std::vector<OffsetSet> align_predictions(const std::vector<PredictionRow>& rows,
                                         std::size_t corpus_size);

}  // namespace toxspan
