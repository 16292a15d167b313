#include "toxspan/bow_tagger.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "toxspan/csv.hpp"
#include "toxspan/span_model.hpp"
#include "toxspan/utf8.hpp"

namespace toxspan {

std::string normalize_word(std::string_view surface) {
  // Edge punctuation is single-byte ASCII, so byte-wise trimming cannot
  // split a multi-byte code point.
  std::size_t begin = 0;
  std::size_t end = surface.size();
  while (begin < end && is_edge_punct(static_cast<unsigned char>(surface[begin]))) {
    ++begin;
  }
  while (end > begin && is_edge_punct(static_cast<unsigned char>(surface[end - 1]))) {
    --end;
  }
  std::string out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    char c = surface[i];
    if (c >= 'A' && c <= 'Z') {
      c = static_cast<char>(c - 'A' + 'a');
    }
    out.push_back(c);
  }
  return out;
}

ToxicDictionary build_dictionary(const Corpus& train) {
  ToxicDictionary dict;
  for (const AnnotatedText& row : train.rows) {
    auto tokens = tokenize(row.text);
    auto labels = label_tokens(tokens, row.gold_offsets);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      std::string word = normalize_word(tokens[t].surface);
      if (word.empty()) continue;
      DictionaryEntry& entry = dict.entries[word];
      if (entry.total_freq == 0) {
        entry.word = word;
      }
      entry.total_freq += 1;
      if (labels[t] != BioLabel::O) {
        entry.toxic_freq += 1;
      }
    }
  }
  return dict;
}

std::vector<DictionaryEntry> top_k_by_frequency(const ToxicDictionary& dict,
                                                std::size_t k, double min_ratio) {
  std::vector<DictionaryEntry> selected;
  auto toxic_words = select_toxic_words(dict, TaggerParams{0, min_ratio});
  for (const auto& [word, entry] : dict.entries) {
    if (toxic_words.count(word)) {
      selected.push_back(entry);
    }
  }
  std::sort(selected.begin(), selected.end(),
            [](const DictionaryEntry& a, const DictionaryEntry& b) {
              if (a.total_freq != b.total_freq) return a.total_freq > b.total_freq;
              return a.word < b.word;
            });
  if (selected.size() > k) {
    selected.resize(k);
  }
  return selected;
}

std::unordered_set<std::string> select_toxic_words(const ToxicDictionary& dict,
                                                   const TaggerParams& params) {
  // Thresholds given to a few decimals must behave exactly at the boundary
  // (Table-style ratios like 0.70 are common), so compare
  // toxic/total >= ratio as toxic * 10000 >= round(ratio * 10000) * total.
  const std::int64_t ratio_scaled = std::llround(params.min_ratio * 10000.0);
  std::unordered_set<std::string> words;
  for (const auto& [word, entry] : dict.entries) {
    if (entry.total_freq < params.min_freq) continue;
    if (entry.toxic_freq * 10000 < ratio_scaled * entry.total_freq) continue;
    words.insert(word);
  }
  return words;
}

bool is_bleeped(std::string_view surface, std::string_view mask) {
  if (surface.empty()) return false;
  std::size_t mask_chars = 0;
  bool has_letter = false;
  bool all_mask = true;
  for (char c : surface) {
    bool is_mask = mask.find(c) != std::string_view::npos;
    if (is_mask) {
      ++mask_chars;
    } else {
      all_mask = false;
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
      has_letter = true;
    }
  }
  if (mask_chars >= 1 && has_letter) return true;
  return all_mask && mask_chars >= 2;
}

OffsetSet bow_tag_with_words(std::string_view text,
                             const std::unordered_set<std::string>& toxic_words,
                             std::string_view mask) {
  auto tokens = tokenize(text);
  std::vector<bool> toxic(tokens.size(), false);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    toxic[t] = toxic_words.count(normalize_word(tokens[t].surface)) > 0 ||
               is_bleeped(tokens[t].surface, mask);
  }
  return spans_from_labels(tokens, labels_from_toxic_flags(toxic));
}

OffsetSet bow_tag(std::string_view text, const ToxicDictionary& dict,
                  const TaggerParams& params, std::string_view mask) {
  return bow_tag_with_words(text, select_toxic_words(dict, params), mask);
}

std::string write_dictionary(const ToxicDictionary& dict) {
  auto rows = top_k_by_frequency(dict, dict.entries.size(), 0.0);
  std::ostringstream out;
  out << "word,total_freq,toxic_freq\n";
  for (const DictionaryEntry& entry : rows) {
    csv::write_row(out, {entry.word, std::to_string(entry.total_freq),
                         std::to_string(entry.toxic_freq)});
  }
  return out.str();
}

namespace {

std::int64_t parse_count(const std::string& field, const std::string& where) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw csv::ParseError(where + ": bad count '" + field + "'");
  }
  return value;
}

}  // namespace

ToxicDictionary read_dictionary(std::string_view content) {
  auto records = csv::parse(content);
  ToxicDictionary dict;
  std::size_t start = 0;
  if (!records.empty() && records[0] == csv::Row{"word", "total_freq", "toxic_freq"}) {
    start = 1;
  }
  for (std::size_t r = start; r < records.size(); ++r) {
    const std::string where = "dictionary row " + std::to_string(r + 1);
    if (records[r].size() != 3) {
      throw csv::ParseError(where + ": expected 'word,total_freq,toxic_freq'");
    }
    DictionaryEntry entry;
    entry.word = records[r][0];
    entry.total_freq = parse_count(records[r][1], where);
    entry.toxic_freq = parse_count(records[r][2], where);
    if (entry.word.empty() || entry.total_freq < 1 || entry.toxic_freq < 0 ||
        entry.toxic_freq > entry.total_freq) {
      throw csv::ParseError(where + ": counts violate 0 <= toxic <= total, total >= 1");
    }
    if (!dict.entries.emplace(entry.word, entry).second) {
      throw csv::ParseError(where + ": duplicate word '" + entry.word + "'");
    }
  }
  return dict;
}

}  // namespace toxspan
