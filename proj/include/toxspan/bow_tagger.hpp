#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "toxspan/corpus.hpp"

namespace toxspan {

struct DictionaryEntry {
  std::string word;
  std::int64_t total_freq = 0;
  std::int64_t toxic_freq = 0;

  // toxic_freq / total_freq; total_freq >= 1 for any stored entry.
  double toxicity_ratio() const {
    return static_cast<double>(toxic_freq) / static_cast<double>(total_freq);
  }
};

// Word statistics gathered from a training corpus. Immutable once built;
// safe to share across threads for reads.
struct ToxicDictionary {
  std::map<std::string, DictionaryEntry> entries;  // key == entry.word
};

struct TaggerParams {
  std::int64_t min_freq = 0;
  double min_ratio = 0.0;  // in [0, 1]
};

constexpr std::string_view kDefaultBleepMask = "*#$%@";

// Lowercases ASCII letters and strips edge punctuation (.,!?;:'"() ) from
// both ends; interior characters are untouched. May return "".
std::string normalize_word(std::string_view surface);

// Counts every non-empty normalized token of every training row;
// toxic_freq counts the occurrences whose token was toxic per label_tokens.
ToxicDictionary build_dictionary(const Corpus& train);

// Entries with toxicity ratio >= min_ratio, sorted by total_freq descending
// (ties broken by word ascending), truncated to k.
std::vector<DictionaryEntry> top_k_by_frequency(const ToxicDictionary& dict,
                                                std::size_t k, double min_ratio);

// Exactly the words with total_freq >= min_freq and toxicity ratio >=
// min_ratio. The ratio comparison is exact integer arithmetic on
// toxic_freq / total_freq against min_ratio rounded to 4 decimals, so a
// word at exactly the threshold (e.g. 0.70) is always included.
std::unordered_set<std::string> select_toxic_words(const ToxicDictionary& dict,
                                                   const TaggerParams& params);

// A bleeped word is partially masked with censor symbols: it contains at
// least one mask character and at least one ASCII letter, or consists of
// two or more mask characters only.
bool is_bleeped(std::string_view surface, std::string_view mask = kDefaultBleepMask);

// Tags a text: a token is toxic iff its normalized form is a selected
// dictionary word or the raw token is bleeped; offsets come from
// spans_from_labels.
OffsetSet bow_tag(std::string_view text, const ToxicDictionary& dict,
                  const TaggerParams& params,
                  std::string_view mask = kDefaultBleepMask);

// Same tagging rule against a pre-selected word set; used by the grid
// search to reuse one selection across many rows.
OffsetSet bow_tag_with_words(std::string_view text,
                             const std::unordered_set<std::string>& toxic_words,
                             std::string_view mask = kDefaultBleepMask);

// Dictionary CSV: header `word,total_freq,toxic_freq`, rows sorted by
// total_freq descending then word ascending. Ratios are recomputed on load.
std::string write_dictionary(const ToxicDictionary& dict);
ToxicDictionary read_dictionary(std::string_view content);

}  // namespace toxspan
