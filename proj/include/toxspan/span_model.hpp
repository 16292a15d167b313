#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "toxspan/corpus.hpp"

namespace toxspan {

// A word with its half-open code-point range in the source text. Tokens are
// maximal runs of non-space code points, so a surface never contains ' '.
struct TokenSpan {
  std::string surface;
  int start = 0;  // inclusive, code points
  int end = 0;    // exclusive

  bool operator==(const TokenSpan&) const = default;
};

enum class BioLabel { B, I, O };

// Punctuation stripped from the tail of a toxic token when emitting spans,
// and from word edges during dictionary normalization.
bool is_edge_punct(char32_t cp);

// Splits at space characters (U+0020 only); consecutive spaces produce no
// empty tokens. Offsets count code points.
std::vector<TokenSpan> tokenize(std::string_view text);

// Encodes per-token toxicity flags as B/I/O: each maximal run of toxic
// tokens becomes B I I...
std::vector<BioLabel> labels_from_toxic_flags(const std::vector<bool>& toxic);

// A token is toxic iff at least one of its characters is in gold_offsets
// (any-overlap rule: a partially annotated word counts as toxic).
std::vector<BioLabel> label_tokens(const std::vector<TokenSpan>& tokens,
                                   const OffsetSet& gold_offsets);

// True when the label sequence satisfies BIO validity (no I at position 0,
// no I directly after O).
bool is_valid_bio(const std::vector<BioLabel>& labels);

// Rewrites invalid I labels (at position 0 or after O) to B so downstream
// span emission stays total.
std::vector<BioLabel> repair_bio(std::vector<BioLabel> labels);

// Inverse mapping: emits every character offset of each toxic token except
// its trailing edge punctuation, plus the gap characters between
// consecutive toxic tokens of one B/I run. Throws std::invalid_argument on
// length mismatch or invalid BIO input.
OffsetSet spans_from_labels(const std::vector<TokenSpan>& tokens,
                            const std::vector<BioLabel>& labels);

}  // namespace toxspan
