#include "toxspan/span_model.hpp"

#include <algorithm>
#include <stdexcept>

#include "toxspan/utf8.hpp"

namespace toxspan {

bool is_edge_punct(char32_t cp) {
  switch (cp) {
    case U'.':
    case U',':
    case U'!':
    case U'?':
    case U';':
    case U':':
    case U'\'':
    case U'"':
    case U'(':
    case U')':
      return true;
    default:
      return false;
  }
}

std::vector<TokenSpan> tokenize(std::string_view text) {
  utf8::DecodedText decoded(text);
  std::vector<TokenSpan> tokens;
  std::size_t n = decoded.size();
  std::size_t i = 0;
  while (i < n) {
    if (decoded.at(i) == U' ') {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < n && decoded.at(i) != U' ') {
      ++i;
    }
    tokens.push_back(TokenSpan{std::string(decoded.slice(start, i)),
                               static_cast<int>(start), static_cast<int>(i)});
  }
  return tokens;
}

std::vector<BioLabel> labels_from_toxic_flags(const std::vector<bool>& toxic) {
  std::vector<BioLabel> labels(toxic.size(), BioLabel::O);
  for (std::size_t i = 0; i < toxic.size(); ++i) {
    if (!toxic[i]) continue;
    labels[i] = (i > 0 && toxic[i - 1]) ? BioLabel::I : BioLabel::B;
  }
  return labels;
}

std::vector<BioLabel> label_tokens(const std::vector<TokenSpan>& tokens,
                                   const OffsetSet& gold_offsets) {
  std::vector<bool> toxic(tokens.size(), false);
  // gold_offsets is sorted, token ranges are disjoint and increasing.
  std::size_t g = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    while (g < gold_offsets.size() && gold_offsets[g] < tokens[t].start) {
      ++g;
    }
    if (g < gold_offsets.size() && gold_offsets[g] < tokens[t].end) {
      toxic[t] = true;
    }
  }
  return labels_from_toxic_flags(toxic);
}

bool is_valid_bio(const std::vector<BioLabel>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == BioLabel::I &&
        (i == 0 || labels[i - 1] == BioLabel::O)) {
      return false;
    }
  }
  return true;
}

std::vector<BioLabel> repair_bio(std::vector<BioLabel> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == BioLabel::I &&
        (i == 0 || labels[i - 1] == BioLabel::O)) {
      labels[i] = BioLabel::B;
    }
  }
  return labels;
}

namespace {

// Code-point count of trailing edge punctuation in a token surface.
int trailing_punct_count(const std::string& surface) {
  utf8::DecodedText decoded(surface);
  int count = 0;
  for (std::size_t i = decoded.size(); i > 0; --i) {
    if (!is_edge_punct(decoded.at(i - 1))) break;
    ++count;
  }
  return count;
}

}  // namespace

OffsetSet spans_from_labels(const std::vector<TokenSpan>& tokens,
                            const std::vector<BioLabel>& labels) {
  if (tokens.size() != labels.size()) {
    throw std::invalid_argument("spans_from_labels: " + std::to_string(tokens.size()) +
                                " tokens vs " + std::to_string(labels.size()) +
                                " labels");
  }
  if (!is_valid_bio(labels)) {
    throw std::invalid_argument("spans_from_labels: invalid BIO sequence");
  }
  OffsetSet offsets;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (labels[t] == BioLabel::O) continue;
    if (labels[t] == BioLabel::I) {
      // Gap between the previous toxic token and this one is toxic too.
      for (int off = tokens[t - 1].end; off < tokens[t].start; ++off) {
        offsets.push_back(off);
      }
    }
    int keep_end = tokens[t].end - trailing_punct_count(tokens[t].surface);
    for (int off = tokens[t].start; off < keep_end; ++off) {
      offsets.push_back(off);
    }
  }
  normalize_offsets(offsets);
  return offsets;
}

}  // namespace toxspan
