#include "toxspan/utf8.hpp"

namespace toxspan {
namespace utf8 {

namespace {

// Decodes one code point starting at text[pos]. Returns the number of bytes
// consumed (always >= 1); stores U+FFFD for malformed sequences and consumes
// a single byte so decoding never stalls.
std::size_t decode_one(std::string_view text, std::size_t pos, char32_t* out) {
  const auto byte = [&](std::size_t i) {
    return static_cast<unsigned char>(text[i]);
  };
  unsigned char lead = byte(pos);
  if (lead < 0x80) {
    *out = lead;
    return 1;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    *out = kReplacementChar;
    return 1;
  }
  if (pos + len > text.size()) {
    *out = kReplacementChar;
    return 1;
  }
  for (std::size_t i = 1; i < len; ++i) {
    unsigned char cont = byte(pos + i);
    if ((cont & 0xC0) != 0x80) {
      *out = kReplacementChar;
      return 1;
    }
    cp = (cp << 6) | (cont & 0x3F);
  }
  // Reject overlong encodings and surrogate/oversized values.
  const char32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < min_for_len[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    *out = kReplacementChar;
    return 1;
  }
  *out = cp;
  return len;
}

}  // namespace

DecodedText::DecodedText(std::string_view text) : text_(text) {
  code_points_.reserve(text_.size());
  byte_starts_.reserve(text_.size() + 1);
  std::size_t pos = 0;
  while (pos < text_.size()) {
    byte_starts_.push_back(pos);
    char32_t cp = 0;
    pos += decode_one(text_, pos, &cp);
    code_points_.push_back(cp);
  }
  byte_starts_.push_back(text_.size());
}

std::string_view DecodedText::slice(std::size_t begin, std::size_t end) const {
  std::size_t lo = byte_starts_[begin];
  std::size_t hi = byte_starts_[end];
  return std::string_view(text_).substr(lo, hi - lo);
}

std::size_t length(std::string_view text) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = 0;
    pos += decode_one(text, pos, &cp);
    ++n;
  }
  return n;
}

}  // namespace utf8
}  // namespace toxspan
