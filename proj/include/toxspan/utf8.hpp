#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace toxspan {

// All character offsets in this project count Unicode scalar values (code
// points), never bytes. The dataset's span annotations are code-point based,
// so a row like "Dàmn" has gold offsets 0..3 even though it is 5 bytes long.
namespace utf8 {

constexpr char32_t kReplacementChar = 0xFFFD;

// A UTF-8 string decoded once, with the byte range of every code point kept
// so that slices of the original bytes can be taken by code-point index.
// Invalid byte sequences decode to one U+FFFD per offending byte; the byte
// map still covers them, so slicing stays total.
class DecodedText {
 public:
  DecodedText() = default;
  explicit DecodedText(std::string_view text);

  std::size_t size() const { return code_points_.size(); }
  char32_t at(std::size_t cp_index) const { return code_points_[cp_index]; }
  const std::vector<char32_t>& code_points() const { return code_points_; }

  // Original bytes of code points [begin, end).
  std::string_view slice(std::size_t begin, std::size_t end) const;

 private:
  std::string text_;
  std::vector<char32_t> code_points_;
  std::vector<std::size_t> byte_starts_;  // size() + 1 entries, last = bytes
};

// Number of code points in a UTF-8 string (invalid bytes count as one each).
std::size_t length(std::string_view text);

}  // namespace utf8
}  // namespace toxspan
