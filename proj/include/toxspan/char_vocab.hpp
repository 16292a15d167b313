#pragma once

namespace toxspan {

// Fixed character vocabulary: four reserved ids followed by printable ASCII
// (0x20..0x7E). Anything else maps to the unknown id; the corpora this
// tagger targets are English.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBeginWord = 2;
  static constexpr int kEndWord = 3;

  static constexpr char32_t kFirstPrintable = 0x20;
  static constexpr char32_t kLastPrintable = 0x7E;

  int id_for(char32_t cp) const {
    if (cp < kFirstPrintable || cp > kLastPrintable) return kUnk;
    return 4 + static_cast<int>(cp - kFirstPrintable);
  }

  int size() const { return 4 + static_cast<int>(kLastPrintable - kFirstPrintable + 1); }
};

}  // namespace toxspan
