#pragma once

#include "toxspan/corpus.hpp"

namespace toxspan {

// Offset-level set union of two models' predictions for the same text.
OffsetSet union_spans(const OffsetSet& a, const OffsetSet& b);

}  // namespace toxspan
