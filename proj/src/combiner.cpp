#include "toxspan/combiner.hpp"

#include <algorithm>
#include <iterator>

namespace toxspan {

OffsetSet union_spans(const OffsetSet& a, const OffsetSet& b) {
  OffsetSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace toxspan
