// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace proverloop {

// Half-open character-offset interval [start, end).
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool contains(std::size_t offset) const { return offset >= start && offset < end; }
  bool empty() const { return end <= start; }

  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

// Sorted, disjoint set of character spans excluded from the learning signal.
// Overlapping or adjacent additions are merged so the invariant holds by
// construction.
class MaskSpanSet {
 public:
  MaskSpanSet() = default;

  void add(CharSpan s) {
    if (s.empty()) return;
    auto it = std::lower_bound(
        spans_.begin(), spans_.end(), s,
        [](const CharSpan& a, const CharSpan& b) { return a.start < b.start; });
    it = spans_.insert(it, s);
    // merge left
    if (it != spans_.begin() && std::prev(it)->end >= it->start) {
      auto prev = std::prev(it);
      prev->end = std::max(prev->end, it->end);
      it = spans_.erase(it);
      --it;
    }
    // merge right
    while (std::next(it) != spans_.end() && it->end >= std::next(it)->start) {
      it->end = std::max(it->end, std::next(it)->end);
      spans_.erase(std::next(it));
    }
  }

  bool contains(std::size_t offset) const {
    auto it = std::upper_bound(
        spans_.begin(), spans_.end(), offset,
        [](std::size_t off, const CharSpan& s) { return off < s.start; });
    return it != spans_.begin() && std::prev(it)->contains(offset);
  }

  const std::vector<CharSpan>& spans() const { return spans_; }
  bool empty() const { return spans_.empty(); }
  std::size_t size() const { return spans_.size(); }

  std::size_t total_masked() const {
    std::size_t n = 0;
    for (const auto& s : spans_) n += s.length();
    return n;
  }

  friend bool operator==(const MaskSpanSet&, const MaskSpanSet&) = default;

 private:
  std::vector<CharSpan> spans_;
};

}  // namespace proverloop
