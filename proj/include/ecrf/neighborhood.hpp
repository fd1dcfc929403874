#pragma once

#include <cstdlib>
#include <optional>

namespace ecrf {

// Pixel set G a cell exchanges messages with: every other cell, or the cells
// inside a square window of the given Chebyshev radius.
struct Neighborhood {
  std::optional<int> radius;

  static Neighborhood all_pairs() { return {}; }
  static Neighborhood window(int r) { return {r}; }

  bool is_all_pairs() const { return !radius.has_value(); }
  bool contains(int dy, int dx) const {
    if (dy == 0 && dx == 0) return false;
    return !radius || (std::abs(dy) <= *radius && std::abs(dx) <= *radius);
  }
};

}  // namespace ecrf
