#include "sclvi/pretext/grid.hpp"

#include <string>

namespace sclvi::pretext {

RelativeClass relative_class_of(const GridPose& a, const GridPose& b) {
  if (a.index < 0 || a.index > 8 || b.index < 0 || b.index > 8) {
    throw InvalidArgument("grid index outside 0..8: (" + std::to_string(a.index) + "," + std::to_string(b.index) +
                          ")");
  }
  if (a.index == b.index) {
    throw InvalidArgument("relative_class_of requires two distinct grid positions (got index " +
                          std::to_string(a.index) + " twice)");
  }
  if (a.index != 3 * a.row + a.col || b.index != 3 * b.row + b.col) {
    throw InvalidArgument("GridPose index/row/col mismatch");
  }
  int dr = b.row - a.row;
  int dc = b.col - a.col;
  if (dr < 0 || (dr == 0 && dc < 0)) {
    dr = -dr;
    dc = -dc;
  }
  for (int id = 0; id < static_cast<int>(kCanonicalDisplacements.size()); ++id) {
    if (kCanonicalDisplacements[id].first == dr && kCanonicalDisplacements[id].second == dc) {
      return RelativeClass{id, dr, dc};
    }
  }
  throw InvalidArgument("no canonical class for displacement (" + std::to_string(dr) + "," + std::to_string(dc) +
                        ")");
}

std::vector<PairClassEntry> enumerate_pair_classes() {
  std::vector<PairClassEntry> table;
  table.reserve(36);
  for (int a = 0; a < 9; ++a) {
    for (int b = a + 1; b < 9; ++b) {
      const RelativeClass rc = relative_class_of(GridPose::from_index(a), GridPose::from_index(b));
      table.push_back({a, b, rc.id});
    }
  }
  return table;
}

}  // namespace sclvi::pretext
