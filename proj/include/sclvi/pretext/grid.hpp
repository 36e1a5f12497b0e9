#pragma once

#include <array>
#include <vector>

#include "sclvi/core/error.hpp"
#include "sclvi/core/image.hpp"

namespace sclvi::pretext {

// One slot of the 3x3 sampling grid plus the pixel rectangle actually
// cropped for it (after jitter).
struct GridPose {
  int index = 0;  // 0..8, row-major
  int row = 0;    // 0..2
  int col = 0;    // 0..2
  Rect rect;

  static GridPose from_index(int idx) {
    GridPose p;
    p.index = idx;
    p.row = idx / 3;
    p.col = idx % 3;
    return p;
  }
};

// One of the 12 relative-position classes. Displacements are
// sign-canonicalized: (dr, dc) is negated whenever dr < 0, or dr == 0 and
// dc < 0, collapsing the 36 unordered pairs onto 12 classes. Class ids
// follow the lexicographic order of the canonical displacements:
//   0:(0,1) 1:(0,2) 2:(1,-2) 3:(1,-1) 4:(1,0) 5:(1,1) 6:(1,2)
//   7:(2,-2) 8:(2,-1) 9:(2,0) 10:(2,1) 11:(2,2)
// This enumeration is fixed so trained checkpoints stay portable.
struct RelativeClass {
  int id = 0;
  int drow = 0;
  int dcol = 0;
};

inline constexpr std::array<std::pair<int, int>, 12> kCanonicalDisplacements = {{
    {0, 1}, {0, 2}, {1, -2}, {1, -1}, {1, 0}, {1, 1}, {1, 2}, {2, -2}, {2, -1}, {2, 0}, {2, 1}, {2, 2},
}};

RelativeClass relative_class_of(const GridPose& a, const GridPose& b);

struct PairClassEntry {
  int index_a = 0;  // index_a < index_b
  int index_b = 0;
  int class_id = 0;
};

// Complete deterministic table of all C(9,2) = 36 unordered grid pairs,
// ordered by (index_a, index_b).
std::vector<PairClassEntry> enumerate_pair_classes();

}  // namespace sclvi::pretext
