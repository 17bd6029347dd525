#pragma once

#include "dmct/geometry.hpp"

namespace dmct {

/// Local maximum of a fused ground map.
struct Proposal {
  int row = 0;
  int col = 0;
  Vec2 position = Vec2::Zero();  // center of the cell, meters
  double score = 0.0;            // fused value at the cell
};

struct Detection {
  Proposal proposal;
  double class_score = 1.0;
  bool accepted = true;
};

}  // namespace dmct
