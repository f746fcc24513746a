#pragma once

#include <Eigen/Dense>

namespace bounce {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Axis-aligned bounding box.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  Vec widths() const { return hi - lo; }
};

}  // namespace bounce
