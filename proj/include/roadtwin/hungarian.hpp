#pragma once

#include <vector>

#include <Eigen/Dense>

namespace roadtwin {

struct Assignment {
  /// Column assigned to each row, -1 when the row stays unassigned
  /// (only possible when rows > cols).
  std::vector<int> row_to_col;
  std::vector<int> col_to_row;
  double cost = 0.0;
};

/// Minimum-cost one-to-one assignment (Kuhn-Munkres with potentials,
/// O(n² m)). Rectangular matrices assign min(rows, cols) pairs.
/// Throws std::invalid_argument on non-finite costs.
Assignment hungarian(const Eigen::MatrixXd& cost);

}  // namespace roadtwin
