#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace dkcf {

using AssignmentPairs = std::vector<std::pair<int, int>>;

/// Minimum-cost assignment of min(rows, cols) (row, col) pairs.
///
/// Solved with the O(n^3) shortest-augmenting-path Hungarian method on the
/// zero-padded square matrix. Among optimal assignments the lexicographically
/// smallest column sequence (rows in order, real columns before padding) is
/// returned. Pairs are sorted by row. Costs must be finite.
AssignmentPairs hungarian(const Eigen::MatrixXd& cost);

/// Sum of cost over the given pairs.
double assignment_cost(const Eigen::MatrixXd& cost, const AssignmentPairs& pairs);

}  // namespace dkcf
