#pragma once

#include "mapdistill/tensor.hpp"

namespace mapdistill {

// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
// potentials, O(n^3)). Returns row -> column.
std::vector<Index> solve_assignment(const MatXd& cost);

double assignment_cost(const MatXd& cost, const std::vector<Index>& row_to_col);

}  // namespace mapdistill
