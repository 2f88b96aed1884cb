#pragma once

#include "temi/types.hpp"

#include <vector>

namespace temi {

struct Assignment {
    std::vector<int> row_to_col; // -1 for rows left unassigned (rows > cols)
    double total = 0.0;
};

/// Kuhn-Munkres with potentials, O(n^2 m). Minimizes total cost over one-to-one
/// row/column assignments of a rectangular matrix; every row is assigned when rows <= cols.
[[nodiscard]] Assignment solve_min_cost_assignment(const Matrix& cost);

/// Same, maximizing total weight.
[[nodiscard]] Assignment solve_max_weight_assignment(const Matrix& weight);

} // namespace temi
