#include "temi/hungarian.hpp"

#include <limits>

namespace temi {

namespace {

// Rows <= cols. Shortest augmenting paths with row/column potentials (1-based internally).
std::vector<int> assign_rows(const Matrix& cost) {
    const auto n = static_cast<int>(cost.rows());
    const auto m = static_cast<int>(cost.cols());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> match(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = match[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j)
        if (match[static_cast<std::size_t>(j)] != 0) row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

} // namespace

Assignment solve_min_cost_assignment(const Matrix& cost) {
    Assignment out;
    if (cost.rows() == 0 || cost.cols() == 0) {
        out.row_to_col.assign(static_cast<std::size_t>(cost.rows()), -1);
        return out;
    }
    if (cost.rows() <= cost.cols()) {
        out.row_to_col = assign_rows(cost);
    } else {
        const Matrix transposed = cost.transpose();
        const auto col_to_row = assign_rows(transposed);
        out.row_to_col.assign(static_cast<std::size_t>(cost.rows()), -1);
        for (std::size_t c = 0; c < col_to_row.size(); ++c) out.row_to_col[static_cast<std::size_t>(col_to_row[c])] = static_cast<int>(c);
    }
    for (std::size_t r = 0; r < out.row_to_col.size(); ++r)
        if (out.row_to_col[r] >= 0) out.total += cost(static_cast<Eigen::Index>(r), out.row_to_col[r]);
    return out;
}

Assignment solve_max_weight_assignment(const Matrix& weight) {
    Assignment out = solve_min_cost_assignment(-weight);
    out.total = -out.total;
    return out;
}

} // namespace temi
