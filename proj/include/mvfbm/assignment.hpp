#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "mvfbm/errors.hpp"

namespace mvfbm::assignment {

// Square cost matrix, row-major.
struct CostMatrix {
    std::size_t n = 0;
    std::vector<double> cost;

    double operator()(std::size_t i, std::size_t j) const noexcept { return cost[i * n + j]; }
};

struct Assignment {
    std::vector<std::size_t> column_of_row;
    double total_cost = 0.0;
};

// Hungarian method with row/column potentials, O(n^3).
inline Assignment hungarian(const CostMatrix& c) {
    const std::size_t n = c.n;
    Assignment out;
    out.column_of_row.assign(n, 0);
    if (n == 0) return out;

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based internals; column 0 is the virtual start column
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = row_of_col[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (std::size_t j = 1; j <= n; ++j) out.column_of_row[row_of_col[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) out.total_cost += c(i, out.column_of_row[i]);
    return out;
}

inline constexpr std::size_t kExhaustiveCap = 10;

// Minimum over all n! permutations. Reference solver for small n.
inline Assignment exhaustive(const CostMatrix& c) {
    if (c.n > kExhaustiveCap) throw UnsupportedError("exhaustive assignment limited to 10 rows");
    std::vector<std::size_t> perm(c.n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Assignment best;
    best.total_cost = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < c.n; ++i) total += c(i, perm[i]);
        if (total < best.total_cost) {
            best.total_cost = total;
            best.column_of_row = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (c.n == 0) best.total_cost = 0.0;
    return best;
}

}  // namespace mvfbm::assignment
