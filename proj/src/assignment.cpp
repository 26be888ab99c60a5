#include "mapdistill/assignment.hpp"

#include <limits>

namespace mapdistill {

std::vector<Index> solve_assignment(const MatXd& cost) {
  if (cost.rows() != cost.cols()) throw DimensionError("solve_assignment: cost matrix must be square");
  const Index n = cost.rows();
  if (n == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based internally; u/v are the row/column potentials.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<Index> way(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Index> col_match(static_cast<std::size_t>(n) + 1, 0);  // column -> row

  for (Index i = 1; i <= n; ++i) {
    col_match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = col_match[static_cast<std::size_t>(j0)];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
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
      for (Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(col_match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (col_match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      col_match[static_cast<std::size_t>(j0)] = col_match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Index> row_to_col(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(col_match[static_cast<std::size_t>(j)]) - 1] = j - 1;
  return row_to_col;
}

double assignment_cost(const MatXd& cost, const std::vector<Index>& row_to_col) {
  double total = 0.0;
  for (Index i = 0; i < cost.rows(); ++i) total += cost(i, row_to_col[static_cast<std::size_t>(i)]);
  return total;
}

}  // namespace mapdistill
