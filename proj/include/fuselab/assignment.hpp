#pragma once

// Exact maximum-weight linear sum assignment (Hungarian / shortest augmenting
// path with potentials, O(n^3)) with a canonical tie-break: among all optimal
// assignments the lexicographically smallest mapping is returned.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "fuselab/model.hpp"

namespace fuselab {

struct Assignment {
  std::vector<Eigen::Index> mapping;  // mapping[i] = column matched to row i
  double total_score = 0.0;
};

inline double assignment_score(const Matrix& c, const std::vector<Eigen::Index>& mapping) {
  double s = 0.0;
  for (std::size_t i = 0; i < mapping.size(); ++i) s += c(static_cast<Eigen::Index>(i), mapping[i]);
  return s;
}

namespace detail {

struct HungarianResult {
  std::vector<Eigen::Index> row_to_col;
  std::vector<double> u, v;  // row / column potentials
};

// Minimizes sum cost(i, row_to_col[i]).
inline HungarianResult hungarian_min(const Matrix& cost) {
  const Eigen::Index n = cost.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[js];
        if (cur < minv[js]) {
          minv[js] = cur;
          way[js] = j0;
        }
        if (minv[js] < delta) {
          delta = minv[js];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) {
          u[static_cast<std::size_t>(p[js])] += delta;
          v[js] -= delta;
        } else {
          minv[js] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  HungarianResult r;
  r.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (Eigen::Index j = 1; j <= n; ++j) r.row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  r.u.assign(u.begin() + 1, u.end());
  r.v.assign(v.begin() + 1, v.end());
  return r;
}

}  // namespace detail

inline Assignment linear_sum_assignment(const Matrix& c) {
  if (c.rows() != c.cols()) {
    throw ValidationError("linear_sum_assignment: matrix must be square, got " + std::to_string(c.rows()) + "x" +
                          std::to_string(c.cols()));
  }
  if (!all_finite(c)) throw ValidationError("linear_sum_assignment: non-finite entry");
  const Eigen::Index n = c.rows();
  if (n == 0) return {};

  const Matrix cost = -c;
  auto h = detail::hungarian_min(cost);
  const auto N = static_cast<std::size_t>(n);

  // Tight edges of the dual solution; every perfect matching on them is optimal.
  const double tol = 1e-12 * (1.0 + c.cwiseAbs().maxCoeff()) * static_cast<double>(n);
  std::vector<std::vector<bool>> tight(N, std::vector<bool>(N, false));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      tight[i][j] = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - h.u[i] - h.v[j] <= tol;

  std::vector<Eigen::Index> row_to_col = h.row_to_col;
  std::vector<Eigen::Index> col_to_row(N);
  for (std::size_t i = 0; i < N; ++i) {
    tight[i][static_cast<std::size_t>(row_to_col[i])] = true;
    col_to_row[static_cast<std::size_t>(row_to_col[i])] = static_cast<Eigen::Index>(i);
  }

  // Fix rows in order, each to the smallest column that still admits a
  // perfect tight matching of the remaining rows.
  std::vector<bool> col_locked(N, false);
  std::vector<bool> visited(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      if (!tight[i][j] || col_locked[j]) continue;
      if (static_cast<std::size_t>(row_to_col[i]) == j) break;

      const auto displaced = static_cast<std::size_t>(col_to_row[j]);
      const auto freed = static_cast<std::size_t>(row_to_col[i]);
      std::fill(visited.begin(), visited.end(), false);
      visited[j] = true;
      // Augmenting path from `displaced` ending at the freed column.
      std::function<bool(std::size_t)> augment = [&](std::size_t r) -> bool {
        for (std::size_t cc = 0; cc < N; ++cc) {
          if (!tight[r][cc] || col_locked[cc] || visited[cc]) continue;
          visited[cc] = true;
          if (cc == freed || augment(static_cast<std::size_t>(col_to_row[cc]))) {
            row_to_col[r] = static_cast<Eigen::Index>(cc);
            col_to_row[cc] = static_cast<Eigen::Index>(r);
            return true;
          }
        }
        return false;
      };
      const auto saved_rc = row_to_col;
      const auto saved_cr = col_to_row;
      row_to_col[i] = static_cast<Eigen::Index>(j);
      col_to_row[j] = static_cast<Eigen::Index>(i);
      visited[freed] = false;
      if (augment(displaced)) break;
      row_to_col = saved_rc;
      col_to_row = saved_cr;
    }
    col_locked[static_cast<std::size_t>(row_to_col[i])] = true;
  }

  Assignment a;
  a.mapping = std::move(row_to_col);
  a.total_score = assignment_score(c, a.mapping);
  return a;
}

}  // namespace fuselab
