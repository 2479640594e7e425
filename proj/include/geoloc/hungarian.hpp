#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "geoloc/error.hpp"

namespace geoloc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Maximum-score assignment of every row of `score` (rows <= cols) to a
/// distinct column. Entries equal to -inf are forbidden. Returns the column
/// chosen for each row.
///
/// Shortest augmenting path with potentials, O(rows^2 * cols). Columns are
/// scanned in index order and only strictly better candidates replace the
/// current one, so ties resolve toward lower indices deterministically.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& score) {
  const int rows = static_cast<int>(score.rows()), cols = static_cast<int>(score.cols());
  if (rows == 0) return {};
  if (rows > cols) fail(ErrorKind::Infeasible, "more rows than columns");

  // Forbidden cells become a finite penalty larger than any feasible spread.
  double spread = 1.0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (std::isfinite(score(i, j))) spread += std::abs(score(i, j));
  const double forbidden = 2.0 * spread * (rows + 1);
  auto cost = [&](int i, int j) {
    const double s = score(i - 1, j - 1);
    return std::isfinite(s) ? -s : forbidden;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> owner(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> column(rows, -1);
  for (int j = 1; j <= cols; ++j)
    if (owner[j] != 0) column[owner[j] - 1] = j - 1;
  for (int i = 0; i < rows; ++i)
    if (!std::isfinite(score(i, column[i]))) fail(ErrorKind::Infeasible, "no assignment avoids forbidden cells");
  return column;
}

struct AssignmentResult {
  std::vector<std::pair<int, int>> matches;  // (track, detection)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
  double total_score = 0.0;
};

/// Tracker assignment over an m x (n + m) score matrix: columns [0, n) are
/// detections, column n + i is track i's "no detection" option.
inline AssignmentResult hungarian(const Eigen::MatrixXd& score, int detections) {
  const int m = static_cast<int>(score.rows());
  if (score.cols() != detections + m) fail(ErrorKind::ShapeMismatch, "score matrix must be m x (n + m)");
  AssignmentResult r;
  const std::vector<int> column = solve_assignment(score);
  std::vector<char> taken(detections, 0);
  for (int i = 0; i < m; ++i) {
    r.total_score += score(i, column[i]);
    if (column[i] < detections) {
      r.matches.emplace_back(i, column[i]);
      taken[column[i]] = 1;
    } else {
      r.unmatched_tracks.push_back(i);
    }
  }
  for (int j = 0; j < detections; ++j)
    if (!taken[j]) r.unmatched_detections.push_back(j);
  return r;
}

}  // namespace geoloc
