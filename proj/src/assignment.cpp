#include "dkcf/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dkcf {

namespace {

// Shortest augmenting path with row/column potentials on a square matrix.
struct SquareSolution {
  std::vector<int> row_to_col;
  std::vector<double> u;  // row potentials, 1-based
  std::vector<double> v;  // column potentials, 1-based
};

SquareSolution solve_square(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  SquareSolution out;
  out.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) out.row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  }
  out.u = std::move(u);
  out.v = std::move(v);
  return out;
}

// Perfect matching over the zero-reduced-cost ("tight") edges, repaired one
// forced edge at a time. Every optimal assignment uses only tight edges, and
// every perfect matching on them is optimal.
class TightMatching {
 public:
  TightMatching(std::vector<std::vector<char>> tight, std::vector<int> row_to_col)
      : n_(static_cast<int>(row_to_col.size())),
        tight_(std::move(tight)),
        row_(std::move(row_to_col)),
        col_(static_cast<std::size_t>(n_), -1),
        col_fixed_(static_cast<std::size_t>(n_), 0) {
    for (int r = 0; r < n_; ++r) col_[static_cast<std::size_t>(row_[static_cast<std::size_t>(r)])] = r;
  }

  /// Smallest column row i can take in some optimal assignment that keeps
  /// the earlier rows' choices; fixes it.
  int fix_smallest(int i) {
    for (int j = 0; j < n_; ++j) {
      if (!tight_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] || col_fixed_[static_cast<std::size_t>(j)]) continue;
      if (row_[static_cast<std::size_t>(i)] == j || force(i, j)) {
        col_fixed_[static_cast<std::size_t>(j)] = 1;
        return j;
      }
    }
    return row_[static_cast<std::size_t>(i)];  // unreachable: the current column always qualifies
  }

 private:
  bool force(int i, int j) {
    const auto saved_row = row_;
    const auto saved_col = col_;
    const int c0 = row_[static_cast<std::size_t>(i)];
    const int r = col_[static_cast<std::size_t>(j)];
    row_[static_cast<std::size_t>(i)] = j;
    col_[static_cast<std::size_t>(j)] = i;
    row_[static_cast<std::size_t>(r)] = -1;
    col_[static_cast<std::size_t>(c0)] = -1;
    blocked_col_ = j;
    visited_.assign(static_cast<std::size_t>(n_), 0);
    if (augment(r)) return true;
    row_ = saved_row;
    col_ = saved_col;
    return false;
  }

  bool augment(int r) {
    for (int c = 0; c < n_; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      if (!tight_[static_cast<std::size_t>(r)][cs] || visited_[cs] || col_fixed_[cs] || c == blocked_col_) continue;
      visited_[cs] = 1;
      if (col_[cs] < 0 || augment(col_[cs])) {
        row_[static_cast<std::size_t>(r)] = c;
        col_[cs] = r;
        return true;
      }
    }
    return false;
  }

  int n_;
  std::vector<std::vector<char>> tight_;
  std::vector<int> row_;
  std::vector<int> col_;
  std::vector<char> col_fixed_;
  std::vector<char> visited_;
  int blocked_col_ = -1;
};

}  // namespace

AssignmentPairs hungarian(const Eigen::MatrixXd& cost) {
  const auto rows = static_cast<int>(cost.rows());
  const auto cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return {};

  const int n = std::max(rows, cols);
  Eigen::MatrixXd square = Eigen::MatrixXd::Zero(n, n);
  square.topLeftCorner(rows, cols) = cost;

  const SquareSolution sol = solve_square(square);
  const double tol = 1e-12 * std::max(1.0, n * square.cwiseAbs().maxCoeff());
  std::vector<std::vector<char>> tight(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double reduced = square(i, j) - sol.u[static_cast<std::size_t>(i + 1)] - sol.v[static_cast<std::size_t>(j + 1)];
      tight[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = reduced <= tol;
    }
    tight[static_cast<std::size_t>(i)][static_cast<std::size_t>(sol.row_to_col[static_cast<std::size_t>(i)])] = 1;
  }

  // Lexicographic tie-break: rows in order, each takes the smallest column
  // that still admits an optimal completion.
  TightMatching matching(std::move(tight), sol.row_to_col);
  AssignmentPairs pairs;
  for (int r = 0; r < n; ++r) {
    const int c = matching.fix_smallest(r);
    if (r < rows && c < cols) pairs.emplace_back(r, c);
  }
  return pairs;
}

double assignment_cost(const Eigen::MatrixXd& cost, const AssignmentPairs& pairs) {
  double s = 0.0;
  for (const auto& [r, c] : pairs) s += cost(r, c);
  return s;
}

}  // namespace dkcf
