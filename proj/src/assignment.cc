#include "cantor/assignment.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace cantor {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Tie completion stops after this many extra solutions past the B-th one.
constexpr int kMaxTieExtras = 256;

bool ranks_before(const Assignment& x, const Assignment& y) {
  if (x.score != y.score) return x.score > y.score;
  return x.columns < y.columns;
}

struct Node {
  Matrix scores;
  Assignment solution;
};

struct NodeOrder {
  bool operator()(const Node& x, const Node& y) const { return ranks_before(y.solution, x.solution); }
};

}  // namespace

double assignment_score(const Matrix& scores, const std::vector<int>& columns) {
  double s = 0.0;
  for (std::size_t r = 0; r < columns.size(); ++r) s += scores(r, static_cast<std::size_t>(columns[r]));
  return s;
}

std::optional<Assignment> best_assignment(const Matrix& scores) {
  const std::size_t n = scores.rows(), m = scores.cols();
  if (n == 0) return Assignment{{}, 0.0};
  if (n > m) throw std::invalid_argument("best_assignment: more rows than columns");

  // Minimize shifted costs; forbidden cells cost more than any finite
  // assignment can.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : scores.flat())
    if (v != kNegInf) {
      if (!std::isfinite(v)) throw std::invalid_argument("best_assignment: non-finite score");
      lo = std::min(lo, -v);
      hi = std::max(hi, -v);
    }
  if (!std::isfinite(lo)) return std::nullopt;
  const double range = hi - lo + 1.0;
  const double forbidden = range * static_cast<double>(n + 1);
  auto cost = [&](std::size_t r, std::size_t c) {
    const double v = scores(r, c);
    return v == kNegInf ? forbidden : -v - lo;
  };

  // Shortest augmenting path Hungarian method, 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  Assignment a;
  a.columns.assign(n, -1);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) a.columns[p[j] - 1] = static_cast<int>(j - 1);
  for (std::size_t r = 0; r < n; ++r)
    if (scores(r, static_cast<std::size_t>(a.columns[r])) == kNegInf) return std::nullopt;
  a.score = assignment_score(scores, a.columns);
  return a;
}

std::vector<Assignment> kbest_assignment(const Matrix& scores, int B) {
  if (B < 1) throw std::invalid_argument("kbest_assignment: B must be >= 1");
  if (scores.rows() > scores.cols())
    throw std::invalid_argument("kbest_assignment: more rows than columns");
  auto root = best_assignment(scores);
  if (!root) throw InfeasibleAssignment("no feasible assignment");

  std::priority_queue<Node, std::vector<Node>, NodeOrder> queue;
  queue.push({scores, *root});
  std::vector<Assignment> found;
  int extras = 0;
  const std::size_t rows = scores.rows();

  while (!queue.empty()) {
    if (static_cast<int>(found.size()) >= B) {
      // Keep going only through solutions tied with the B-th score so that
      // the final tie order does not depend on the partition order.
      if (queue.top().solution.score < found[static_cast<std::size_t>(B) - 1].score ||
          extras >= kMaxTieExtras)
        break;
      ++extras;
    }
    Node node = queue.top();
    queue.pop();
    found.push_back(node.solution);

    // Murty partition: child i fixes rows 0..i-1 to this solution and bans
    // (i, solution[i]).
    Matrix constrained = node.scores;
    for (std::size_t i = 0; i < rows; ++i) {
      const auto col_i = static_cast<std::size_t>(node.solution.columns[i]);
      Matrix child = constrained;
      child(i, col_i) = kNegInf;
      if (auto sol = best_assignment(child)) {
        sol->score = assignment_score(scores, sol->columns);
        queue.push({std::move(child), std::move(*sol)});
      }
      // Force row i to col_i for the remaining children.
      for (std::size_t c = 0; c < constrained.cols(); ++c)
        if (c != col_i) constrained(i, c) = kNegInf;
      for (std::size_t r = 0; r < rows; ++r)
        if (r != i) constrained(r, col_i) = kNegInf;
    }
  }
  std::stable_sort(found.begin(), found.end(), ranks_before);
  if (static_cast<int>(found.size()) > B) found.resize(static_cast<std::size_t>(B));
  return found;
}

}  // namespace cantor
