#include "cantor/oracle.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "cantor/kernels.h"
#include "cantor/training.h"

namespace cantor::oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_guard(const Equation& y, int L) {
  if (L > kMaxGraphSize) throw GuardExceeded("oracle: graph size above guard");
  if (y.empty() || static_cast<int>(y.size()) > L) throw GuardExceeded("oracle: need 1 <= |Y| <= L");
}

double safe_score(const ProbTables& tables, const Equation& y, const std::vector<int>& mapping) {
  try {
    return score_mapping(tables, y, mapping);
  } catch (const MaskedOperand&) {
    return kNegInf;
  }
}

}  // namespace

MappingSet enumerate_mappings(const Equation& y, int L, Semantics semantics) {
  check_guard(y, L);
  MappingSet set;
  set.semantics = semantics;
  const auto m = y.size();
  std::vector<int> cur(m, 0);

  if (semantics == Semantics::kOrderPreserving) {
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int next) {
      if (i == m) {
        set.mappings.push_back(cur);
        return;
      }
      for (int p = next; p <= L - static_cast<int>(m - i - 1); ++p) {
        cur[i] = p;
        rec(i + 1, p + 1);
      }
    };
    rec(0, 1);
  } else {
    const LevelPartition lp = LevelPartition::of(y);
    std::vector<bool> used(static_cast<std::size_t>(L) + 1, false);
    // Level by level; inside a level, every injective placement in (lb, ub].
    std::function<void(std::size_t, std::size_t, int)> rec = [&](std::size_t l, std::size_t k, int lb) {
      if (l == lp.levels.size()) {
        set.mappings.push_back(cur);
        return;
      }
      const auto& level = lp.levels[l];
      if (k == level.size()) {
        int mx = 0;
        for (int i : level) mx = std::max(mx, cur[static_cast<std::size_t>(i)]);
        rec(l + 1, 0, mx);
        return;
      }
      const int ub = L - lp.slots_above(l);
      for (int p = lb + 1; p <= ub; ++p) {
        if (used[static_cast<std::size_t>(p)]) continue;
        used[static_cast<std::size_t>(p)] = true;
        cur[static_cast<std::size_t>(level[k])] = p;
        rec(l, k + 1, lb);
        used[static_cast<std::size_t>(p)] = false;
      }
      cur[static_cast<std::size_t>(level[k])] = 0;
    };
    rec(0, 0, 0);
  }
  std::sort(set.mappings.begin(), set.mappings.end());
  return set;
}

ArgmaxResult exact_argmax(const Equation& y, const ProbTables& tables, Semantics semantics) {
  const MappingSet set = enumerate_mappings(y, tables.dims.L, semantics);
  ArgmaxResult best{{}, kNegInf};
  for (const auto& mapping : set.mappings) {
    const double s = safe_score(tables, y, mapping);
    if (best.mapping.empty() || s > best.log_prob) best = {mapping, s};
  }
  return best;
}

double exact_log_marginal(const Equation& y, const ProbTables& tables, Semantics semantics) {
  const MappingSet set = enumerate_mappings(y, tables.dims.L, semantics);
  std::vector<double> scores;
  scores.reserve(set.mappings.size());
  for (const auto& mapping : set.mappings) scores.push_back(safe_score(tables, y, mapping));
  return kernels::log_sum_exp(scores);
}

double exact_marginal(const Equation& y, const ProbTables& tables, Semantics semantics) {
  return std::exp(exact_log_marginal(y, tables, semantics));
}

std::vector<Assignment> exhaustive_kbest(const Matrix& scores, int B) {
  if (scores.rows() > 4 || scores.cols() > 5) throw GuardExceeded("exhaustive_kbest: guard is 4x5");
  if (scores.rows() > scores.cols()) throw std::invalid_argument("exhaustive_kbest: more rows than columns");
  const std::size_t m = scores.rows();
  std::vector<Assignment> all;
  std::vector<int> cur(m, 0);
  std::vector<bool> used(scores.cols(), false);
  std::function<void(std::size_t)> rec = [&](std::size_t r) {
    if (r == m) {
      const double s = assignment_score(scores, cur);
      if (s != kNegInf) all.push_back({cur, s});
      return;
    }
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      if (used[c]) continue;
      used[c] = true;
      cur[r] = static_cast<int>(c);
      rec(r + 1);
      used[c] = false;
    }
  };
  rec(0);
  std::stable_sort(all.begin(), all.end(), [](const Assignment& x, const Assignment& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.columns < y.columns;
  });
  if (static_cast<int>(all.size()) > B) all.resize(static_cast<std::size_t>(B));
  return all;
}

}  // namespace cantor::oracle
