#include <algorithm>
#include <cmath>
#include <random>

#include "cantor/graph.h"
#include "cantor/oracle.h"
#include "cantor/training.h"
#include "cantor/verify.h"
#include "doctest.h"

using namespace cantor;
using oracle::Semantics;

namespace {

const OperatorSet kOps = OperatorSet::arithmetic();

Equation parse(std::string_view s) { return parse_equation(s, kOps, {}); }

}  // namespace

TEST_CASE("order preserving enumeration") {
  Equation y = parse("( num@1 + num@2 ) * num@1");
  auto set = oracle::enumerate_mappings(y, 3, Semantics::kOrderPreserving);
  CHECK(set.mappings == std::vector<std::vector<int>>{{1, 2}, {1, 3}, {2, 3}});
  CHECK(oracle::enumerate_mappings(y, 2, Semantics::kOrderPreserving).mappings.size() == 1);
}

TEST_CASE("enumeration count equals gamma") {
  std::mt19937_64 rng(2);
  for (int L = 1; L <= 10; ++L)
    for (int m = 1; m <= std::min(L, 5); ++m) {
      Equation y = verify::random_equation(m, verify::Shape::kChain, 3, 0, rng);
      CHECK(oracle::enumerate_mappings(y, L, Semantics::kOrderPreserving).mappings.size() == gamma_count(L, m));
    }
}

TEST_CASE("level permutations include order preserving mappings") {
  Equation y = parse("( num@1 + num@2 ) * ( num@2 - num@1 )");
  auto op = oracle::enumerate_mappings(y, 5, Semantics::kOrderPreserving);
  auto lp = oracle::enumerate_mappings(y, 5, Semantics::kLevelPermutations);
  CHECK(lp.mappings.size() > op.mappings.size());
  for (const auto& m : op.mappings)
    CHECK(std::find(lp.mappings.begin(), lp.mappings.end(), m) != lp.mappings.end());
}

TEST_CASE("guard refuses large graphs") {
  Equation y = parse("num@1 + num@2");
  CHECK_THROWS_AS(oracle::enumerate_mappings(y, oracle::kMaxGraphSize + 1, Semantics::kOrderPreserving),
                  oracle::GuardExceeded);
}

TEST_CASE("peaked tables select the planted mapping") {
  Equation y = parse("( num@1 + num@2 ) * num@1");
  TableDims d{4, 4, 0, 2};
  Matrix pf(4, 4, 0.0), pa(4, 6, 0.0), pb(4, 6, 0.0);
  std::vector<double> pr(4, 0.0);
  // plant vertex 2 = num1 + num2, vertex 4 = v2 * num1
  pf(1, 0) = 20;
  pa(1, 4) = 20;
  pb(1, 5) = 20;
  pf(3, 2) = 20;
  pa(3, 1) = 20;
  pb(3, 4) = 20;
  pr[3] = 20;
  ProbTables t = ProbTables::from_logits(kOps, d, pf, pa, pb, pr);
  CHECK(oracle::exact_argmax(y, t, Semantics::kOrderPreserving).mapping == std::vector<int>{2, 4});
  CHECK(hardem_best_mapping(y, t, 1).mapping == std::vector<int>{2, 4});
}

TEST_CASE("single operation argmax closed form") {
  Equation y = parse("num@2 / num@1");
  std::mt19937_64 rng(6);
  ProbTables t = verify::random_tables(TableDims{5, 4, 0, 2}, kOps, rng);
  int best = 0;
  double bv = -1e300;
  for (int p = 0; p < 5; ++p) {
    const double v = t.log_pr[static_cast<std::size_t>(p)] + t.log_pf(p, 3) + t.log_pa(p, 6) + t.log_pb(p, 5);
    if (v > bv) bv = v, best = p + 1;
  }
  auto r = oracle::exact_argmax(y, t, Semantics::kOrderPreserving);
  CHECK(r.mapping == std::vector<int>{best});
  CHECK(r.log_prob == doctest::Approx(bv).epsilon(1e-12));
}

TEST_CASE("marginal properties") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    TableDims d{2 + static_cast<int>(rng() % 5), 4, 1, 3};
    ProbTables t = verify::random_tables(d, kOps, rng, 3.0);
    Equation y = verify::random_equation(1 + static_cast<int>(rng() % std::min(3, d.L)), verify::Shape::kAny, 3, 1, rng);
    if (static_cast<int>(y.size()) > d.L) continue;
    const double m = oracle::exact_marginal(y, t, Semantics::kOrderPreserving);
    CHECK(m <= 1.0);
    CHECK(m >= 0.0);
    CHECK(std::log(m) == doctest::Approx(oracle::exact_log_marginal(y, t, Semantics::kOrderPreserving)));
  }
  // one mapping: marginal equals the single graph's probability
  Equation y = parse("( num@1 + num@2 ) * num@1");
  ProbTables t = verify::random_tables(TableDims{2, 4, 0, 2}, kOps, rng);
  std::vector<int> only{1, 2};
  CHECK(oracle::exact_marginal(y, t, Semantics::kOrderPreserving) ==
        doctest::Approx(std::exp(score_graph(t, mapping_to_graph(y, only)))).epsilon(1e-12));
}

TEST_CASE("exhaustive k-best guard") {
  Matrix s(5, 5, 0.0);
  CHECK_THROWS_AS(oracle::exhaustive_kbest(s, 1), oracle::GuardExceeded);
}
