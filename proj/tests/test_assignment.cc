#include <cmath>
#include <limits>
#include <random>

#include "cantor/assignment.h"
#include "cantor/oracle.h"
#include "doctest.h"

using namespace cantor;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

Matrix from_probs(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = std::log(v);
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("two by two ranking") {
  Matrix s = from_probs({{0.7, 0.3}, {0.4, 0.6}});
  auto k = kbest_assignment(s, 5);
  REQUIRE(k.size() == 2);
  CHECK(k[0].columns == std::vector<int>{0, 1});
  CHECK(std::exp(k[0].score) == doctest::Approx(0.42));
  CHECK(k[1].columns == std::vector<int>{1, 0});
  CHECK(std::exp(k[1].score) == doctest::Approx(0.12));
}

TEST_CASE("one by one") {
  Matrix s(1, 1, -0.5);
  auto k = kbest_assignment(s, 3);
  REQUIRE(k.size() == 1);
  CHECK(k[0].score == -0.5);
  CHECK(oracle::exhaustive_kbest(s, 3).size() == 1);
}

TEST_CASE("all feasible assignments when B is large") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int m = 1; m <= 4; ++m)
    for (int n = m; n <= 4; ++n) {
      Matrix s(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
      for (double& v : s.flat()) v = g(rng);
      std::size_t expected = 1;
      for (int i = 0; i < m; ++i) expected *= static_cast<std::size_t>(n - i);
      CHECK(kbest_assignment(s, 1000).size() == expected);
    }
}

TEST_CASE("forbidden cells never appear") {
  Matrix s = from_probs({{0.5, 0.2, 0.3}, {0.1, 0.8, 0.1}});
  s(0, 0) = kNegInf;
  for (const auto& a : kbest_assignment(s, 10)) CHECK(a.columns[0] != 0);
  for (const auto& a : oracle::exhaustive_kbest(s, 10)) CHECK(a.columns[0] != 0);
  Matrix dead(2, 2, kNegInf);
  CHECK_THROWS_AS(kbest_assignment(dead, 1), InfeasibleAssignment);
  CHECK_FALSE(best_assignment(dead).has_value());
}

TEST_CASE("ties are ordered lexicographically") {
  Matrix s(2, 3, 0.0);
  auto k = kbest_assignment(s, 3);
  REQUIRE(k.size() == 3);
  CHECK(k[0].columns == std::vector<int>{0, 1});
  CHECK(k[1].columns == std::vector<int>{0, 2});
  CHECK(k[2].columns == std::vector<int>{1, 0});
  CHECK(k == oracle::exhaustive_kbest(s, 3));
}

TEST_CASE("random matrices match exhaustive enumeration") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int i = 0; i < 200; ++i) {
    const int m = 1 + static_cast<int>(rng() % 4);
    const int n = m + static_cast<int>(rng() % static_cast<std::uint64_t>(6 - m));
    const int B = 1 + static_cast<int>(rng() % 12);
    Matrix s(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
    // coarse values make ties common
    for (double& v : s.flat()) v = (i % 2) ? std::round(g(rng) * 2) / 2 : g(rng);
    if (n > 1 && rng() % 4 == 0) s(0, 0) = kNegInf;
    auto fast = kbest_assignment(s, B);
    auto slow = oracle::exhaustive_kbest(s, B);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t j = 0; j < fast.size(); ++j) {
      CHECK(fast[j].columns == slow[j].columns);
      CHECK(fast[j].score == doctest::Approx(slow[j].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("best assignment rejects wide problems") {
  Matrix s(3, 2, 0.0);
  CHECK_THROWS(best_assignment(s));
  CHECK_THROWS(kbest_assignment(s, 1));
}
