#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cantor/graph.h"
#include "cantor/oracle.h"
#include "cantor/verify.h"
#include "doctest.h"

using namespace cantor;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

// score by walking the entries directly, no shared helper
double score_by_hand(const ProbTables& t, const DecodedGraph& z) {
  double s = t.log_pr[static_cast<std::size_t>(z.root_position() - 1)];
  for (const auto& e : z.entries) {
    const int r = e.position - 1;
    s += t.log_pf(r, t.op_column(e.op));
    s += t.log_pa(r, t.dims.column(e.a));
    s += t.log_pb(r, t.dims.column(e.b));
  }
  return s;
}

DecodedGraph random_graph(int L, int C, int N, std::mt19937_64& rng) {
  std::vector<VertexPrediction> v(static_cast<std::size_t>(L));
  const auto ops = OperatorSet::arithmetic();
  for (int p = 1; p <= L; ++p) {
    auto pick = [&]() {
      const int hi = (p - 1) + C + N;
      const int c = static_cast<int>(rng() % static_cast<std::uint64_t>(hi));
      if (c < p - 1) return VertexOperand::vertex(c + 1);
      if (c < p - 1 + C) return VertexOperand::constant(c - (p - 1) + 1);
      return VertexOperand::number(c - (p - 1) - C + 1);
    };
    v[static_cast<std::size_t>(p - 1)] = {ops.at(rng() % ops.size()), pick(), pick()};
  }
  const int root = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(L));
  return extract_subgraph(v, root);
}

}  // namespace

TEST_CASE("operand mask") {
  TableDims d{3, 4, 1, 2};
  OperandMask m = operand_mask(d);
  for (int v = 0; v < 3; ++v) CHECK_FALSE(m.allowed(0, v));
  for (int c = 3; c < d.candidates(); ++c) CHECK(m.allowed(0, c));
  CHECK(m.allowed(2, 0));
  CHECK(m.allowed(2, 1));
  CHECK_FALSE(m.allowed(2, 2));
  for (int c = 3; c < d.candidates(); ++c) CHECK(m.allowed(2, c));
}

TEST_CASE("masked softmax gives exact zeros") {
  std::mt19937_64 rng(5);
  TableDims d{5, 4, 2, 3};
  ProbTables t = verify::random_tables(d, OperatorSet::arithmetic(), rng, 4.0);
  CHECK_FALSE(t.check_invariants().has_value());
  for (int p = 0; p < d.L; ++p)
    for (int c = p; c < d.L; ++c) {
      CHECK(t.log_pa(p, c) == kNegInf);
      CHECK(t.pb(p, c) == 0.0);
    }
}

TEST_CASE("score of uniform single entry") {
  TableDims d{2, 2, 1, 2};
  ProbTables t = ProbTables::uniform(OperatorSet::parse("add,sub"), d);
  DecodedGraph z{{{1, Operator::kAdd, VertexOperand::number(1), VertexOperand::constant(1)}}};
  const double expected = std::log(0.5) + std::log(0.5) + 2 * std::log(1.0 / 3.0);
  CHECK(score_graph(t, z) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("score rejects self reference") {
  TableDims d{3, 4, 0, 2};
  ProbTables t = ProbTables::uniform(OperatorSet::arithmetic(), d);
  DecodedGraph z{{{2, Operator::kAdd, VertexOperand::vertex(2), VertexOperand::number(1)}}};
  CHECK_THROWS_AS(score_graph(t, z), MaskedOperand);
}

TEST_CASE("score matches independent sum") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    TableDims d{1 + static_cast<int>(rng() % 8), 4, 2, 3};
    ProbTables t = verify::random_tables(d, OperatorSet::arithmetic(), rng);
    DecodedGraph z = random_graph(d.L, d.C, d.N, rng);
    REQUIRE_FALSE(check_graph_invariants(z, d.L).has_value());
    CHECK(score_graph(t, z) == doctest::Approx(score_by_hand(t, z)).epsilon(1e-12));
  }
}

TEST_CASE("extract equation follows reachability") {
  std::vector<VertexPrediction> v{
      {Operator::kMul, VertexOperand::number(3), VertexOperand::number(3)},
      {Operator::kAdd, VertexOperand::number(2), VertexOperand::number(3)},
      {Operator::kSub, VertexOperand::vertex(1), VertexOperand::number(1)},
      {Operator::kMul, VertexOperand::number(1), VertexOperand::vertex(2)},
  };
  Equation eq = extract_equation(v, 4);
  REQUIRE(eq.size() == 2);
  CHECK(eq.ops[0] == Operation{Operator::kAdd, OperandRef::number(2), OperandRef::number(3)});
  CHECK(eq.ops[1] == Operation{Operator::kMul, OperandRef::number(1), OperandRef::operation(1)});

  Equation leaf = extract_equation(v, 2);
  CHECK(leaf.size() == 1);

  DecodedGraph z = extract_subgraph(v, 4);
  CHECK(z.entries.size() == 2);
  CHECK(z.entries[0].position == 2);
  CHECK(z.root_position() == 4);
}

TEST_CASE("identical vertices keep only reachable part") {
  std::vector<VertexPrediction> v(6, {Operator::kAdd, VertexOperand::number(1), VertexOperand::number(2)});
  for (int root = 1; root <= 6; ++root) CHECK(extract_equation(v, root).size() == 1);
  for (int p = 2; p <= 6; ++p) v[static_cast<std::size_t>(p - 1)].a = VertexOperand::vertex(p - 1);
  for (int root = 1; root <= 6; ++root) {
    Equation eq = extract_equation(v, root);
    CHECK(static_cast<int>(eq.size()) == root);
    CHECK(fully_reachable(eq));
  }
}

TEST_CASE("in-place evaluation matches extracted equation") {
  std::mt19937_64 rng(17);
  const ConstantsConfig c({{"2", 2.0}});
  std::vector<double> nums{3, 7, 11};
  for (int i = 0; i < 200; ++i) {
    DecodedGraph z = random_graph(6, 1, 3, rng);
    std::vector<VertexPrediction> v(6, {Operator::kAdd, VertexOperand::number(1), VertexOperand::number(1)});
    for (const auto& e : z.entries) v[static_cast<std::size_t>(e.position - 1)] = {e.op, e.a, e.b};
    EvalResult a = evaluate_in_place(v, z.root_position(), nums, c);
    EvalResult b = try_evaluate(graph_to_equation(z), nums, c);
    REQUIRE(a.status == b.status);
    if (a.ok()) CHECK(a.value == b.value);
  }
}

TEST_CASE("gamma count") {
  CHECK(gamma_count(60, 15) == 53194089192720ULL);
  for (int m = 1; m <= 10; ++m) CHECK(gamma_count(m, m) == 1);
  CHECK(gamma_count(6, 2) == 15);
  Equation chain = parse_equation("( num@1 + num@2 ) * num@1", OperatorSet::arithmetic(), {});
  CHECK(oracle::enumerate_mappings(chain, 6, oracle::Semantics::kOrderPreserving).mappings.size() == 15);
  CHECK_THROWS(gamma_count(3, 4));
}

TEST_CASE("argmax ties break towards lowest index") {
  TableDims d{4, 4, 0, 2};
  ProbTables t = ProbTables::uniform(OperatorSet::arithmetic(), d);
  CHECK(argmax_root(t) == 1);
  auto v = argmax_vertex_ops(t);
  CHECK(v[0].op == Operator::kAdd);
  CHECK(v[0].a == VertexOperand::number(1));
  CHECK(v[3].a == VertexOperand::vertex(1));
}

TEST_CASE("top-k roots") {
  const ConstantsConfig c;
  std::vector<VertexPrediction> v{
      {Operator::kAdd, VertexOperand::number(1), VertexOperand::number(2)},
      {Operator::kAdd, VertexOperand::number(2), VertexOperand::number(1)},
      {Operator::kMul, VertexOperand::vertex(1), VertexOperand::number(2)},
  };
  TableDims d{3, 4, 0, 2};
  Matrix zf(3, 4), zo(3, 5);
  ProbTables t = ProbTables::from_logits(OperatorSet::arithmetic(), d, zf, zo, zo, {3.0, 2.0, 1.0});
  std::vector<double> nums{3, 4};

  auto one = topk_roots(t, v, 1, nums, c);
  REQUIRE(one.size() == 1);
  CHECK(one[0].root == 1);
  CHECK(one[0].answer.value == 7.0);

  auto all = topk_roots(t, v, 3, nums, c);
  REQUIRE(all.size() == 2);  // root 2 is the commuted copy of root 1
  CHECK(all[0].root == 1);
  CHECK(all[1].root == 3);
  CHECK(all[1].answer.value == 28.0);
  CHECK(all[0].pr > all[1].pr);
}
