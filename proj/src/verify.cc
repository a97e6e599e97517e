#include "cantor/verify.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "cantor/assignment.h"
#include "cantor/oracle.h"
#include "cantor/synthetic.h"
#include "cantor/training.h"
#include "json.hpp"

namespace cantor::verify {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

struct Timer {
  Clock::time_point t0 = Clock::now();
  double seconds() const { return std::chrono::duration<double>(Clock::now() - t0).count(); }
};

CheckResult finish(CheckResult r, const Timer& t, double budget) {
  r.seconds = t.seconds();
  r.budget_seconds = budget;
  if (r.passed && !r.within_budget()) {
    r.passed = false;
    std::ostringstream m;
    m << "over time budget (" << r.seconds << " s > " << budget << " s); " << r.detail;
    r.detail = m.str();
  }
  return r;
}

std::string fmt(double v) {
  std::ostringstream m;
  m.precision(3);
  m << v;
  return m.str();
}

int uniform(int lo, int hi, std::mt19937_64& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

OperandRef random_leaf(int num_count, int const_count, std::mt19937_64& rng) {
  if (const_count > 0 && std::bernoulli_distribution(0.2)(rng))
    return OperandRef::constant(uniform(1, const_count, rng));
  return OperandRef::number(uniform(1, num_count, rng));
}

Operator random_op(const OperatorSet& ops, std::mt19937_64& rng) {
  return ops.at(static_cast<std::size_t>(uniform(0, static_cast<int>(ops.size()) - 1, rng)));
}

OperandRef build_tree(int k, Equation& eq, int num_count, int const_count, const OperatorSet& ops,
                      std::mt19937_64& rng) {
  if (k == 0) return random_leaf(num_count, const_count, rng);
  const int left = uniform(0, k - 1, rng);
  OperandRef a = build_tree(left, eq, num_count, const_count, ops, rng);
  OperandRef b = build_tree(k - 1 - left, eq, num_count, const_count, ops, rng);
  eq.ops.push_back({random_op(ops, rng), a, b});
  return OperandRef::operation(static_cast<int>(eq.ops.size()));
}

ModelConfig toy_config() {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.encoder_blocks = 2;
  c.decoder_blocks = 2;
  c.ffn_hidden = 16;
  c.max_len = 10;
  c.L = 4;
  c.init_std = 0.5;
  c.vocab_size = 12;
  c.num_constants = 2;
  c.num_operators = 4;
  return c;
}

}  // namespace

Equation random_equation(int ops, Shape shape, int num_count, int const_count, std::mt19937_64& rng,
                         const OperatorSet& operators) {
  if (ops < 1) throw std::invalid_argument("random_equation: ops must be >= 1");
  if (shape == Shape::kBranchedTree && ops < 3) throw std::invalid_argument("a branch needs 3 operations");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Equation eq;
    switch (shape) {
      case Shape::kChain:
        for (int i = 1; i <= ops; ++i) {
          OperandRef a = random_leaf(num_count, const_count, rng);
          OperandRef b = random_leaf(num_count, const_count, rng);
          if (i > 1) (std::bernoulli_distribution(0.5)(rng) ? a : b) = OperandRef::operation(i - 1);
          eq.ops.push_back({random_op(operators, rng), a, b});
        }
        break;
      case Shape::kTree:
      case Shape::kBranchedTree:
        build_tree(ops, eq, num_count, const_count, operators, rng);
        break;
      case Shape::kAny:
        for (int i = 1; i <= ops; ++i) {
          auto pick = [&] {
            if (i > 1 && std::bernoulli_distribution(0.6)(rng)) return OperandRef::operation(uniform(1, i - 1, rng));
            return random_leaf(num_count, const_count, rng);
          };
          OperandRef a = pick();
          OperandRef b = pick();
          eq.ops.push_back({random_op(operators, rng), a, b});
        }
        break;
    }
    if (!fully_reachable(eq)) continue;
    if (shape == Shape::kBranchedTree && count_branches(eq) == 0) continue;
    return eq;
  }
  throw std::runtime_error("random_equation: no equation of the requested shape");
}

ProbTables random_tables(const TableDims& dims, const OperatorSet& operators, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  const auto L = static_cast<std::size_t>(dims.L);
  const auto K = static_cast<std::size_t>(dims.candidates());
  Matrix pf(L, static_cast<std::size_t>(dims.F)), pa(L, K), pb(L, K);
  std::vector<double> pr(L);
  for (double& v : pf.flat()) v = g(rng);
  for (double& v : pa.flat()) v = g(rng);
  for (double& v : pb.flat()) v = g(rng);
  for (double& v : pr) v = g(rng);
  return ProbTables::from_logits(operators, dims, std::move(pf), std::move(pa), std::move(pb), std::move(pr));
}

CheckResult check_gamma(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "gamma_cardinality";
  std::mt19937_64 rng(o.seed);
  const std::uint64_t big = gamma_count(60, 15);
  if (big != 53194089192720ULL) {
    r.detail = "gamma_count(60,15) = " + std::to_string(big);
    return finish(r, t, 1.0);
  }
  for (int L = 1; L <= 10; ++L)
    for (int m = 1; m <= std::min(5, L); ++m) {
      const Equation y = random_equation(m, Shape::kAny, 3, 2, rng);
      const auto set = oracle::enumerate_mappings(y, L, oracle::Semantics::kOrderPreserving);
      ++r.cases;
      if (set.mappings.size() != gamma_count(L, m)) {
        r.detail = "enumeration differs at L=" + std::to_string(L) + " m=" + std::to_string(m);
        return finish(r, t, 1.0);
      }
    }
  r.passed = true;
  r.detail = "gamma_count(60,15) = 53194089192720; enumeration matches for L<=10, |Y|<=5";
  return finish(r, t, 1.0);
}

CheckResult check_hardem_optimality(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "hardem_optimality";
  std::mt19937_64 rng(o.seed + 1);
  const OperatorSet ops = OperatorSet::arithmetic();
  double worst = 0.0;
  for (int c = 0; c < 300; ++c) {
    const int m = uniform(1, 3, rng);
    const int L = uniform(m, 7, rng);
    const TableDims dims{L, 4, 2, 3};
    const Equation y = random_equation(m, Shape::kAny, dims.N, dims.C, rng);
    const ProbTables tables = random_tables(dims, ops, rng);
    const auto gamma = oracle::enumerate_mappings(y, L, oracle::Semantics::kLevelPermutations);
    const int B = std::max<int>(1, static_cast<int>(gamma.mappings.size()));
    const HardEmResult h = hardem_best_mapping(y, tables, B);
    const oracle::ArgmaxResult ex = oracle::exact_argmax(y, tables, oracle::Semantics::kLevelPermutations);
    const double diff = std::fabs(h.log_prob - ex.log_prob);
    worst = std::max(worst, diff);
    ++r.cases;
    if (diff > 1e-9) {
      r.detail = "case " + std::to_string(c) + ": beam " + fmt(h.log_prob) + " vs exact " + fmt(ex.log_prob);
      return finish(r, t, 30.0);
    }
  }
  r.passed = true;
  r.detail = "max |log-prob difference| " + fmt(worst);
  return finish(r, t, 30.0);
}

CheckResult check_mml(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "mml_exactness";
  std::mt19937_64 rng(o.seed + 2);
  const OperatorSet ops = OperatorSet::arithmetic();
  double worst = 0.0;
  for (int c = 0; c < 250; ++c) {
    const int m = uniform(1, 3, rng);
    const int L = uniform(m, 7, rng);
    const TableDims dims{L, 4, 2, 3};
    const Equation y = random_equation(m, Shape::kChain, dims.N, dims.C, rng);
    const ProbTables tables = random_tables(dims, ops, rng);
    const double dp = std::exp(-loss_mml(y, tables).loss);
    const double exact = oracle::exact_marginal(y, tables, oracle::Semantics::kOrderPreserving);
    const double rel = std::fabs(dp - exact) / exact;
    worst = std::max(worst, rel);
    ++r.cases;
    if (!(rel <= 1e-9)) {
      r.detail = "chain case " + std::to_string(c) + ": relative error " + fmt(rel);
      return finish(r, t, 30.0);
    }
  }
  int strict = 0;
  for (int c = 0; c < 120; ++c) {
    const int L = uniform(3, 7, rng);
    const TableDims dims{L, 4, 2, 3};
    const Equation y = random_equation(3, Shape::kBranchedTree, dims.N, dims.C, rng);
    const ProbTables tables = random_tables(dims, ops, rng);
    const double dp = std::exp(-loss_mml(y, tables).loss);
    const double exact = oracle::exact_marginal(y, tables, oracle::Semantics::kOrderPreserving);
    ++r.cases;
    if (dp < exact * (1.0 - 1e-12)) {
      r.detail = "branched case " + std::to_string(c) + ": DP " + fmt(dp) + " below exact " + fmt(exact);
      return finish(r, t, 30.0);
    }
    if (dp > exact * (1.0 + 1e-9)) ++strict;
  }
  if (strict != 120) {
    r.detail = "DP strictly above the marginal on only " + std::to_string(strict) + "/120 branched cases";
    return finish(r, t, 30.0);
  }
  r.passed = true;
  r.detail = "250 chains max relative error " + fmt(worst) + "; 120/120 branched cases strictly above";
  return finish(r, t, 30.0);
}

CheckResult check_kbest(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "kbest_assignment";
  std::mt19937_64 rng(o.seed + 3);
  for (int c = 0; c < 100; ++c) {
    const int n = uniform(1, 5, rng);
    const int m = uniform(1, std::min(4, n), rng);
    const int B = uniform(1, 12, rng);
    Matrix s(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
    // A third of the cases use coarse values so that ties are common.
    const bool coarse = c % 3 == 0;
    for (double& v : s.flat()) {
      if (std::bernoulli_distribution(0.1)(rng))
        v = kNegInf;
      else
        v = coarse ? -static_cast<double>(uniform(0, 3, rng)) : std::normal_distribution<double>(0.0, 2.0)(rng);
    }
    const auto expect = oracle::exhaustive_kbest(s, B);
    std::vector<Assignment> got;
    try {
      got = kbest_assignment(s, B);
    } catch (const InfeasibleAssignment&) {
    }
    ++r.cases;
    bool same = got.size() == expect.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].columns == expect[i].columns && std::fabs(got[i].score - expect[i].score) <= 1e-12;
    if (!same) {
      r.detail = "matrix " + std::to_string(c) + " (" + std::to_string(m) + "x" + std::to_string(n) + ", B=" +
                 std::to_string(B) + ") ranking differs";
      return finish(r, t, 5.0);
    }
  }
  r.passed = true;
  r.detail = "100 matrices match the exhaustive ranking";
  return finish(r, t, 5.0);
}

GradientProblem gradient_toy(std::uint64_t seed) {
  GradientProblem p;
  p.config = toy_config();
  p.params = ModelParams::init(p.config, seed);
  p.constants = ConstantsConfig({{"one", 1.0}, {"hundred", 100.0}});
  p.input.token_ids = {2, Vocabulary::kNum, 5, Vocabulary::kNum, 7, 3, Vocabulary::kNum, 11};
  p.input.number_positions = {1, 3, 6};
  p.numbers = {3.0, 5.0, 7.0};
  p.gold = parse_equation("( num@1 + num@2 ) * num@3", p.operators, p.constants);
  return p;
}

GradientComparison compare_gradients(const GradientProblem& p, const Objective& objective, double step,
                                     const BackwardOptions& options) {
  const LossAndGrad analytic = compute_gradients(p.input, objective, p.params, p.config, p.operators, options);
  ModelParams work = p.params;
  auto loss_at = [&] { return objective(forward(p.input, work, p.config, p.operators).tables).loss; };
  std::vector<std::pair<std::string, Matrix*>> params;
  work.for_each([&](const std::string& n, Matrix& m) { params.emplace_back(n, &m); });
  std::vector<const Matrix*> grads;
  analytic.grads.for_each([&](const std::string&, const Matrix& m) { grads.push_back(&m); });
  GradientComparison out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& m = *params[k].second;
    double max_err = 0.0, max_num = 0.0, max_an = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + step;
      const double up = loss_at();
      m.data()[i] = orig - step;
      const double down = loss_at();
      m.data()[i] = orig;
      const double num = (up - down) / (2.0 * step);
      const double an = grads[k]->data()[i];
      max_err = std::max(max_err, std::fabs(an - num));
      max_num = std::max(max_num, std::fabs(num));
      max_an = std::max(max_an, std::fabs(an));
    }
    const double rel = max_err / std::max({max_num, max_an, 1e-8});
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_tensor = params[k].first;
    }
  }
  return out;
}

CheckResult check_gradients(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "gradient_fidelity";
  const GradientProblem p = gradient_toy(o.seed + 4);
  const std::vector<Equation> cands = weak_candidates(p.numbers, p.constants, 8.0);
  const std::vector<std::pair<std::string, Objective>> objectives = {
      {"naive", [&](const ProbTables& tb) { return loss_naive(p.gold, tb); }},
      {"hard_em", [&](const ProbTables& tb) { return loss_hardem(p.gold, tb, 5); }},
      {"mml", [&](const ProbTables& tb) { return loss_mml(p.gold, tb); }},
      {"weak_mml", [&](const ProbTables& tb) { return loss_weak(cands, tb, WeakMode::kMarginal); }},
  };
  BackwardOptions bo;
  bo.negate_pb_head = o.negate_pb_head;
  std::ostringstream detail;
  bool ok = true;
  for (const auto& [name, obj] : objectives) {
    const GradientComparison g = compare_gradients(p, obj, 1e-4, bo);
    ++r.cases;
    detail << name << " " << fmt(g.max_relative_error) << " (" << g.worst_tensor << "); ";
    if (!(g.max_relative_error < 1e-4)) ok = false;
  }
  r.passed = ok;
  r.detail = "max relative error per objective: " + detail.str();
  return finish(r, t, 60.0);
}

CheckResult check_decoding_validity(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "decoding_validity";
  std::mt19937_64 rng(o.seed + 5);
  const OperatorSet ops = OperatorSet::arithmetic();
  const ConstantsConfig two({{"one", 1.0}, {"hundred", 100.0}});
  for (int c = 0; c < 1000; ++c) {
    ModelConfig cfg;
    cfg.d = 8;
    cfg.heads = uniform(0, 1, rng) ? 2 : 1;
    cfg.encoder_blocks = uniform(0, 2, rng);
    cfg.decoder_blocks = uniform(0, 2, rng);
    cfg.ffn_hidden = 8;
    cfg.L = uniform(1, 10, rng);
    cfg.max_len = 12;
    cfg.vocab_size = uniform(2, 15, rng);
    cfg.num_constants = uniform(0, 2, rng);
    cfg.num_operators = static_cast<int>(ops.size());
    cfg.init_std = std::uniform_real_distribution<double>(0.02, 2.0)(rng);
    cfg.decoder_self_attention = uniform(0, 1, rng) == 1;
    const ModelParams params = ModelParams::init(cfg, rng());
    EncodedProblem in;
    const int len = uniform(3, cfg.max_len, rng);
    for (int i = 0; i < len; ++i) in.token_ids.push_back(uniform(0, cfg.vocab_size - 1, rng));
    const int nn = uniform(1, std::min(4, len), rng);
    std::vector<int> pos(static_cast<std::size_t>(len));
    std::iota(pos.begin(), pos.end(), 0);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::vector<double> numbers;
    for (int i = 0; i < nn; ++i) {
      in.number_positions.push_back(pos[static_cast<std::size_t>(i)]);
      numbers.push_back(uniform(1, 20, rng));
    }
    std::vector<Constant> cv(two.values().begin(), two.values().begin() + cfg.num_constants);
    const ConstantsConfig consts(cv);
    const ProbTables tables = forward(in, params, cfg, ops).tables;
    const GreedyResult g = greedy_decode(tables, numbers, consts);
    ++r.cases;
    std::optional<std::string> bad = tables.check_invariants();
    if (!bad) bad = check_graph_invariants(g.graph, cfg.L);
    if (!bad) {
      try {
        validate_equation(g.equation, nn, consts, &ops);
      } catch (const EquationError& e) {
        bad = e.what();
      }
    }
    if (bad) {
      r.detail = "model " + std::to_string(c) + ": " + *bad;
      return finish(r, t, 10.0);
    }
  }
  r.passed = true;
  r.detail = "1000 random models decode to valid graphs";
  return finish(r, t, 10.0);
}

const std::vector<EquivalencePair>& equivalence_library() {
  static const std::vector<EquivalencePair> lib = {
      // commutations and regroupings
      {"num@1 + num@2", "num@2 + num@1", 2, true},
      {"num@1 * num@2", "num@2 * num@1", 2, true},
      {"num@3 + num@2 + num@1", "num@1 + ( num@2 + num@3 )", 3, true},
      {"num@1 * num@2 * num@3", "num@3 * ( num@2 * num@1 )", 3, true},
      {"num@1 - ( num@2 - num@3 )", "num@1 - num@2 + num@3", 3, true},
      {"num@1 - num@2 - num@3", "num@1 - ( num@2 + num@3 )", 3, true},
      {"num@1 / ( num@2 * num@3 )", "num@1 / num@2 / num@3", 3, true},
      {"num@1 / ( num@2 / num@3 )", "num@1 * num@3 / num@2", 3, true},
      {"num@1 / const_hundred * num@2", "num@1 * num@2 / const_hundred", 2, true},
      {"num@1 - num@2", "( num@2 - num@1 ) * ( const_one - const_two )", 2, true},
      // distributed forms
      {"num@1 * ( num@2 + num@3 )", "num@1 * num@2 + num@1 * num@3", 3, true},
      {"( num@1 + num@2 ) * num@3", "num@3 * num@1 + num@2 * num@3", 3, true},
      {"( num@1 + num@2 ) / num@3", "num@1 / num@3 + num@2 / num@3", 3, true},
      {"( num@1 + num@2 ) * ( num@1 - num@2 )", "num@1 * num@1 - num@2 * num@2", 2, true},
      {"( num@1 + num@2 ) ** const_two", "num@1 ** const_two + const_two * num@1 * num@2 + num@2 ** const_two", 2,
       true},
      {"num@1 * const_hundred + num@2 * const_hundred", "( num@1 + num@2 ) * const_hundred", 2, true},
      {"( num@1 + num@2 + num@3 ) * const_two", "num@1 * const_two + ( num@2 + num@3 ) * const_two", 3, true},
      {"num@1 / num@2 + num@3 / num@4", "( num@1 * num@4 + num@3 * num@2 ) / ( num@2 * num@4 )", 4, true},
      {"num@1 - num@2", "( num@1 + num@3 ) - ( num@2 + num@3 )", 3, true},
      {"num@1 / num@2", "num@1 * ( const_one / num@2 )", 2, true},
      // doubling, powers and identities
      {"num@1 * const_two", "num@1 + num@1", 1, true},
      {"num@1 + num@1 + num@1", "const_two * num@1 + num@1", 1, true},
      {"num@1 ** const_two", "num@1 * num@1", 1, true},
      {"num@1 ** num@2 * num@1 ** num@3", "num@1 ** ( num@2 + num@3 )", 3, true},
      {"( num@1 * num@2 ) ** num@3", "num@1 ** num@3 * num@2 ** num@3", 3, true},
      {"num@1 * num@2 / num@2", "num@1 * const_one", 2, true},
      {"num@1 * const_hundred / const_hundred", "num@1 + num@2 - num@2", 2, true},
      {"num@1 - num@1 + num@2", "num@2 * const_one", 2, true},
      // near misses
      {"num@1 - num@2", "num@2 - num@1", 2, false},
      {"num@1 / num@2", "num@2 / num@1", 2, false},
      {"num@1 * ( num@2 + num@3 )", "num@1 * num@2 + num@3", 3, false},
      {"num@1 * const_two", "num@1 + const_two", 1, false},
      {"num@1 ** const_two", "const_two ** num@1", 1, false},
      {"num@1 - ( num@2 - num@3 )", "num@1 - num@2 - num@3", 3, false},
      {"num@1 / ( num@2 * num@3 )", "num@1 / num@2 * num@3", 3, false},
      {"( num@1 + num@2 ) ** const_two", "num@1 ** const_two + num@2 ** const_two", 2, false},
      {"num@1 + num@2", "num@1 + num@3", 3, false},
      {"num@1 * num@2", "num@1 + num@2", 2, false},
      {"num@1 + num@2 + const_one", "num@1 + num@2 * const_one", 2, false},
      {"num@1 / const_hundred", "num@1 * const_hundred", 1, false},
      {"num@1 ** num@2", "num@2 ** num@1", 2, false},
      {"( num@1 - num@2 ) * num@3", "num@1 - num@2 * num@3", 3, false},
      {"num@1 * num@2 / num@3", "num@1 / ( num@2 * num@3 )", 3, false},
      {"num@1 + num@1", "num@1 * num@1", 1, false},
      {"num@1 - num@2 + num@3", "num@1 - ( num@2 + num@3 )", 3, false},
      {"( num@1 + num@2 ) / num@3", "num@1 + num@2 / num@3", 3, false},
      {"num@1 * num@2 * num@3", "num@1 * num@2 + num@3", 3, false},
      {"num@1 / num@2 + num@3 / num@4", "( num@1 + num@3 ) / ( num@2 + num@4 )", 4, false},
      {"num@1 * ( const_one + const_hundred )", "num@1 * const_hundred + const_one", 1, false},
      {"num@1 ** ( num@2 + num@3 )", "num@1 ** num@2 + num@1 ** num@3", 3, false},
  };
  return lib;
}

ConstantsConfig equivalence_library_constants() {
  return ConstantsConfig({{"one", 1.0}, {"two", 2.0}, {"hundred", 100.0}});
}

CheckResult check_equivalence_library(const Options&) {
  Timer t;
  CheckResult r;
  r.name = "equivalence_library";
  const ConstantsConfig consts = equivalence_library_constants();
  const OperatorSet ops = OperatorSet::all();
  int agree = 0;
  std::string first_bad;
  for (const auto& pair : equivalence_library()) {
    const Equation a = parse_equation(pair.a, ops, consts);
    const Equation b = parse_equation(pair.b, ops, consts);
    const bool says = check_equivalence(a, b, pair.num_count, consts, 100);
    ++r.cases;
    if (says == pair.equivalent)
      ++agree;
    else if (first_bad.empty())
      first_bad = pair.a + " vs " + pair.b;
  }
  r.passed = agree == r.cases;
  r.detail = std::to_string(agree) + "/" + std::to_string(r.cases) + " pairs agree with symbolic truth" +
             (first_bad.empty() ? "" : "; first disagreement: " + first_bad);
  return finish(r, t, 5.0);
}

CheckResult check_beam_monotonicity(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "beam_monotonicity";
  std::mt19937_64 rng(o.seed + 6);
  const OperatorSet ops = OperatorSet::arithmetic();
  const int beams[] = {1, 5, 10, 20};
  int violations = 0;
  std::string first;
  for (int c = 0; c < 100; ++c) {
    const int m = uniform(1, 5, rng);
    const int L = uniform(m, 10, rng);
    const TableDims dims{L, 4, 2, 3};
    const Equation y = random_equation(m, Shape::kAny, dims.N, dims.C, rng);
    const ProbTables tables = random_tables(dims, ops, rng);
    double prev = std::numeric_limits<double>::infinity();
    ++r.cases;
    for (int B : beams) {
      const double loss = loss_hardem(y, tables, B).loss;
      if (loss > prev + 1e-12) {
        ++violations;
        if (first.empty())
          first = "case " + std::to_string(c) + " B=" + std::to_string(B) + " loss " + fmt(loss) + " > " + fmt(prev);
        break;
      }
      prev = loss;
    }
  }
  r.passed = violations == 0;
  r.detail = std::to_string(violations) + " of 100 cases increase with B" + (first.empty() ? "" : "; " + first);
  return finish(r, t, 30.0);
}

CheckResult check_weak_enumeration(const Options& o) {
  Timer t;
  CheckResult r;
  r.name = "weak_enumeration";
  std::mt19937_64 rng(o.seed + 7);
  const ConstantsConfig consts = default_constants();
  // Exhaustive pair search over the pool, compared as sets of canonical forms.
  for (int c = 0; c < 200; ++c) {
    const int n = uniform(1, 4, rng);
    std::vector<double> numbers;
    for (int i = 0; i < n; ++i) numbers.push_back(uniform(1, 12, rng));
    std::vector<OperandRef> pool;
    std::vector<double> value;
    for (int i = 1; i <= n; ++i) {
      pool.push_back(OperandRef::number(i));
      value.push_back(numbers[static_cast<std::size_t>(i - 1)]);
    }
    for (int i = 1; i <= static_cast<int>(consts.size()); ++i) {
      pool.push_back(OperandRef::constant(i));
      value.push_back(consts.at(i).value);
    }
    // Half the answers are reachable by construction.
    double answer = uniform(-5, 30, rng);
    if (c % 2 == 0 && n >= 1) {
      const auto i = static_cast<std::size_t>(uniform(0, n - 1, rng));
      const auto j = static_cast<std::size_t>(uniform(0, static_cast<int>(pool.size()) - 1, rng));
      if (i != j) answer = value[i] - value[j];
    }
    std::multiset<std::string> expect, got;
    for (std::size_t i = 0; i < pool.size(); ++i)
      for (std::size_t j = 0; j < pool.size(); ++j) {
        if (i == j) continue;
        if (pool[i].kind != OperandKind::kNum && pool[j].kind != OperandKind::kNum) continue;
        if (i < j && std::fabs(value[i] + value[j] - answer) <= 1e-6)
          expect.insert(serialize_equation(Equation{{{Operator::kAdd, pool[i], pool[j]}}}, consts));
        if (std::fabs(value[i] - value[j] - answer) <= 1e-6)
          expect.insert(serialize_equation(Equation{{{Operator::kSub, pool[i], pool[j]}}}, consts));
      }
    for (const Equation& e : weak_candidates(numbers, consts, answer)) got.insert(serialize_equation(e, consts));
    ++r.cases;
    if (got != expect) {
      r.detail = "pool case " + std::to_string(c) + ": " + std::to_string(got.size()) + " candidates vs " +
                 std::to_string(expect.size()) + " from exhaustive search";
      return finish(r, t, 10.0);
    }
  }
  // Gold recovery on a weak synthetic dataset.
  SyntheticConfig sc;
  sc.weak = true;
  sc.templates = 12;
  sc.train = 200;
  sc.dev = 0;
  sc.test = 0;
  sc.unseen_fraction = 0.0;
  sc.seed = o.seed;
  const SyntheticDataset ds = generate_synthetic(sc, consts);
  const OperatorSet ops = OperatorSet::arithmetic();
  for (const auto& p : ds.train) {
    const Equation gold = parse_equation(*p.gold, ops, consts);
    bool found = false;
    for (const Equation& e : weak_candidates(p.number_values(), consts, p.answer))
      if (check_equivalence(e, gold, static_cast<int>(p.numbers.size()), consts)) {
        found = true;
        break;
      }
    ++r.cases;
    if (!found) {
      r.detail = p.id + ": no candidate equivalent to gold " + *p.gold;
      return finish(r, t, 10.0);
    }
  }
  r.passed = true;
  r.detail = "200 pools match exhaustive search; 200/200 weak instances recover the gold";
  return finish(r, t, 10.0);
}

std::vector<CheckResult> run_all(const Options& o) {
  return {check_gamma(o),          check_hardem_optimality(o), check_mml(o),
          check_kbest(o),          check_gradients(o),         check_decoding_validity(o),
          check_equivalence_library(o), check_beam_monotonicity(o), check_weak_enumeration(o)};
}

std::string to_json_line(const CheckResult& r) {
  return nlohmann::json{{"check", r.name},
                        {"passed", r.passed},
                        {"cases", r.cases},
                        {"seconds", r.seconds},
                        {"budget_seconds", r.budget_seconds},
                        {"detail", r.detail}}
      .dump();
}

}  // namespace cantor::verify
