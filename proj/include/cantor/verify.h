// Oracle cross-checks and property checks, runnable from the command line or
// from tests.  Each check returns a pass/fail record with a short detail.
#ifndef CANTOR_VERIFY_H_
#define CANTOR_VERIFY_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cantor/equation.h"
#include "cantor/graph.h"
#include "cantor/model.h"

namespace cantor::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  int cases = 0;
  double seconds = 0.0;
  double budget_seconds = 0.0;
  bool within_budget() const { return budget_seconds <= 0.0 || seconds <= budget_seconds; }
};

struct Options {
  std::uint64_t seed = 20240;
  // Mutation hook forwarded to the model backward pass.
  bool negate_pb_head = false;
};

enum class Shape { kAny, kChain, kTree, kBranchedTree };

/// Random fully reachable equation with `ops` operations over `num_count`
/// numbers and `const_count` constants.
Equation random_equation(int ops, Shape shape, int num_count, int const_count, std::mt19937_64& rng,
                         const OperatorSet& operators = OperatorSet::arithmetic());

/// Tables from Gaussian logits of the given scale.
ProbTables random_tables(const TableDims& dims, const OperatorSet& operators, std::mt19937_64& rng,
                         double scale = 1.5);

CheckResult check_gamma(const Options& o = {});
CheckResult check_hardem_optimality(const Options& o = {});
CheckResult check_mml(const Options& o = {});
CheckResult check_kbest(const Options& o = {});
CheckResult check_gradients(const Options& o = {});
CheckResult check_decoding_validity(const Options& o = {});
CheckResult check_equivalence_library(const Options& o = {});
CheckResult check_beam_monotonicity(const Options& o = {});
CheckResult check_weak_enumeration(const Options& o = {});

std::vector<CheckResult> run_all(const Options& o = {});

/// One JSON object per line: name, passed, cases, seconds, detail.
std::string to_json_line(const CheckResult& r);

struct EquivalencePair {
  std::string a;
  std::string b;
  int num_count = 0;
  bool equivalent = false;
};

/// Hand-built pairs with their symbolic truth.  Uses constants
/// one = 1, two = 2, hundred = 100 and every operator.
const std::vector<EquivalencePair>& equivalence_library();
ConstantsConfig equivalence_library_constants();

/// The d=8, L=4 model used for finite-difference checks.
struct GradientProblem {
  ModelConfig config;
  ModelParams params;
  EncodedProblem input;
  std::vector<double> numbers;
  Equation gold;
  ConstantsConfig constants;
  OperatorSet operators = OperatorSet::arithmetic();
};
GradientProblem gradient_toy(std::uint64_t seed);

/// Max over tensors of max|analytic - numeric| / max(max|numeric|, max|analytic|, 1e-8).
struct GradientComparison {
  double max_relative_error = 0.0;
  std::string worst_tensor;
};
GradientComparison compare_gradients(const GradientProblem& p, const Objective& objective, double step = 1e-4,
                                     const BackwardOptions& options = {});

}  // namespace cantor::verify

#endif  // CANTOR_VERIFY_H_
