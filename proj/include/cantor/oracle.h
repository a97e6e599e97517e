// Brute-force references: exhaustive mapping enumeration, exact argmax and
// marginal over all mappings, exhaustive k-best assignment.  Exponential;
// guarded to desk-scale inputs.
#ifndef CANTOR_ORACLE_H_
#define CANTOR_ORACLE_H_

#include <stdexcept>
#include <vector>

#include "cantor/assignment.h"
#include "cantor/equation.h"
#include "cantor/graph.h"

namespace cantor::oracle {

class GuardExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxGraphSize = 12;

enum class Semantics {
  kOrderPreserving,    // 1 <= p_1 < ... < p_|Y| <= L
  kLevelPermutations,  // distinct positions under the level-wise bounds only
};

struct MappingSet {
  std::vector<std::vector<int>> mappings;  // lexicographically sorted
  Semantics semantics = Semantics::kOrderPreserving;
};

MappingSet enumerate_mappings(const Equation& y, int L, Semantics semantics);

struct ArgmaxResult {
  std::vector<int> mapping;
  double log_prob = 0.0;
};

/// Ties go to the lexicographically smallest mapping.
ArgmaxResult exact_argmax(const Equation& y, const ProbTables& tables, Semantics semantics);
double exact_log_marginal(const Equation& y, const ProbTables& tables, Semantics semantics);
double exact_marginal(const Equation& y, const ProbTables& tables, Semantics semantics);

/// All injective row-to-column assignments ranked like kbest_assignment.
/// Guard: rows <= 4, cols <= 5.
std::vector<Assignment> exhaustive_kbest(const Matrix& scores, int B);

}  // namespace cantor::oracle

#endif  // CANTOR_ORACLE_H_
