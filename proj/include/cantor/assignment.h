// Ranked k-best linear assignment (Murty's partitioning over a Hungarian
// solver), maximizing a sum of log scores.
#ifndef CANTOR_ASSIGNMENT_H_
#define CANTOR_ASSIGNMENT_H_

#include <optional>
#include <stdexcept>
#include <vector>

#include "cantor/matrix.h"

namespace cantor {

class InfeasibleAssignment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// columns[r] is the column assigned to row r.
struct Assignment {
  std::vector<int> columns;
  double score = 0.0;
  bool operator==(const Assignment&) const = default;
};

/// Sum of scores(r, columns[r]) accumulated in row order.
double assignment_score(const Matrix& scores, const std::vector<int>& columns);

/// Best assignment of every row to a distinct column; -inf cells are
/// forbidden.  Returns nullopt when no finite assignment exists.
std::optional<Assignment> best_assignment(const Matrix& scores);

/// Up to `B` assignments ranked by score descending, ties broken by the
/// lexicographically smallest column vector.  Requires rows <= cols.
/// Throws InfeasibleAssignment when not a single finite assignment exists.
std::vector<Assignment> kbest_assignment(const Matrix& scores, int B);

}  // namespace cantor

#endif  // CANTOR_ASSIGNMENT_H_
