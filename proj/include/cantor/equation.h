// Equations as DAGs of binary operations over constants, problem numbers and
// earlier operations.  The last operation is the root and yields the answer.
#ifndef CANTOR_EQUATION_H_
#define CANTOR_EQUATION_H_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cantor {

enum class Operator { kAdd, kSub, kMul, kDiv, kPow };

/// Infix symbol: "+", "-", "*", "/", "**".
std::string_view operator_symbol(Operator op);
/// Word form used by the op-list format and option strings: add, sub, mul, div, pow.
std::string_view operator_name(Operator op);
std::optional<Operator> operator_from_token(std::string_view token);

class EquationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered, duplicate-free set of operators.  The order defines the columns
/// of the operator distribution.
class OperatorSet {
 public:
  explicit OperatorSet(std::vector<Operator> ops);
  static OperatorSet arithmetic();  // + - * /
  static OperatorSet all();         // + - * / **
  /// Comma separated names or symbols, e.g. "add,sub,mul,div".
  static OperatorSet parse(std::string_view list);

  std::size_t size() const { return ops_.size(); }
  Operator at(std::size_t i) const { return ops_.at(i); }
  bool contains(Operator op) const;
  std::size_t index_of(Operator op) const;
  const std::vector<Operator>& operators() const { return ops_; }
  std::string to_string() const;

  bool operator==(const OperatorSet&) const = default;

 private:
  std::vector<Operator> ops_;
};

enum class OperandKind { kConst, kNum, kOp };

/// 1-based reference into the constant pool, the problem numbers or the
/// preceding operations of the same equation.
struct OperandRef {
  OperandKind kind = OperandKind::kNum;
  int index = 1;

  static OperandRef constant(int i) { return {OperandKind::kConst, i}; }
  static OperandRef number(int i) { return {OperandKind::kNum, i}; }
  static OperandRef operation(int i) { return {OperandKind::kOp, i}; }
  bool is_op() const { return kind == OperandKind::kOp; }
  bool operator==(const OperandRef&) const = default;
};

struct Operation {
  Operator op = Operator::kAdd;
  OperandRef a;
  OperandRef b;
  bool operator==(const Operation&) const = default;
};

struct Equation {
  std::vector<Operation> ops;

  std::size_t size() const { return ops.size(); }
  bool empty() const { return ops.empty(); }
  const Operation& root() const { return ops.back(); }
  bool operator==(const Equation&) const = default;
};

struct Constant {
  std::string name;  // without the "const_" prefix
  double value = 0.0;
};

class ConstantsConfig {
 public:
  ConstantsConfig() = default;
  explicit ConstantsConfig(std::vector<Constant> values);

  /// One `name value` pair per line; '#' starts a comment.  A leading
  /// "const_" on the name is optional.
  static ConstantsConfig parse(std::string_view text);
  static ConstantsConfig load(const std::string& path);
  std::string to_text() const;

  std::size_t size() const { return values_.size(); }
  const Constant& at(int one_based) const { return values_.at(one_based - 1); }
  std::optional<int> find(std::string_view name) const;
  const std::vector<Constant>& values() const { return values_; }

 private:
  std::vector<Constant> values_;
};

/// Parses fully parenthesized or precedence-based infix (`**` binds tighter
/// than `* /`, which bind tighter than `+ -`; `**` is right associative), or
/// the op-list form with one `k: op arg arg` line per operation where
/// `#k` refers to operation k.  Operations come out in post-order.
Equation parse_equation(std::string_view text, const OperatorSet& operators,
                        const ConstantsConfig& constants);

/// Canonical fully parenthesized infix.  Shared sub-expressions are
/// expanded inline.
std::string serialize_equation(const Equation& eq, const ConstantsConfig& constants);

/// Serialization with position placeholders and constant names kept.
std::string template_key(const Equation& eq, const ConstantsConfig& constants);

/// Equal expression trees (shared sub-expressions compared by value).
bool structurally_equal(const Equation& a, const Equation& b);

/// Throws EquationError if references are out of range or point forward.
void validate_equation(const Equation& eq, int num_count, const ConstantsConfig& constants,
                       const OperatorSet* operators = nullptr);

/// reachable[i] is true when operation i+1 is an ancestor-or-self of the root.
std::vector<bool> reachable_operations(const Equation& eq);
bool fully_reachable(const Equation& eq);

/// Number of operations whose operands are both operations.
int count_branches(const Equation& eq);
/// Largest number index referenced (0 when none).
int max_number_index(const Equation& eq);

enum class EvalStatus { kOk, kDivByZero, kPowDomain, kOverflow };
std::string_view eval_status_name(EvalStatus status);

struct EvalResult {
  EvalStatus status = EvalStatus::kOk;
  double value = 0.0;
  bool ok() const { return status == EvalStatus::kOk; }
};

class EvaluationError : public std::runtime_error {
 public:
  explicit EvaluationError(EvalStatus status);
  EvalStatus status() const { return status_; }

 private:
  EvalStatus status_;
};

double apply_operator(Operator op, double a, double b, EvalStatus& status);

EvalResult try_evaluate(const Equation& eq, std::span<const double> numbers,
                        const ConstantsConfig& constants);
/// Throws EvaluationError.
double evaluate(const Equation& eq, std::span<const double> numbers,
                const ConstantsConfig& constants);

class ResampleExhausted : public std::runtime_error {
 public:
  ResampleExhausted() : std::runtime_error("equivalence check: 1000 consecutive samples failed to evaluate") {}
};

/// Relative 1e-6, absolute 1e-9 near zero.
bool values_match(double x, double y);

inline constexpr int kDefaultEquivalenceTrials = 100;
inline constexpr std::uint64_t kDefaultEquivalenceSeed = 42;

/// Randomized logical equivalence: both equations are executed on `trials`
/// random replacements of the problem numbers (uniform in [1.5, 12.5],
/// pairwise at least 1e-3 apart).  Samples on which both sides fail are
/// redrawn; a sample on which exactly one side fails is a mismatch.
bool check_equivalence(const Equation& a, const Equation& b, int num_count,
                       const ConstantsConfig& constants,
                       int trials = kDefaultEquivalenceTrials,
                       std::uint64_t seed = kDefaultEquivalenceSeed);

}  // namespace cantor

#endif  // CANTOR_EQUATION_H_
