// Latent decoded graphs over L decoder vertices and the probability tables
// that score them.  ProbTables is the only thing training objectives and
// decoding see of the neural model.
#ifndef CANTOR_GRAPH_H_
#define CANTOR_GRAPH_H_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cantor/equation.h"
#include "cantor/matrix.h"

namespace cantor {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MaskedOperand : public GraphError {
 public:
  using GraphError::GraphError;
};

enum class VertexOperandKind { kConst, kNum, kVertex };

/// 1-based reference; a Vertex index is a decoder position in [1, L].
struct VertexOperand {
  VertexOperandKind kind = VertexOperandKind::kNum;
  int index = 1;

  static VertexOperand constant(int i) { return {VertexOperandKind::kConst, i}; }
  static VertexOperand number(int i) { return {VertexOperandKind::kNum, i}; }
  static VertexOperand vertex(int p) { return {VertexOperandKind::kVertex, p}; }
  bool is_vertex() const { return kind == VertexOperandKind::kVertex; }
  bool operator==(const VertexOperand&) const = default;
};

/// What every vertex predicts: one complete operation.
struct VertexPrediction {
  Operator op = Operator::kAdd;
  VertexOperand a;
  VertexOperand b;
  bool operator==(const VertexPrediction&) const = default;
};

struct GraphEntry {
  int position = 1;
  Operator op = Operator::kAdd;
  VertexOperand a;
  VertexOperand b;
  bool operator==(const GraphEntry&) const = default;
};

/// A root vertex plus its vertex descendants, sorted by position.  The last
/// entry is the root.
struct DecodedGraph {
  std::vector<GraphEntry> entries;

  int root_position() const { return entries.empty() ? 0 : entries.back().position; }
  std::size_t size() const { return entries.size(); }
  bool operator==(const DecodedGraph&) const = default;
};

/// Table dimensions: graph size, operators, constants, numbers.
struct TableDims {
  int L = 0;
  int F = 0;
  int C = 0;
  int N = 0;

  int candidates() const { return L + C + N; }
  /// 0-based operand column: vertices 1..L, then constants, then numbers.
  int column(const VertexOperand& o) const;
  bool operator==(const TableDims&) const = default;
};

/// allowed(p, c) for 0-based row p and column c: constants, numbers and
/// vertices with smaller index.
class OperandMask {
 public:
  explicit OperandMask(const TableDims& dims) : dims_(dims) {}
  bool allowed(int row, int col) const { return col >= dims_.L || col < row; }
  const TableDims& dims() const { return dims_; }

 private:
  TableDims dims_;
};

OperandMask operand_mask(const TableDims& dims);

/// Log-probability tables.  Rows are 0-based (row p-1 is vertex p).  Masked
/// operand entries are exactly -inf, so their probability is exactly 0.
struct ProbTables {
  TableDims dims;
  OperatorSet operators = OperatorSet::arithmetic();
  Matrix log_pf;                // L × F
  Matrix log_pa;                // L × (L+C+N)
  Matrix log_pb;                // L × (L+C+N)
  std::vector<double> log_pr;   // L

  /// Applies the acyclicity mask to the operand logits and normalizes every
  /// distribution with a log-softmax.
  static ProbTables from_logits(const OperatorSet& operators, const TableDims& dims,
                                Matrix pf_logits, Matrix pa_logits, Matrix pb_logits,
                                std::vector<double> pr_logits);
  /// Every distribution uniform over its allowed support.
  static ProbTables uniform(const OperatorSet& operators, const TableDims& dims);

  double pf(int row, int f) const;
  double pa(int row, int col) const;
  double pb(int row, int col) const;
  double pr(int row) const;

  /// Operator column for op; throws if op is not in the operator set.
  int op_column(Operator op) const { return static_cast<int>(operators.index_of(op)); }

  /// Checks row-stochasticity (1e-6) and mask zeros; returns a message on failure.
  std::optional<std::string> check_invariants() const;
};

/// Derivatives of a scalar loss with respect to every log-probability entry.
struct TableGrad {
  Matrix g_pf;
  Matrix g_pa;
  Matrix g_pb;
  std::vector<double> g_pr;

  static TableGrad zeros(const TableDims& dims);
  void add(const TableGrad& other, double scale = 1.0);
};

/// Returns a message describing the first broken DecodedGraph invariant:
/// strictly increasing positions within [1, L], vertex operands pointing at
/// earlier listed entries, every entry reachable from the root.
std::optional<std::string> check_graph_invariants(const DecodedGraph& z, int L);

/// log P(Z|X) = log P_r(root) + sum_j log P_f + log P_a + log P_b.
/// Throws MaskedOperand when an operand has probability zero and GraphError
/// on invalid graphs.
double score_graph(const ProbTables& tables, const DecodedGraph& z);

/// Root vertex and its transitive vertex descendants, sorted by position.
DecodedGraph extract_subgraph(std::span<const VertexPrediction> vertex_ops, int root);
/// Renumbers vertex operands to operation indices.
Equation graph_to_equation(const DecodedGraph& z);
Equation extract_equation(std::span<const VertexPrediction> vertex_ops, int root);

/// Executes every vertex in place and returns the value at `root`.
EvalResult evaluate_in_place(std::span<const VertexPrediction> vertex_ops, int root,
                             std::span<const double> numbers, const ConstantsConfig& constants);

/// C(L, m), exact.  Throws std::invalid_argument when m > L or m < 1 and
/// std::overflow_error when the result does not fit in 64 bits.
std::uint64_t gamma_count(int L, int m);

/// Per-row argmax of every table; ties go to the lowest index.
std::vector<VertexPrediction> argmax_vertex_ops(const ProbTables& tables);
int argmax_root(const ProbTables& tables);

struct RootCandidate {
  Equation equation;
  int root = 0;
  double pr = 0.0;
  EvalResult answer;
};

/// Root positions ranked by P_r (ties to the lowest index), skipping roots
/// whose equation is logically equivalent to one already kept.
std::vector<RootCandidate> topk_roots(const ProbTables& tables,
                                      std::span<const VertexPrediction> vertex_ops, int k,
                                      std::span<const double> numbers,
                                      const ConstantsConfig& constants,
                                      std::uint64_t seed = kDefaultEquivalenceSeed);

}  // namespace cantor

#endif  // CANTOR_GRAPH_H_
