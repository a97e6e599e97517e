#include "cantor/graph.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cantor/kernels.h"

namespace cantor {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int argmax_row(std::span<const double> row) {
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = static_cast<int>(i);
  return best;
}

VertexOperand operand_from_column(const TableDims& dims, int col) {
  if (col < dims.L) return VertexOperand::vertex(col + 1);
  if (col < dims.L + dims.C) return VertexOperand::constant(col - dims.L + 1);
  return VertexOperand::number(col - dims.L - dims.C + 1);
}

}  // namespace

int TableDims::column(const VertexOperand& o) const {
  switch (o.kind) {
    case VertexOperandKind::kVertex:
      if (o.index < 1 || o.index > L) throw GraphError("vertex operand out of range");
      return o.index - 1;
    case VertexOperandKind::kConst:
      if (o.index < 1 || o.index > C) throw GraphError("constant operand out of range");
      return L + o.index - 1;
    case VertexOperandKind::kNum:
      if (o.index < 1 || o.index > N) throw GraphError("number operand out of range");
      return L + C + o.index - 1;
  }
  return -1;
}

OperandMask operand_mask(const TableDims& dims) { return OperandMask(dims); }

ProbTables ProbTables::from_logits(const OperatorSet& operators, const TableDims& dims,
                                   Matrix pf_logits, Matrix pa_logits, Matrix pb_logits,
                                   std::vector<double> pr_logits) {
  if (dims.F != static_cast<int>(operators.size())) throw GraphError("operator count mismatch");
  const auto L = static_cast<std::size_t>(dims.L);
  const auto K = static_cast<std::size_t>(dims.candidates());
  if (pf_logits.rows() != L || pf_logits.cols() != static_cast<std::size_t>(dims.F) ||
      pa_logits.rows() != L || pa_logits.cols() != K || pb_logits.rows() != L ||
      pb_logits.cols() != K || pr_logits.size() != L)
    throw GraphError("logit shapes do not match table dims");
  OperandMask mask(dims);
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t c = 0; c < K; ++c)
      if (!mask.allowed(static_cast<int>(p), static_cast<int>(c))) {
        pa_logits(p, c) = kNegInf;
        pb_logits(p, c) = kNegInf;
      }
  kernels::log_softmax_rows(pf_logits);
  kernels::log_softmax_rows(pa_logits);
  kernels::log_softmax_rows(pb_logits);
  const double lse = kernels::log_sum_exp(pr_logits);
  for (double& v : pr_logits) v -= lse;
  ProbTables t;
  t.dims = dims;
  t.operators = operators;
  t.log_pf = std::move(pf_logits);
  t.log_pa = std::move(pa_logits);
  t.log_pb = std::move(pb_logits);
  t.log_pr = std::move(pr_logits);
  return t;
}

ProbTables ProbTables::uniform(const OperatorSet& operators, const TableDims& dims) {
  const auto L = static_cast<std::size_t>(dims.L);
  const auto K = static_cast<std::size_t>(dims.candidates());
  return from_logits(operators, dims, Matrix(L, static_cast<std::size_t>(dims.F)), Matrix(L, K),
                     Matrix(L, K), std::vector<double>(L, 0.0));
}

double ProbTables::pf(int row, int f) const { return std::exp(log_pf(row, f)); }
double ProbTables::pa(int row, int col) const { return std::exp(log_pa(row, col)); }
double ProbTables::pb(int row, int col) const { return std::exp(log_pb(row, col)); }
double ProbTables::pr(int row) const { return std::exp(log_pr[static_cast<std::size_t>(row)]); }

std::optional<std::string> ProbTables::check_invariants() const {
  auto row_sum = [](std::span<const double> r) {
    double s = 0.0;
    for (double v : r) s += std::exp(v);
    return s;
  };
  OperandMask mask(dims);
  for (int p = 0; p < dims.L; ++p) {
    if (std::fabs(row_sum(log_pf.row(p)) - 1.0) > 1e-6)
      return "pf row " + std::to_string(p + 1) + " does not sum to 1";
    for (const Matrix* m : {&log_pa, &log_pb}) {
      if (std::fabs(row_sum(m->row(p)) - 1.0) > 1e-6)
        return "operand row " + std::to_string(p + 1) + " does not sum to 1";
      for (int c = 0; c < dims.candidates(); ++c)
        if (!mask.allowed(p, c) && (*m)(p, c) != kNegInf)
          return "masked operand entry is not zero at row " + std::to_string(p + 1);
    }
  }
  if (std::fabs(row_sum(log_pr) - 1.0) > 1e-6) return "pr does not sum to 1";
  return std::nullopt;
}

TableGrad TableGrad::zeros(const TableDims& dims) {
  const auto L = static_cast<std::size_t>(dims.L);
  const auto K = static_cast<std::size_t>(dims.candidates());
  return {Matrix(L, static_cast<std::size_t>(dims.F)), Matrix(L, K), Matrix(L, K),
          std::vector<double>(L, 0.0)};
}

void TableGrad::add(const TableGrad& other, double scale) {
  auto axpy = [scale](std::span<double> y, std::span<const double> x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * x[i];
  };
  axpy(g_pf.flat(), other.g_pf.flat());
  axpy(g_pa.flat(), other.g_pa.flat());
  axpy(g_pb.flat(), other.g_pb.flat());
  axpy(g_pr, other.g_pr);
}

std::optional<std::string> check_graph_invariants(const DecodedGraph& z, int L) {
  if (z.entries.empty()) return "empty graph";
  int prev = 0;
  for (const auto& e : z.entries) {
    if (e.position <= prev) return "positions are not strictly increasing";
    if (e.position > L) return "position exceeds L";
    for (const VertexOperand* o : {&e.a, &e.b}) {
      if (!o->is_vertex()) continue;
      bool listed = std::any_of(z.entries.begin(), z.entries.end(), [&](const GraphEntry& x) {
        return x.position == o->index && x.position < e.position;
      });
      if (!listed) return "vertex operand of position " + std::to_string(e.position) +
                          " does not refer to an earlier entry";
    }
    prev = e.position;
  }
  // Reachability from the root, walking backwards.
  std::vector<bool> reach(z.entries.size(), false);
  reach.back() = true;
  for (std::size_t i = z.entries.size(); i-- > 0;) {
    if (!reach[i]) continue;
    for (const VertexOperand* o : {&z.entries[i].a, &z.entries[i].b}) {
      if (!o->is_vertex()) continue;
      for (std::size_t j = 0; j < i; ++j)
        if (z.entries[j].position == o->index) reach[j] = true;
    }
  }
  for (std::size_t i = 0; i < reach.size(); ++i)
    if (!reach[i]) return "entry at position " + std::to_string(z.entries[i].position) +
                          " is not reachable from the root";
  return std::nullopt;
}

double score_graph(const ProbTables& tables, const DecodedGraph& z) {
  const TableDims& d = tables.dims;
  if (z.entries.empty()) throw GraphError("empty graph");
  double total = 0.0;
  for (const auto& e : z.entries) {
    if (e.position < 1 || e.position > d.L) throw GraphError("position out of range");
    const int row = e.position - 1;
    const int ca = d.column(e.a);
    const int cb = d.column(e.b);
    const double la = tables.log_pa(row, ca);
    const double lb = tables.log_pb(row, cb);
    if (la == kNegInf || lb == kNegInf)
      throw MaskedOperand("operand at position " + std::to_string(e.position) +
                          " has zero probability");
    total += tables.log_pf(row, tables.op_column(e.op)) + la + lb;
  }
  if (auto err = check_graph_invariants(z, d.L)) throw GraphError(*err);
  return total + tables.log_pr[static_cast<std::size_t>(z.root_position() - 1)];
}

DecodedGraph extract_subgraph(std::span<const VertexPrediction> vertex_ops, int root) {
  const int L = static_cast<int>(vertex_ops.size());
  if (root < 1 || root > L) throw GraphError("root position out of range");
  std::vector<bool> in(static_cast<std::size_t>(L) + 1, false);
  in[static_cast<std::size_t>(root)] = true;
  // Operands point strictly backwards, so one descending sweep suffices.
  for (int p = root; p >= 1; --p) {
    if (!in[static_cast<std::size_t>(p)]) continue;
    const auto& v = vertex_ops[static_cast<std::size_t>(p - 1)];
    for (const VertexOperand* o : {&v.a, &v.b}) {
      if (!o->is_vertex()) continue;
      if (o->index < 1 || o->index >= p) throw GraphError("vertex operand violates the mask");
      in[static_cast<std::size_t>(o->index)] = true;
    }
  }
  DecodedGraph z;
  for (int p = 1; p <= root; ++p) {
    if (!in[static_cast<std::size_t>(p)]) continue;
    const auto& v = vertex_ops[static_cast<std::size_t>(p - 1)];
    z.entries.push_back({p, v.op, v.a, v.b});
  }
  return z;
}

Equation graph_to_equation(const DecodedGraph& z) {
  Equation eq;
  auto convert = [&](const VertexOperand& o) -> OperandRef {
    switch (o.kind) {
      case VertexOperandKind::kConst: return OperandRef::constant(o.index);
      case VertexOperandKind::kNum: return OperandRef::number(o.index);
      case VertexOperandKind::kVertex:
        for (std::size_t j = 0; j < eq.ops.size(); ++j)
          if (z.entries[j].position == o.index) return OperandRef::operation(static_cast<int>(j) + 1);
        throw GraphError("vertex operand does not refer to an earlier entry");
    }
    return {};
  };
  for (const auto& e : z.entries) {
    Operation o{e.op, convert(e.a), convert(e.b)};
    eq.ops.push_back(o);
  }
  return eq;
}

Equation extract_equation(std::span<const VertexPrediction> vertex_ops, int root) {
  return graph_to_equation(extract_subgraph(vertex_ops, root));
}

EvalResult evaluate_in_place(std::span<const VertexPrediction> vertex_ops, int root,
                             std::span<const double> numbers, const ConstantsConfig& constants) {
  const std::size_t L = vertex_ops.size();
  std::vector<EvalResult> values(L);
  auto fetch = [&](const VertexOperand& o, EvalStatus& status) -> double {
    switch (o.kind) {
      case VertexOperandKind::kConst: return constants.at(o.index).value;
      case VertexOperandKind::kNum: return numbers[static_cast<std::size_t>(o.index - 1)];
      case VertexOperandKind::kVertex: {
        const EvalResult& r = values[static_cast<std::size_t>(o.index - 1)];
        if (!r.ok()) status = r.status;
        return r.value;
      }
    }
    return 0.0;
  };
  for (std::size_t p = 0; p < L; ++p) {
    const auto& v = vertex_ops[p];
    EvalStatus sa = EvalStatus::kOk, sb = EvalStatus::kOk;
    const double a = fetch(v.a, sa);
    const double b = fetch(v.b, sb);
    if (sa != EvalStatus::kOk || sb != EvalStatus::kOk) {
      values[p] = {sa != EvalStatus::kOk ? sa : sb, 0.0};
      continue;
    }
    EvalStatus s;
    const double r = apply_operator(v.op, a, b, s);
    values[p] = {s, r};
  }
  return values.at(static_cast<std::size_t>(root - 1));
}

std::uint64_t gamma_count(int L, int m) {
  if (m < 1 || L < 1) throw std::invalid_argument("gamma_count: need 1 <= m <= L");
  if (m > L) throw std::invalid_argument("gamma_count: |Y| exceeds the graph size");
  const int k = std::min(m, L - m);
  unsigned __int128 result = 1;
  for (int i = 1; i <= k; ++i) {
    // result * (L - k + i) is divisible by i after the multiplication.
    result = result * static_cast<unsigned>(L - k + i) / static_cast<unsigned>(i);
    if (result > std::numeric_limits<std::uint64_t>::max())
      throw std::overflow_error("gamma_count: result exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(result);
}

std::vector<VertexPrediction> argmax_vertex_ops(const ProbTables& tables) {
  const TableDims& d = tables.dims;
  std::vector<VertexPrediction> out(static_cast<std::size_t>(d.L));
#pragma omp parallel for schedule(static) if (d.L >= 64)
  for (int p = 0; p < d.L; ++p) {
    auto& v = out[static_cast<std::size_t>(p)];
    v.op = tables.operators.at(static_cast<std::size_t>(argmax_row(tables.log_pf.row(p))));
    v.a = operand_from_column(d, argmax_row(tables.log_pa.row(p)));
    v.b = operand_from_column(d, argmax_row(tables.log_pb.row(p)));
  }
  return out;
}

int argmax_root(const ProbTables& tables) { return argmax_row(tables.log_pr) + 1; }

std::vector<RootCandidate> topk_roots(const ProbTables& tables,
                                      std::span<const VertexPrediction> vertex_ops, int k,
                                      std::span<const double> numbers,
                                      const ConstantsConfig& constants, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("topk_roots: k must be >= 1");
  std::vector<int> order(tables.log_pr.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return tables.log_pr[x] > tables.log_pr[y]; });
  const int num_count = static_cast<int>(numbers.size());
  std::vector<RootCandidate> kept;
  for (int row : order) {
    if (static_cast<int>(kept.size()) >= k) break;
    Equation eq = extract_equation(vertex_ops, row + 1);
    bool duplicate = false;
    for (const auto& c : kept) {
      try {
        if (check_equivalence(c.equation, eq, num_count, constants, kDefaultEquivalenceTrials, seed)) {
          duplicate = true;
          break;
        }
      } catch (const ResampleExhausted&) {
        // Neither side evaluates anywhere; identical structure is the only
        // sensible notion of a repeat.
        if (structurally_equal(c.equation, eq)) {
          duplicate = true;
          break;
        }
      }
    }
    if (duplicate) continue;
    EvalResult answer = try_evaluate(eq, numbers, constants);
    kept.push_back({std::move(eq), row + 1, tables.pr(row), answer});
  }
  return kept;
}

}  // namespace cantor
