#include "cantor/training.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <tuple>

#include "cantor/assignment.h"
#include "cantor/kernels.h"

namespace cantor {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

VertexOperand to_vertex_operand(const OperandRef& r, std::span<const int> mapping) {
  switch (r.kind) {
    case OperandKind::kConst: return VertexOperand::constant(r.index);
    case OperandKind::kNum: return VertexOperand::number(r.index);
    case OperandKind::kOp: return VertexOperand::vertex(mapping[static_cast<std::size_t>(r.index - 1)]);
  }
  return {};
}

void require_fits(const Equation& y, const ProbTables& tables) {
  if (y.empty()) throw ObjectiveError("empty gold equation");
  if (static_cast<int>(y.size()) > tables.dims.L)
    throw ObjectiveError("equation has more operations than the graph has vertices");
}

// Log score of placing operation i at 0-based row `row`, given where its
// operand operations sit.
double operation_log_score(const ProbTables& t, const Operation& o, int row,
                           std::span<const int> mapping) {
  const int ca = t.dims.column(to_vertex_operand(o.a, mapping));
  const int cb = t.dims.column(to_vertex_operand(o.b, mapping));
  return t.log_pf(row, t.op_column(o.op)) + t.log_pa(row, ca) + t.log_pb(row, cb);
}

}  // namespace

// ---------------------------------------------------------------------------
// Levels and mappings

LevelPartition LevelPartition::of(const Equation& eq) {
  LevelPartition lp;
  lp.level_of.assign(eq.size(), 0);
  int top = 0;
  for (std::size_t i = 0; i < eq.size(); ++i) {
    int lvl = 1;
    for (const OperandRef* r : {&eq.ops[i].a, &eq.ops[i].b})
      if (r->is_op()) lvl = std::max(lvl, lp.level_of[static_cast<std::size_t>(r->index - 1)] + 1);
    lp.level_of[i] = lvl;
    top = std::max(top, lvl);
  }
  lp.levels.assign(static_cast<std::size_t>(top), {});
  for (std::size_t i = 0; i < eq.size(); ++i)
    lp.levels[static_cast<std::size_t>(lp.level_of[i] - 1)].push_back(static_cast<int>(i));
  return lp;
}

int LevelPartition::slots_above(std::size_t l) const {
  int n = 0;
  for (std::size_t s = l + 1; s < levels.size(); ++s) n += static_cast<int>(levels[s].size());
  return n;
}

DecodedGraph mapping_to_graph(const Equation& eq, std::span<const int> mapping) {
  if (mapping.size() != eq.size()) throw GraphError("mapping length differs from equation length");
  DecodedGraph z;
  for (std::size_t i = 0; i < eq.size(); ++i) {
    const Operation& o = eq.ops[i];
    z.entries.push_back({mapping[i], o.op, to_vertex_operand(o.a, mapping), to_vertex_operand(o.b, mapping)});
  }
  std::sort(z.entries.begin(), z.entries.end(),
            [](const GraphEntry& x, const GraphEntry& y) { return x.position < y.position; });
  return z;
}

double score_mapping(const ProbTables& tables, const Equation& eq, std::span<const int> mapping) {
  return score_graph(tables, mapping_to_graph(eq, mapping));
}

void accumulate_mapping_grad(const ProbTables& tables, const Equation& eq,
                             std::span<const int> mapping, double weight, TableGrad& grad) {
  const TableDims& d = tables.dims;
  for (std::size_t i = 0; i < eq.size(); ++i) {
    const Operation& o = eq.ops[i];
    const auto row = static_cast<std::size_t>(mapping[i] - 1);
    grad.g_pf(row, static_cast<std::size_t>(tables.op_column(o.op))) += weight;
    grad.g_pa(row, static_cast<std::size_t>(d.column(to_vertex_operand(o.a, mapping)))) += weight;
    grad.g_pb(row, static_cast<std::size_t>(d.column(to_vertex_operand(o.b, mapping)))) += weight;
  }
  grad.g_pr[static_cast<std::size_t>(mapping.back() - 1)] += weight;
}

namespace {

ObjectiveResult mapping_objective(const Equation& y, const ProbTables& tables,
                                  std::span<const int> mapping) {
  ObjectiveResult r;
  r.loss = -score_mapping(tables, y, mapping);
  r.grad = TableGrad::zeros(tables.dims);
  accumulate_mapping_grad(tables, y, mapping, -1.0, r.grad);
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Naive mapping

std::vector<int> naive_mapping(const Equation& eq) {
  std::vector<int> m(eq.size());
  std::iota(m.begin(), m.end(), 1);
  return m;
}

ObjectiveResult loss_naive(const Equation& y, const ProbTables& tables) {
  require_fits(y, tables);
  return mapping_objective(y, tables, naive_mapping(y));
}

// ---------------------------------------------------------------------------
// Hard EM

namespace {

struct BeamState {
  std::vector<int> mapping;  // 0 while unassigned
  double score = 0.0;
};

bool beam_before(const BeamState& x, const BeamState& y) {
  if (x.score != y.score) return x.score > y.score;
  return x.mapping < y.mapping;
}

using GraphKey = std::vector<std::tuple<int, int, int, int>>;

GraphKey induced_key(const Equation& y, const ProbTables& t, const BeamState& s) {
  GraphKey key;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (s.mapping[i] == 0) continue;
    const Operation& o = y.ops[i];
    key.emplace_back(s.mapping[i], static_cast<int>(o.op), t.dims.column(to_vertex_operand(o.a, s.mapping)),
                     t.dims.column(to_vertex_operand(o.b, s.mapping)));
  }
  std::sort(key.begin(), key.end());
  return key;
}

}  // namespace

HardEmResult hardem_best_mapping(const Equation& y, const ProbTables& tables, int B) {
  require_fits(y, tables);
  if (B < 1) throw ObjectiveError("beam size must be >= 1");
  const LevelPartition lp = LevelPartition::of(y);
  const int L = tables.dims.L;

  std::vector<BeamState> beam{{std::vector<int>(y.size(), 0), 0.0}};
  for (std::size_t l = 0; l < lp.levels.size(); ++l) {
    const auto& ops = lp.levels[l];
    const bool top = l + 1 == lp.levels.size();
    const int ub = L - lp.slots_above(l);
    std::vector<BeamState> expanded;
    for (const BeamState& s : beam) {
      int lb = 0;
      if (l > 0)
        for (int j : lp.levels[l - 1]) lb = std::max(lb, s.mapping[static_cast<std::size_t>(j)]);
      const int width = ub - lb;
      if (width < static_cast<int>(ops.size())) continue;
      Matrix scores(ops.size(), static_cast<std::size_t>(width));
      for (std::size_t r = 0; r < ops.size(); ++r) {
        const Operation& o = y.ops[static_cast<std::size_t>(ops[r])];
        for (int c = 0; c < width; ++c) {
          const int row = lb + c;  // position lb+c+1
          double v = operation_log_score(tables, o, row, s.mapping);
          if (top) v += tables.log_pr[static_cast<std::size_t>(row)];
          scores(r, static_cast<std::size_t>(c)) = v;
        }
      }
      std::vector<Assignment> best;
      try {
        best = kbest_assignment(scores, B);
      } catch (const InfeasibleAssignment&) {
        continue;
      }
      for (const Assignment& a : best) {
        BeamState next = s;
        for (std::size_t r = 0; r < ops.size(); ++r)
          next.mapping[static_cast<std::size_t>(ops[r])] = lb + a.columns[r] + 1;
        next.score = s.score + a.score;
        expanded.push_back(std::move(next));
      }
    }
    // Merge states that induce the same partial graph.
    std::map<GraphKey, std::size_t> seen;
    std::vector<BeamState> unique;
    for (auto& s : expanded) {
      auto key = induced_key(y, tables, s);
      auto it = seen.find(key);
      if (it == seen.end()) {
        seen.emplace(std::move(key), unique.size());
        unique.push_back(std::move(s));
      } else if (beam_before(s, unique[it->second])) {
        unique[it->second] = std::move(s);
      }
    }
    std::sort(unique.begin(), unique.end(), beam_before);
    if (static_cast<int>(unique.size()) > B) unique.resize(static_cast<std::size_t>(B));
    beam = std::move(unique);
    if (beam.empty()) throw ObjectiveError("no feasible mapping: graph too small for the level structure");
  }
  const BeamState& best = beam.front();
  if (!std::isfinite(best.score)) throw ObjectiveError("best mapping has zero probability");
  HardEmResult r;
  r.mapping = best.mapping;
  r.graph = mapping_to_graph(y, r.mapping);
  r.log_prob = best.score;
  return r;
}

ObjectiveResult loss_hardem(const Equation& y, const ProbTables& tables, int B) {
  HardEmResult best = hardem_best_mapping(y, tables, B);
  ObjectiveResult r;
  r.loss = -best.log_prob;
  r.grad = TableGrad::zeros(tables.dims);
  accumulate_mapping_grad(tables, y, best.mapping, -1.0, r.grad);
  return r;
}

// ---------------------------------------------------------------------------
// MML

namespace {

struct MmlForward {
  Matrix log_m;   // |Y| × L
  Matrix sum_a;   // prefix marginal of operand a (only for operation operands)
  Matrix sum_b;
  double log_total = kNegInf;
};

MmlForward mml_forward(const Equation& y, const ProbTables& t) {
  const auto m = y.size();
  const auto L = static_cast<std::size_t>(t.dims.L);
  MmlForward f{Matrix(m, L, kNegInf), Matrix(m, L, kNegInf), Matrix(m, L, kNegInf), kNegInf};
  std::vector<int> no_mapping(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const Operation& o = y.ops[i];
    const auto fcol = static_cast<std::size_t>(t.op_column(o.op));
    if (o.a.is_op())
      kernels::prefix_logsumexp(f.log_m.row(static_cast<std::size_t>(o.a.index - 1)), t.log_pa, f.sum_a.row(i));
    if (o.b.is_op())
      kernels::prefix_logsumexp(f.log_m.row(static_cast<std::size_t>(o.b.index - 1)), t.log_pb, f.sum_b.row(i));
    const int ca = o.a.is_op() ? -1 : t.dims.column(to_vertex_operand(o.a, no_mapping));
    const int cb = o.b.is_op() ? -1 : t.dims.column(to_vertex_operand(o.b, no_mapping));
    for (std::size_t j = 0; j < L; ++j) {
      const double a = o.a.is_op() ? f.sum_a(i, j) : t.log_pa(j, static_cast<std::size_t>(ca));
      const double b = o.b.is_op() ? f.sum_b(i, j) : t.log_pb(j, static_cast<std::size_t>(cb));
      f.log_m(i, j) = (a == kNegInf || b == kNegInf) ? kNegInf : t.log_pf(j, fcol) + a + b;
    }
  }
  std::vector<double> terms(L);
  for (std::size_t j = 0; j < L; ++j) terms[j] = t.log_pr[j] + f.log_m(m - 1, j);
  f.log_total = kernels::log_sum_exp(terms);
  return f;
}

}  // namespace

Matrix log_marginal_table(const Equation& y, const ProbTables& tables) {
  require_fits(y, tables);
  return mml_forward(y, tables).log_m;
}

ObjectiveResult loss_mml(const Equation& y, const ProbTables& t) {
  require_fits(y, t);
  const MmlForward f = mml_forward(y, t);
  if (f.log_total == kNegInf) throw ObjectiveError("marginal probability is zero");
  const auto m = y.size();
  const auto L = static_cast<std::size_t>(t.dims.L);

  ObjectiveResult r;
  r.loss = -f.log_total;
  r.grad = TableGrad::zeros(t.dims);
  Matrix g_m(m, L, 0.0);  // dloss / dlog M
  for (std::size_t j = 0; j < L; ++j) {
    const double term = t.log_pr[j] + f.log_m(m - 1, j);
    const double w = term == kNegInf ? 0.0 : std::exp(term - f.log_total);
    r.grad.g_pr[j] -= w;
    g_m(m - 1, j) = -w;
  }

  std::vector<int> no_mapping(m, 0);
  // Parents have larger indices than their operands.
  for (std::size_t i = m; i-- > 0;) {
    const Operation& o = y.ops[i];
    const auto fcol = static_cast<std::size_t>(t.op_column(o.op));
    for (std::size_t j = 0; j < L; ++j) {
      const double g = g_m(i, j);
      if (g == 0.0) continue;
      r.grad.g_pf(j, fcol) += g;
      auto operand = [&](const OperandRef& ref, const Matrix& log_p, const Matrix& sums, Matrix& g_p) {
        if (!ref.is_op()) {
          g_p(j, static_cast<std::size_t>(t.dims.column(to_vertex_operand(ref, no_mapping)))) += g;
          return;
        }
        const double s = sums(i, j);
        if (s == kNegInf) return;
        const auto u = static_cast<std::size_t>(ref.index - 1);
        for (std::size_t p = 0; p < j; ++p) {
          const double e = f.log_m(u, p) + log_p(j, p);
          if (e == kNegInf) continue;
          const double w = g * std::exp(e - s);
          g_p(j, p) += w;
          g_m(u, p) += w;
        }
      };
      operand(o.a, t.log_pa, f.sum_a, r.grad.g_pa);
      operand(o.b, t.log_pb, f.sum_b, r.grad.g_pb);
    }
  }
  return r;
}

double mml_marginal_reference(const Equation& y, const ProbTables& t) {
  require_fits(y, t);
  const auto m = y.size();
  const auto L = static_cast<std::size_t>(t.dims.L);
  Matrix M(m, L, 0.0);
  std::vector<int> no_mapping(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const Operation& o = y.ops[i];
    for (std::size_t j = 0; j < L; ++j) {
      auto operand = [&](const OperandRef& ref, const Matrix& log_p) {
        if (!ref.is_op()) return std::exp(log_p(j, static_cast<std::size_t>(t.dims.column(to_vertex_operand(ref, no_mapping)))));
        double s = 0.0;
        for (std::size_t p = 0; p < j; ++p)
          s += M(static_cast<std::size_t>(ref.index - 1), p) * std::exp(log_p(j, p));
        return s;
      };
      M(i, j) = t.pf(static_cast<int>(j), t.op_column(o.op)) * operand(o.a, t.log_pa) * operand(o.b, t.log_pb);
    }
  }
  double total = 0.0;
  for (std::size_t j = 0; j < L; ++j) total += t.pr(static_cast<int>(j)) * M(m - 1, j);
  return total;
}

// ---------------------------------------------------------------------------
// Random mapping

ObjectiveResult loss_random_mapping(const Equation& y, const ProbTables& tables, std::uint64_t seed) {
  require_fits(y, tables);
  std::mt19937_64 rng(seed);
  std::vector<int> positions(static_cast<std::size_t>(tables.dims.L));
  std::iota(positions.begin(), positions.end(), 1);
  std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(y.size());
  std::sort(positions.begin(), positions.end());
  return mapping_objective(y, tables, positions);
}

// ---------------------------------------------------------------------------
// Weak supervision

std::vector<Equation> weak_candidates(std::span<const double> numbers,
                                      const ConstantsConfig& constants, double answer, double tol) {
  if (!std::isfinite(answer)) throw ObjectiveError("weak_candidates: answer is not finite");
  const int n = static_cast<int>(numbers.size());
  const int pool = n + static_cast<int>(constants.size());
  auto ref = [n](int k) { return k < n ? OperandRef::number(k + 1) : OperandRef::constant(k - n + 1); };
  auto value = [&](int k) { return k < n ? numbers[static_cast<std::size_t>(k)] : constants.at(k - n + 1).value; };
  std::vector<Equation> out;
  for (int a = 0; a < pool; ++a)
    for (int b = 0; b < pool; ++b) {
      if (a == b || (a >= n && b >= n)) continue;
      if (a < b && std::fabs(value(a) + value(b) - answer) <= tol)
        out.push_back({{{Operator::kAdd, ref(a), ref(b)}}});
      if (std::fabs(value(a) - value(b) - answer) <= tol)
        out.push_back({{{Operator::kSub, ref(a), ref(b)}}});
    }
  return out;
}

ObjectiveResult loss_weak(std::span<const Equation> candidates, const ProbTables& tables,
                          WeakMode mode, int B) {
  if (candidates.empty()) throw ObjectiveError("no weak candidates");
  if (mode == WeakMode::kBest) {
    std::optional<HardEmResult> best;
    std::size_t best_idx = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      HardEmResult r = hardem_best_mapping(candidates[c], tables, B);
      if (!best || r.log_prob > best->log_prob) {
        best = std::move(r);
        best_idx = c;
      }
    }
    ObjectiveResult r;
    r.loss = -best->log_prob;
    r.grad = TableGrad::zeros(tables.dims);
    accumulate_mapping_grad(tables, candidates[best_idx], best->mapping, -1.0, r.grad);
    return r;
  }
  std::vector<ObjectiveResult> parts;
  std::vector<double> neg;
  for (const Equation& c : candidates) {
    parts.push_back(loss_mml(c, tables));
    neg.push_back(-parts.back().loss);
  }
  const double lse = kernels::log_sum_exp(neg);
  ObjectiveResult r;
  r.loss = -lse;
  r.grad = TableGrad::zeros(tables.dims);
  for (std::size_t c = 0; c < parts.size(); ++c) r.grad.add(parts[c].grad, std::exp(neg[c] - lse));
  return r;
}

// ---------------------------------------------------------------------------
// Configuration and dispatch

std::string_view training_mode_name(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::kNaive: return "naive";
    case TrainingMode::kHardEm: return "hard_em";
    case TrainingMode::kMml: return "mml";
    case TrainingMode::kHardEmAnnealed: return "hard_em_annealed";
    case TrainingMode::kRandomMapping: return "random_mapping";
  }
  return "?";
}

TrainingMode training_mode_from_name(std::string_view name) {
  for (auto m : {TrainingMode::kNaive, TrainingMode::kHardEm, TrainingMode::kMml,
                 TrainingMode::kHardEmAnnealed, TrainingMode::kRandomMapping})
    if (training_mode_name(m) == name) return m;
  throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

void TrainingConfig::validate() const {
  if (beam < 1) throw std::invalid_argument("beam size must be >= 1");
  if (tau < 0) throw std::invalid_argument("tau must be >= 0");
  if (L < 1) throw std::invalid_argument("graph size L must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (max_steps < 0) throw std::invalid_argument("max steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

TrainingMode effective_mode(const TrainingConfig& cfg, int step) {
  if (cfg.mode == TrainingMode::kHardEmAnnealed)
    return step <= cfg.tau ? TrainingMode::kMml : TrainingMode::kHardEm;
  return cfg.mode;
}

ObjectiveResult compute_objective(const Supervision& sup, const ProbTables& tables,
                                  const TrainingConfig& cfg, int step, std::uint64_t instance_seed) {
  const TrainingMode mode = effective_mode(cfg, step);
  if (sup.gold && !cfg.weak) {
    switch (mode) {
      case TrainingMode::kNaive: return loss_naive(*sup.gold, tables);
      case TrainingMode::kHardEm: return loss_hardem(*sup.gold, tables, cfg.beam);
      case TrainingMode::kMml: return loss_mml(*sup.gold, tables);
      case TrainingMode::kRandomMapping:
        return loss_random_mapping(*sup.gold, tables, instance_seed * 1000003ULL + static_cast<std::uint64_t>(step));
      case TrainingMode::kHardEmAnnealed: break;
    }
    throw ObjectiveError("unresolved training mode");
  }
  switch (mode) {
    case TrainingMode::kMml: return loss_weak(sup.candidates, tables, WeakMode::kMarginal);
    case TrainingMode::kHardEm: return loss_weak(sup.candidates, tables, WeakMode::kBest, cfg.beam);
    default:
      throw ObjectiveError("weak supervision supports mml, hard_em and hard_em_annealed only");
  }
}

}  // namespace cantor
