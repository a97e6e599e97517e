// Training objectives over probability tables: naive mapping, hard EM with a
// level-wise k-best beam search, MML by dynamic programming, annealed hard
// EM, and weakly supervised variants.  Every objective returns the loss and
// its derivative with respect to the log-probability tables.
#ifndef CANTOR_TRAINING_H_
#define CANTOR_TRAINING_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cantor/equation.h"
#include "cantor/graph.h"

namespace cantor {

class ObjectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// levels[l] holds the 0-based operation indices of level l+1, ascending.
/// The level of an operation is the longest path from it to a leaf.
struct LevelPartition {
  std::vector<std::vector<int>> levels;
  std::vector<int> level_of;  // 1-based level per operation

  static LevelPartition of(const Equation& eq);
  /// Positions that must stay free above level l (0-based): sum of |D_s|, s > l.
  int slots_above(std::size_t l) const;
};

/// Converts a position vector (mapping[i] = decoder position of operation
/// i+1) into the decoded graph it induces.  Entries are sorted by position.
DecodedGraph mapping_to_graph(const Equation& eq, std::span<const int> mapping);

/// log P(Z|X) for the graph induced by a mapping.
double score_mapping(const ProbTables& tables, const Equation& eq, std::span<const int> mapping);

/// TableGrad for -score_mapping: -1 on every entry the mapping uses.
void accumulate_mapping_grad(const ProbTables& tables, const Equation& eq,
                             std::span<const int> mapping, double weight, TableGrad& grad);

struct ObjectiveResult {
  double loss = 0.0;
  TableGrad grad;
};

/// Operation i is mapped to vertex i.
std::vector<int> naive_mapping(const Equation& eq);
ObjectiveResult loss_naive(const Equation& y, const ProbTables& tables);

struct HardEmResult {
  DecodedGraph graph;
  std::vector<int> mapping;
  double log_prob = 0.0;
};

/// Level-by-level beam search: every beam state is extended by the k-best
/// assignments of the level's operations to the allowed positions, then the
/// global top-B survive.  Root probability is folded into the top level.
HardEmResult hardem_best_mapping(const Equation& y, const ProbTables& tables, int B);
ObjectiveResult loss_hardem(const Equation& y, const ProbTables& tables, int B);

/// log M_{i,j}: log marginal of the sub-graph rooted at operation i with the
/// root at vertex j, under independent mapping of operand sub-graphs.
Matrix log_marginal_table(const Equation& y, const ProbTables& tables);
ObjectiveResult loss_mml(const Equation& y, const ProbTables& tables);

/// The same recursion evaluated serially in linear probability space; returns
/// sum_j P_r(j) M_{|Y|,j}.  Cross-check for the log-space parallel DP.
double mml_marginal_reference(const Equation& y, const ProbTables& tables);

/// Uniformly random order-preserving mapping.
ObjectiveResult loss_random_mapping(const Equation& y, const ProbTables& tables, std::uint64_t seed);

/// All single-operation equations `a + b` / `a - b` over two distinct pool
/// entries (numbers first, then constants), at least one of them a number,
/// evaluating to the answer within tol.  Additions use a < b in pool order.
std::vector<Equation> weak_candidates(std::span<const double> numbers,
                                      const ConstantsConfig& constants, double answer,
                                      double tol = 1e-6);

enum class WeakMode { kMarginal, kBest };
/// -log sum_c exp(-loss_mml(c)) (kMarginal) or the best candidate's best
/// mapping (kBest).
ObjectiveResult loss_weak(std::span<const Equation> candidates, const ProbTables& tables,
                          WeakMode mode, int B = 20);

enum class TrainingMode { kNaive, kHardEm, kMml, kHardEmAnnealed, kRandomMapping };
std::string_view training_mode_name(TrainingMode mode);
TrainingMode training_mode_from_name(std::string_view name);

struct TrainingConfig {
  TrainingMode mode = TrainingMode::kHardEmAnnealed;
  int beam = 20;
  int tau = 2000;
  int L = 60;
  double learning_rate = 2e-3;
  int max_steps = 10000;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double grad_clip = 1.0;
  int eval_every = 200;
  int log_every = 50;
  bool weak = false;

  void validate() const;
};

/// The objective a given step trains on: annealed mode uses MML for steps
/// 1..tau and hard EM afterwards.
TrainingMode effective_mode(const TrainingConfig& cfg, int step);

/// Supervision for one instance: a gold equation or weak candidates.
struct Supervision {
  std::optional<Equation> gold;
  std::vector<Equation> candidates;
};

ObjectiveResult compute_objective(const Supervision& sup, const ProbTables& tables,
                                  const TrainingConfig& cfg, int step, std::uint64_t instance_seed = 0);

}  // namespace cantor

#endif  // CANTOR_TRAINING_H_
