// Value accuracy, equation accuracy under randomized equivalence, Val.@k and
// breakdowns by operation count and template novelty.
#ifndef CANTOR_METRICS_H_
#define CANTOR_METRICS_H_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cantor/dataset.h"
#include "cantor/equation.h"

namespace cantor {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricsOptions {
  std::vector<int> ks = {1, 5};
  std::uint64_t seed = 42;
  // Template keys of the training set; enables the novelty breakdown.
  const std::set<std::string>* train_keys = nullptr;
};

struct BreakdownRow {
  std::string key;
  std::size_t count = 0;
  std::size_t value_correct = 0;
  std::size_t equation_correct = 0;
  double value_accuracy() const { return count ? double(value_correct) / double(count) : 0.0; }
  double equation_accuracy() const { return count ? double(equation_correct) / double(count) : 0.0; }
};

struct MetricsReport {
  std::size_t total = 0;
  std::size_t value_correct = 0;
  std::size_t equation_total = 0;  // instances with a gold equation
  std::size_t equation_correct = 0;
  std::vector<int> ks;
  std::vector<std::size_t> val_at_k_correct;
  std::vector<BreakdownRow> by_ops;
  std::vector<BreakdownRow> by_novelty;
  std::uint64_t seed = 42;

  double value_accuracy() const { return total ? double(value_correct) / double(total) : 0.0; }
  double equation_accuracy() const {
    return equation_total ? double(equation_correct) / double(equation_total) : 0.0;
  }
  double val_at(std::size_t i) const { return total ? double(val_at_k_correct.at(i)) / double(total) : 0.0; }

  std::string table() const;
  std::string json() const;
};

/// Aligns predictions to gold records by id (both must cover the same ids).
MetricsReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                   const std::vector<ProblemInstance>& gold, const OperatorSet& operators,
                                   const ConstantsConfig& constants, const MetricsOptions& options = {});

std::set<std::string> template_keys(const std::vector<ProblemInstance>& data, const OperatorSet& operators,
                                    const ConstantsConfig& constants);

/// Stable 64-bit FNV-1a, used to derive per-instance seeds.
std::uint64_t stable_hash(std::string_view s);

}  // namespace cantor

#endif  // CANTOR_METRICS_H_
