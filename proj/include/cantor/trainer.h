// Training loop and batch prediction on top of the model, the objectives and
// the dataset records.
#ifndef CANTOR_TRAINER_H_
#define CANTOR_TRAINER_H_

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cantor/checkpoint.h"
#include "cantor/dataset.h"
#include "cantor/model.h"
#include "cantor/training.h"

namespace cantor {

/// Builds the vocabulary from the training texts (number tokens excluded)
/// and initializes parameters.
Model build_model(const std::vector<ProblemInstance>& train, const OperatorSet& operators,
                  const ConstantsConfig& constants, ModelConfig config, std::uint64_t seed);

struct PreparedExample {
  std::string id;
  EncodedProblem input;
  std::vector<double> numbers;
  Supervision sup;
};

struct PrepareStats {
  int skipped_no_candidates = 0;
  int too_large = 0;  // gold has more operations than L
  int branched = 0;
};

/// Gold equations are parsed unless weak is set, in which case weak
/// candidates are enumerated from the answer.  Instances that cannot be
/// supervised are dropped and counted.
std::vector<PreparedExample> prepare_examples(const std::vector<ProblemInstance>& data, const Model& model,
                                              bool weak, PrepareStats* stats = nullptr);

struct TrainerOptions {
  TrainingConfig training;
  int dev_limit = 0;                 // 0 evaluates the whole dev set
  double time_limit_seconds = 0.0;   // 0 means no limit
  std::function<void(const std::string&)> log;
  std::ostream* jsonl_log = nullptr;
};

struct StepRecord {
  int step = 0;
  std::string mode;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  Model best;
  int best_step = 0;
  double best_dev_accuracy = -1.0;
  int steps_run = 0;
  double seconds = 0.0;
  std::vector<StepRecord> steps;
  std::vector<std::pair<int, double>> dev_history;
  std::vector<std::string> warnings;
  PrepareStats stats;
};

/// One optimizer step on a batch; returns the mean loss.  Per-example
/// gradients are summed in batch order, so the result does not depend on the
/// thread count.
double training_step(Model& model, Adam& adam, const std::vector<const PreparedExample*>& batch,
                     const TrainingConfig& cfg, int step, double* grad_norm = nullptr);

TrainResult train(const std::vector<ProblemInstance>& train_data, const std::vector<ProblemInstance>& dev_data,
                  Model model, const TrainerOptions& options);

/// Greedy decode plus the top-k non-equivalent root alternates.
Prediction predict(const Model& model, const ProblemInstance& instance, int k = 1);
std::vector<Prediction> predict_all(const Model& model, const std::vector<ProblemInstance>& data, int k = 1);

/// Fraction of instances whose greedy answer matches.
double value_accuracy(const Model& model, const std::vector<ProblemInstance>& data);

}  // namespace cantor

#endif  // CANTOR_TRAINER_H_
