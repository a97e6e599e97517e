// Templated word-problem generator.  Each template fixes an equation shape
// and a sentence skeleton; instances vary names, items and numbers.
#ifndef CANTOR_SYNTHETIC_H_
#define CANTOR_SYNTHETIC_H_

#include <cstdint>
#include <string>
#include <vector>

#include "cantor/dataset.h"
#include "cantor/equation.h"

namespace cantor {

struct SyntheticConfig {
  int templates = 20;
  // When positive, the dataset holds templates * per_template instances
  // split 80/10/10; otherwise the explicit sizes below are used.
  int per_template = 0;
  int train = 2000;
  int dev = 200;
  int test = 500;
  int min_ops = 1;
  int max_ops = 3;
  OperatorSet operators = OperatorSet::arithmetic();
  // Fraction of templates held out of train and dev; the same fraction of
  // test instances comes from them.
  double unseen_fraction = 0.2;
  double constant_prob = 0.15;
  double distractor_prob = 0.25;
  int max_number = 20;
  // Single add/sub operation, answer-only train and dev records.
  bool weak = false;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticTemplate {
  Equation equation;
  std::string key;
  int number_count = 0;
  bool held_out = false;
};

struct SyntheticDataset {
  std::vector<SyntheticTemplate> templates;
  // Gold equations are always filled in memory; write_synthetic strips them
  // from train and dev in weak mode.
  std::vector<ProblemInstance> train, dev, test;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, const ConstantsConfig& constants);

/// Writes train.jsonl, dev.jsonl, test.jsonl and constants.txt into dir.
void write_synthetic(const SyntheticDataset& ds, const SyntheticConfig& cfg, const ConstantsConfig& constants,
                     const std::string& dir);

/// The constant pool used when no constants file is given: one = 1, hundred = 100.
ConstantsConfig default_constants();

}  // namespace cantor

#endif  // CANTOR_SYNTHETIC_H_
