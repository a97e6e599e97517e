// Line-delimited JSON records for problems and predictions.
#ifndef CANTOR_DATASET_H_
#define CANTOR_DATASET_H_

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cantor/equation.h"
#include "cantor/model.h"

namespace cantor {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NumberMention {
  double value = 0.0;
  int token = 0;  // 0-based index into ProblemInstance::text
};

struct ProblemInstance {
  std::string id;
  std::vector<std::string> text;
  std::vector<NumberMention> numbers;
  double answer = 0.0;
  std::optional<std::string> gold;
  std::string split;

  std::vector<double> number_values() const;
  std::vector<int> number_positions() const;
};

/// Lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Reads one record per non-empty line.  Errors name the source and line.
std::vector<ProblemInstance> read_dataset(std::istream& in, const std::string& source = "<stream>");
std::vector<ProblemInstance> load_dataset(const std::string& path);
void write_dataset(std::ostream& out, const std::vector<ProblemInstance>& data);
void save_dataset(const std::string& path, const std::vector<ProblemInstance>& data);

/// Token indices in range; when gold is present it parses, validates and
/// evaluates to the answer within 1e-6.  Throws DatasetError.
void validate_instance(const ProblemInstance& inst, const OperatorSet& operators,
                       const ConstantsConfig& constants);

EncodedProblem encode_instance(const ProblemInstance& inst, const Vocabulary& vocab);

/// Answers match within 1e-6 relative (absolute below magnitude 1).
bool answers_match(double predicted, double gold);

struct Alternate {
  std::string equation;
  std::optional<double> answer;  // empty when execution failed
  double pr = 0.0;
};

struct Prediction {
  std::string id;
  std::string equation;
  std::optional<double> answer;
  int root = 0;
  std::vector<Alternate> alternates;
};

std::vector<Prediction> read_predictions(std::istream& in, const std::string& source = "<stream>");
std::vector<Prediction> load_predictions(const std::string& path);
void write_predictions(std::ostream& out, const std::vector<Prediction>& preds);
void save_predictions(const std::string& path, const std::vector<Prediction>& preds);

}  // namespace cantor

#endif  // CANTOR_DATASET_H_
