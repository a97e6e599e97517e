// A trained model bundle and its on-disk form: magic, version, a JSON header
// (config, vocabulary, operators, constants, tensor shapes) and the raw
// little-endian tensor payload.
#ifndef CANTOR_CHECKPOINT_H_
#define CANTOR_CHECKPOINT_H_

#include <iosfwd>
#include <string>

#include "cantor/equation.h"
#include "cantor/model.h"

namespace cantor {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Model {
  ModelConfig config;
  ModelParams params;
  Vocabulary vocab;
  OperatorSet operators = OperatorSet::arithmetic();
  ConstantsConfig constants;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Model& model);
Model read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace cantor

#endif  // CANTOR_CHECKPOINT_H_
