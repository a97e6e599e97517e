// Tiny bidirectional encoder plus a non-autoregressive DAG decoder.  The
// decoder turns L+1 positional embeddings into vertex states in one pass;
// three heads turn them into operator, operand and root distributions.
#ifndef CANTOR_MODEL_H_
#define CANTOR_MODEL_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cantor/equation.h"
#include "cantor/graph.h"
#include "cantor/nn.h"
#include "cantor/training.h"

namespace cantor {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLoss : public ModelError {
 public:
  using ModelError::ModelError;
};

struct ModelConfig {
  int d = 64;
  int heads = 4;
  int encoder_blocks = 2;
  int decoder_blocks = 2;
  int ffn_hidden = 0;  // 0 means 4d
  int max_len = 128;
  int L = 60;
  bool decoder_self_attention = true;
  double init_std = 0.02;

  int vocab_size = 0;
  int num_constants = 0;
  int num_operators = 0;

  int ffn_width() const { return ffn_hidden > 0 ? ffn_hidden : 4 * d; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Whitespace/lowercase vocabulary.  Id 0 is the unknown token, id 1 stands
/// in for every number mention.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kNum = 1;

  Vocabulary();
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, int min_count = 1);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  void add(const std::string& token);

  /// Token ids with every number position replaced by kNum.
  std::vector<int> encode(const std::vector<std::string>& tokens,
                          const std::vector<int>& number_positions) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct EncoderBlock {
  nn::LayerNormParams ln_attn;
  nn::AttentionParams attn;
  nn::LayerNormParams ln_ffn;
  nn::FeedForwardParams ffn;
};

struct DecoderBlock {
  nn::LayerNormParams ln_self;
  nn::AttentionParams self_attn;
  nn::LayerNormParams ln_cross;
  nn::AttentionParams cross_attn;
  nn::LayerNormParams ln_ffn;
  nn::FeedForwardParams ffn;
};

struct ModelParams {
  Matrix token_embedding;      // vocab × d
  Matrix encoder_positions;    // max_len × d
  Matrix decoder_positions;    // (L+1) × d
  Matrix constant_embedding;   // |C| × d
  std::vector<EncoderBlock> encoder;
  std::vector<DecoderBlock> decoder;
  nn::LayerNormParams decoder_norm;
  Matrix w_f;                  // |F| × d
  Matrix w_q, w_a, w_b;        // d × d

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  ModelParams zeros_like() const;

  /// Visits every tensor with a stable dotted name, in a fixed order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  std::size_t parameter_count() const;
  double squared_norm() const;
  void scale(double s);
  bool all_finite() const;
};

/// Token ids plus the 0-based token position of every number mention.
struct EncodedProblem {
  std::vector<int> token_ids;
  std::vector<int> number_positions;
};

struct EncoderOutput {
  Matrix states;   // seq_len × d
  Matrix numbers;  // |N| × d, state at each number's token
};

struct VertexStates {
  Matrix vertices;               // L × d
  std::vector<double> special;   // d, the root query vertex L+1
};

struct EncoderCache {
  Matrix input;
  struct Block {
    Matrix x_in, h_attn, x_mid, h_ffn;
    nn::LayerNormCache ln_attn, ln_ffn;
    nn::AttentionCache attn;
    nn::FeedForwardCache ffn;
  };
  std::vector<Block> blocks;
};

struct DecoderCache {
  struct Block {
    Matrix x_in, h_self, x_self, h_cross, x_cross, h_ffn;
    nn::LayerNormCache ln_self, ln_cross, ln_ffn;
    nn::AttentionCache self_attn, cross_attn;
    nn::FeedForwardCache ffn;
  };
  std::vector<Block> blocks;
  Matrix pre_norm;
  nn::LayerNormCache norm;
};

struct HeadsCache {
  Matrix quantities;  // (L+|C|+|N|) × d: vertices, constants, numbers
  Matrix keys;        // quantities W_q^T
  Matrix query_a;     // V W_a^T
  Matrix query_b;     // V W_b^T
};

EncoderOutput encode(const EncodedProblem& problem, const ModelParams& params, const ModelConfig& cfg,
                     EncoderCache* cache = nullptr);
VertexStates decode_vertices(const EncoderOutput& enc, const ModelParams& params, const ModelConfig& cfg,
                             DecoderCache* cache = nullptr);
ProbTables heads(const VertexStates& vs, const EncoderOutput& enc, const ModelParams& params,
                 const ModelConfig& cfg, const OperatorSet& operators, HeadsCache* cache = nullptr);

struct ForwardPass {
  EncodedProblem input;
  EncoderCache encoder;
  EncoderOutput enc;
  DecoderCache decoder;
  VertexStates vertices;
  HeadsCache head;
  ProbTables tables;
};

ForwardPass forward(const EncodedProblem& problem, const ModelParams& params, const ModelConfig& cfg,
                    const OperatorSet& operators);

struct BackwardOptions {
  // Mutation-testing hook: negates the gradient flowing out of the second
  // operand head.
  bool negate_pb_head = false;
};

/// Gradients of the loss (given through its derivative with respect to the
/// log-probability tables) with respect to every parameter, accumulated into
/// `grads`.
void backward(const ForwardPass& pass, const TableGrad& table_grad, const ModelParams& params,
              const ModelConfig& cfg, ModelParams& grads, const BackwardOptions& options = {});

using Objective = std::function<ObjectiveResult(const ProbTables&)>;

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grads;
};

/// Forward, objective, backward.  Throws NonFiniteLoss.
LossAndGrad compute_gradients(const EncodedProblem& problem, const Objective& objective,
                              const ModelParams& params, const ModelConfig& cfg,
                              const OperatorSet& operators, const BackwardOptions& options = {});

struct GreedyResult {
  std::vector<VertexPrediction> vertex_ops;
  DecodedGraph graph;
  Equation equation;
  EvalResult answer;
};

/// Independent argmax of every head, root argmax, sub-graph extraction and
/// execution.
GreedyResult greedy_decode(const ProbTables& tables, std::span<const double> numbers,
                           const ConstantsConfig& constants);

/// Adaptive-moment optimizer with global-norm clipping.
class Adam {
 public:
  Adam(const ModelParams& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Returns the pre-clipping gradient norm.
  double step(ModelParams& params, ModelParams& grads, double clip_norm);
  int steps() const { return t_; }

 private:
  ModelParams m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

}  // namespace cantor

#endif  // CANTOR_MODEL_H_
