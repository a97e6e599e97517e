#include "cantor/trainer.h"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "cantor/metrics.h"
#include "json.hpp"

namespace cantor {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void say(const TrainerOptions& o, const std::string& msg) {
  if (o.log) o.log(msg);
}

}  // namespace

Model build_model(const std::vector<ProblemInstance>& train, const OperatorSet& operators,
                  const ConstantsConfig& constants, ModelConfig config, std::uint64_t seed) {
  std::vector<std::vector<std::string>> corpus;
  int longest = 0;
  for (const auto& p : train) {
    const std::vector<int> positions = p.number_positions();
    const std::set<int> nums(positions.begin(), positions.end());
    std::vector<std::string> words;
    for (std::size_t i = 0; i < p.text.size(); ++i)
      if (!nums.count(static_cast<int>(i))) words.push_back(p.text[i]);
    corpus.push_back(std::move(words));
    longest = std::max(longest, static_cast<int>(p.text.size()));
  }
  Model m;
  m.vocab = Vocabulary::build(corpus);
  m.operators = operators;
  m.constants = constants;
  config.vocab_size = m.vocab.size();
  config.num_constants = static_cast<int>(constants.size());
  config.num_operators = static_cast<int>(operators.size());
  config.max_len = std::max(config.max_len, longest);
  m.config = config;
  m.params = ModelParams::init(config, seed);
  return m;
}

std::vector<PreparedExample> prepare_examples(const std::vector<ProblemInstance>& data, const Model& model,
                                              bool weak, PrepareStats* stats) {
  PrepareStats local;
  PrepareStats& s = stats ? *stats : local;
  std::vector<PreparedExample> out;
  for (const auto& p : data) {
    if (static_cast<int>(p.text.size()) > model.config.max_len) {
      ++s.too_large;
      continue;
    }
    PreparedExample e;
    e.id = p.id;
    e.input = encode_instance(p, model.vocab);
    e.numbers = p.number_values();
    if (weak) {
      e.sup.candidates = weak_candidates(e.numbers, model.constants, p.answer);
      if (e.sup.candidates.empty()) {
        ++s.skipped_no_candidates;
        continue;
      }
    } else {
      if (!p.gold) throw DatasetError(p.id + ": no gold equation (use weak supervision for answer-only data)");
      Equation eq = parse_equation(*p.gold, model.operators, model.constants);
      validate_equation(eq, static_cast<int>(e.numbers.size()), model.constants, &model.operators);
      if (static_cast<int>(eq.ops.size()) > model.config.L) {
        ++s.too_large;
        continue;
      }
      if (count_branches(eq) > 0) ++s.branched;
      e.sup.gold = std::move(eq);
    }
    out.push_back(std::move(e));
  }
  return out;
}

double training_step(Model& model, Adam& adam, const std::vector<const PreparedExample*>& batch,
                     const TrainingConfig& cfg, int step, double* grad_norm) {
  const int n = static_cast<int>(batch.size());
  std::vector<ModelParams> grads(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<char> ok(batch.size(), 0);
#pragma omp parallel for schedule(dynamic) if (n > 1)
  for (int i = 0; i < n; ++i) {
    const PreparedExample& ex = *batch[static_cast<std::size_t>(i)];
    const std::uint64_t seed = cfg.seed * 1315423911ULL + stable_hash(ex.id);
    try {
      LossAndGrad lg = compute_gradients(
          ex.input, [&](const ProbTables& t) { return compute_objective(ex.sup, t, cfg, step, seed); },
          model.params, model.config, model.operators);
      grads[static_cast<std::size_t>(i)] = std::move(lg.grads);
      losses[static_cast<std::size_t>(i)] = lg.loss;
      ok[static_cast<std::size_t>(i)] = 1;
    } catch (const NonFiniteLoss&) {
    }
  }
  ModelParams total = model.params.zeros_like();
  std::vector<Matrix*> dst;
  total.for_each([&](const std::string&, Matrix& m) { dst.push_back(&m); });
  double loss = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!ok[i]) continue;
    std::size_t k = 0;
    grads[i].for_each([&](const std::string&, const Matrix& m) { nn::add_into(*dst[k++], m); });
    loss += losses[i];
    ++used;
  }
  if (used == 0) throw NonFiniteLoss("every example in the batch produced a non-finite loss");
  total.scale(1.0 / used);
  const double norm = adam.step(model.params, total, cfg.grad_clip);
  if (grad_norm) *grad_norm = norm;
  return loss / used;
}

TrainResult train(const std::vector<ProblemInstance>& train_data, const std::vector<ProblemInstance>& dev_data,
                  Model model, const TrainerOptions& options) {
  const TrainingConfig& cfg = options.training;
  cfg.validate();
  if (model.config.L != cfg.L) throw ModelError("model L does not match training L");
  const auto t0 = Clock::now();
  TrainResult result;
  std::vector<PreparedExample> examples = prepare_examples(train_data, model, cfg.weak, &result.stats);
  if (examples.empty()) throw DatasetError("no usable training instances");
  if (result.stats.too_large > 0)
    result.warnings.push_back(std::to_string(result.stats.too_large) +
                              " instances skipped: text longer than max_len or more operations than L");
  if (result.stats.skipped_no_candidates > 0)
    result.warnings.push_back(std::to_string(result.stats.skipped_no_candidates) +
                              " instances skipped: no weak candidate reaches the answer");
  const bool uses_mml = cfg.mode == TrainingMode::kMml || (cfg.mode == TrainingMode::kHardEmAnnealed && cfg.tau > 0);
  if (uses_mml && result.stats.branched > 0)
    result.warnings.push_back("MML on " + std::to_string(result.stats.branched) +
                              " branched gold equations: the dynamic program is exact only for linear "
                              "(chain) structures and over-counts mappings of branched sub-graphs");
  for (const auto& w : result.warnings) say(options, "warning: " + w);

  std::vector<ProblemInstance> dev = dev_data;
  if (options.dev_limit > 0 && static_cast<int>(dev.size()) > options.dev_limit)
    dev.resize(static_cast<std::size_t>(options.dev_limit));

  Adam adam(model.params, cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const auto batch_size = static_cast<std::size_t>(std::min<std::size_t>(cfg.batch_size, examples.size()));

  auto evaluate_dev = [&](int step) {
    if (dev.empty()) return;
    const double acc = value_accuracy(model, dev);
    result.dev_history.emplace_back(step, acc);
    std::ostringstream m;
    m << "step " << step << " dev value accuracy " << acc;
    say(options, m.str());
    if (options.jsonl_log)
      *options.jsonl_log << nlohmann::json{{"step", step}, {"dev_value_accuracy", acc}}.dump() << '\n';
    if (acc > result.best_dev_accuracy) {
      result.best_dev_accuracy = acc;
      result.best_step = step;
      result.best = model;
    }
  };

  double running = 0.0;
  int running_n = 0;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const PreparedExample*> batch;
    while (batch.size() < batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&examples[order[cursor++]]);
    }
    double norm = 0.0;
    const double loss = training_step(model, adam, batch, cfg, step, &norm);
    const std::string mode(training_mode_name(effective_mode(cfg, step)));
    result.steps.push_back({step, mode, loss, norm});
    result.steps_run = step;
    running += loss;
    ++running_n;
    if (options.jsonl_log)
      *options.jsonl_log << nlohmann::json{{"step", step}, {"mode", mode}, {"loss", loss}, {"grad_norm", norm}}.dump()
                         << '\n';
    if (cfg.log_every > 0 && step % cfg.log_every == 0) {
      std::ostringstream m;
      m << "step " << step << " [" << mode << "] loss " << running / running_n;
      say(options, m.str());
      running = 0.0;
      running_n = 0;
    }
    const bool out_of_time =
        options.time_limit_seconds > 0.0 && seconds_since(t0) > options.time_limit_seconds;
    if ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.max_steps || out_of_time)
      evaluate_dev(step);
    if (out_of_time) {
      say(options, "time limit reached at step " + std::to_string(step));
      break;
    }
  }
  if (result.best_dev_accuracy < 0.0) {
    result.best = model;
    result.best_step = result.steps_run;
  }
  result.seconds = seconds_since(t0);
  return result;
}

Prediction predict(const Model& model, const ProblemInstance& instance, int k) {
  const EncodedProblem input = encode_instance(instance, model.vocab);
  const ForwardPass pass = forward(input, model.params, model.config, model.operators);
  const std::vector<double> numbers = instance.number_values();
  const GreedyResult g = greedy_decode(pass.tables, numbers, model.constants);
  Prediction p;
  p.id = instance.id;
  p.equation = serialize_equation(g.equation, model.constants);
  if (g.answer.ok()) p.answer = g.answer.value;
  p.root = g.graph.root_position();
  for (const RootCandidate& c : topk_roots(pass.tables, g.vertex_ops, std::max(1, k), numbers, model.constants)) {
    Alternate a;
    a.equation = serialize_equation(c.equation, model.constants);
    if (c.answer.ok()) a.answer = c.answer.value;
    a.pr = c.pr;
    p.alternates.push_back(std::move(a));
  }
  return p;
}

std::vector<Prediction> predict_all(const Model& model, const std::vector<ProblemInstance>& data, int k) {
  std::vector<Prediction> out(data.size());
  const int n = static_cast<int>(data.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = predict(model, data[static_cast<std::size_t>(i)], k);
  return out;
}

double value_accuracy(const Model& model, const std::vector<ProblemInstance>& data) {
  if (data.empty()) return 0.0;
  const int n = static_cast<int>(data.size());
  int correct = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : correct)
  for (int i = 0; i < n; ++i) {
    const ProblemInstance& p = data[static_cast<std::size_t>(i)];
    const ForwardPass pass = forward(encode_instance(p, model.vocab), model.params, model.config, model.operators);
    const GreedyResult g = greedy_decode(pass.tables, p.number_values(), model.constants);
    if (g.answer.ok() && answers_match(g.answer.value, p.answer)) ++correct;
  }
  return static_cast<double>(correct) / n;
}

}  // namespace cantor
