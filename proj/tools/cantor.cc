// cantor: generate synthetic data, train, decode, evaluate and self-verify.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "cantor/checkpoint.h"
#include "cantor/dataset.h"
#include "cantor/kernels.h"
#include "cantor/metrics.h"
#include "cantor/synthetic.h"
#include "cantor/trainer.h"
#include "cantor/verify.h"

namespace {

using namespace cantor;
using nlohmann::json;

ConstantsConfig require_constants(const std::string& path) {
  if (path.empty()) throw std::runtime_error("a constants file is required (--constants)");
  if (!std::filesystem::exists(path)) throw std::runtime_error("constants file not found: " + path);
  return ConstantsConfig::load(path);
}

struct GenerateArgs {
  SyntheticConfig cfg;
  std::string operators = "add,sub,mul,div";
  std::string out;
  std::string constants;
};

int run_generate(const GenerateArgs& a) {
  SyntheticConfig cfg = a.cfg;
  cfg.operators = OperatorSet::parse(a.operators);
  const ConstantsConfig consts = a.constants.empty() ? default_constants() : require_constants(a.constants);
  const SyntheticDataset ds = generate_synthetic(cfg, consts);
  write_synthetic(ds, cfg, consts, a.out);
  int held = 0;
  for (const auto& t : ds.templates) held += t.held_out;
  std::cout << "wrote " << ds.train.size() << " train, " << ds.dev.size() << " dev, " << ds.test.size()
            << " test records (" << ds.templates.size() << " templates, " << held << " held out) to " << a.out
            << "\n";
  return 0;
}

// Flags given on the command line override the config file, which overrides
// the built-in defaults.
struct TrainArgs {
  std::string train, dev, constants, config, out;
  std::string operators = "add,sub,mul,div";
  std::string mode;
  int tau = 0, beam = 0, L = 0, steps = 0, batch = 0, eval_every = 0, log_every = 0;
  double lr = 0.0, clip = 0.0, time_limit = 0.0;
  std::uint64_t seed = 0;
  bool weak = false, no_self_attention = false;
  int d = 0, heads = 0, encoder_blocks = 0, decoder_blocks = 0, ffn = 0, dev_limit = 0;
  CLI::App* app = nullptr;
  bool given(const std::string& flag) const { return app->count(flag) > 0; }
};

void apply_config_file(const std::string& path, TrainingConfig& t, ModelConfig& m) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  for (auto& [k, v] : j.items()) {
    if (k == "mode") t.mode = training_mode_from_name(v.get<std::string>());
    else if (k == "tau") t.tau = v;
    else if (k == "beam") t.beam = v;
    else if (k == "L") t.L = v;
    else if (k == "learning_rate") t.learning_rate = v;
    else if (k == "max_steps") t.max_steps = v;
    else if (k == "batch_size") t.batch_size = v;
    else if (k == "seed") t.seed = v;
    else if (k == "grad_clip") t.grad_clip = v;
    else if (k == "eval_every") t.eval_every = v;
    else if (k == "log_every") t.log_every = v;
    else if (k == "weak") t.weak = v;
    else if (k == "d") m.d = v;
    else if (k == "heads") m.heads = v;
    else if (k == "encoder_blocks") m.encoder_blocks = v;
    else if (k == "decoder_blocks") m.decoder_blocks = v;
    else if (k == "ffn_hidden") m.ffn_hidden = v;
    else if (k == "decoder_self_attention") m.decoder_self_attention = v;
    else if (k == "init_std") m.init_std = v;
    else throw std::runtime_error(path + ": unknown config key '" + k + "'");
  }
}

int run_train(const TrainArgs& a) {
  const ConstantsConfig consts = require_constants(a.constants);
  const OperatorSet ops = OperatorSet::parse(a.operators);
  TrainingConfig tc;
  ModelConfig mc;
  if (!a.config.empty()) apply_config_file(a.config, tc, mc);
  if (a.given("--mode")) tc.mode = training_mode_from_name(a.mode);
  if (a.given("--tau")) tc.tau = a.tau;
  if (a.given("--beam")) tc.beam = a.beam;
  if (a.given("--L")) tc.L = a.L;
  if (a.given("--lr")) tc.learning_rate = a.lr;
  if (a.given("--steps")) tc.max_steps = a.steps;
  if (a.given("--batch")) tc.batch_size = a.batch;
  if (a.given("--seed")) tc.seed = a.seed;
  if (a.given("--clip")) tc.grad_clip = a.clip;
  if (a.given("--eval-every")) tc.eval_every = a.eval_every;
  if (a.given("--log-every")) tc.log_every = a.log_every;
  if (a.given("--weak")) tc.weak = a.weak;
  if (a.given("--d")) mc.d = a.d;
  if (a.given("--heads")) mc.heads = a.heads;
  if (a.given("--encoder-blocks")) mc.encoder_blocks = a.encoder_blocks;
  if (a.given("--decoder-blocks")) mc.decoder_blocks = a.decoder_blocks;
  if (a.given("--ffn")) mc.ffn_hidden = a.ffn;
  if (a.given("--no-self-attention")) mc.decoder_self_attention = false;
  mc.L = tc.L;
  tc.validate();

  const auto train_data = load_dataset(a.train);
  const auto dev_data = a.dev.empty() ? std::vector<ProblemInstance>{} : load_dataset(a.dev);
  for (const auto& p : train_data) validate_instance(p, ops, consts);
  for (const auto& p : dev_data) validate_instance(p, ops, consts);

  std::filesystem::create_directories(a.out);
  std::ofstream log(a.out + "/train_log.jsonl");
  TrainerOptions opts;
  opts.training = tc;
  opts.dev_limit = a.dev_limit;
  opts.time_limit_seconds = a.time_limit;
  opts.jsonl_log = &log;
  opts.log = [](const std::string& m) { std::cerr << m << "\n"; };

  std::cerr << "mode " << training_mode_name(tc.mode) << ", tau " << tc.tau << ", beam " << tc.beam << ", L "
            << tc.L << ", seed " << tc.seed << "\n";
  Model model = build_model(train_data, ops, consts, mc, tc.seed);
  const TrainResult r = train(train_data, dev_data, std::move(model), opts);
  const std::string ckpt = a.out + "/model.ckpt";
  save_checkpoint(ckpt, r.best);
  std::cout << "trained " << r.steps_run << " steps in " << r.seconds << " s; best dev value accuracy "
            << (r.best_dev_accuracy < 0 ? std::string("n/a") : std::to_string(r.best_dev_accuracy)) << " at step "
            << r.best_step << "; checkpoint " << ckpt << "\n";
  return 0;
}

int run_decode(const std::string& checkpoint, const std::string& input, const std::string& out, int k) {
  const Model model = load_checkpoint(checkpoint);
  const auto data = load_dataset(input);
  const auto preds = predict_all(model, data, k);
  if (out.empty() || out == "-")
    write_predictions(std::cout, preds);
  else
    save_predictions(out, preds);
  return 0;
}

int run_eval(const std::string& predictions, const std::string& gold, const std::string& constants,
             const std::string& operators, const std::string& train_path, std::vector<int> ks, std::uint64_t seed,
             const std::string& json_out) {
  const ConstantsConfig consts = require_constants(constants);
  const OperatorSet ops = OperatorSet::parse(operators);
  const auto preds = load_predictions(predictions);
  const auto golds = load_dataset(gold);
  std::sort(ks.begin(), ks.end());
  MetricsOptions mo;
  mo.ks = ks;
  mo.seed = seed;
  std::set<std::string> keys;
  if (!train_path.empty()) {
    keys = template_keys(load_dataset(train_path), ops, consts);
    mo.train_keys = &keys;
  }
  const MetricsReport rep = evaluate_predictions(preds, golds, ops, consts, mo);
  std::cout << rep.table();
  std::cout << "--- json\n" << rep.json() << "\n";
  if (!json_out.empty()) {
    std::ofstream o(json_out);
    o << rep.json() << "\n";
  }
  return 0;
}

int run_verify(std::uint64_t seed, bool mutate, const std::vector<std::string>& only) {
  verify::Options o;
  o.seed = seed;
  o.negate_pb_head = mutate;
  using Fn = verify::CheckResult (*)(const verify::Options&);
  const std::vector<std::pair<std::string, Fn>> checks = {
      {"gamma_cardinality", verify::check_gamma},
      {"hardem_optimality", verify::check_hardem_optimality},
      {"mml_exactness", verify::check_mml},
      {"kbest_assignment", verify::check_kbest},
      {"gradient_fidelity", verify::check_gradients},
      {"decoding_validity", verify::check_decoding_validity},
      {"equivalence_library", verify::check_equivalence_library},
      {"beam_monotonicity", verify::check_beam_monotonicity},
      {"weak_enumeration", verify::check_weak_enumeration},
  };
  int failed = 0, run = 0;
  for (const auto& [name, fn] : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const verify::CheckResult r = fn(o);
    ++run;
    failed += !r.passed;
    std::cout << verify::to_json_line(r) << std::endl;
  }
  if (run == 0) throw std::runtime_error("--only matched no check");
  std::cerr << (run - failed) << "/" << run << " checks passed\n";
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cantor: non-autoregressive equation DAG decoder"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (1 for deterministic runs)");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic templated dataset");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--templates", gen.cfg.templates);
  g->add_option("--per-template", gen.cfg.per_template, "instances per template (overrides split sizes)");
  g->add_option("--train", gen.cfg.train);
  g->add_option("--dev", gen.cfg.dev);
  g->add_option("--test", gen.cfg.test);
  g->add_option("--min-ops", gen.cfg.min_ops);
  g->add_option("--max-ops", gen.cfg.max_ops);
  g->add_option("--operators", gen.operators, "operator mix, e.g. add,sub,mul,div");
  g->add_option("--unseen-fraction", gen.cfg.unseen_fraction);
  g->add_option("--constant-prob", gen.cfg.constant_prob);
  g->add_option("--distractor-prob", gen.cfg.distractor_prob);
  g->add_option("--max-number", gen.cfg.max_number);
  g->add_flag("--weak", gen.cfg.weak, "single add/sub operation, answer-only train and dev");
  g->add_option("--seed", gen.cfg.seed);
  g->add_option("--constants", gen.constants, "constants file (default: one=1, hundred=100)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model and write the best-dev checkpoint");
  tr.app = t;
  t->add_option("--train", tr.train, "training records (jsonl)")->required();
  t->add_option("--dev", tr.dev, "dev records for checkpoint selection");
  t->add_option("--constants", tr.constants, "constants file")->required();
  t->add_option("--config", tr.config, "JSON file with training and model fields");
  t->add_option("--out", tr.out, "output directory")->required();
  t->add_option("--operators", tr.operators);
  t->add_option("--mode", tr.mode, "naive | hard_em | mml | hard_em_annealed | random_mapping");
  t->add_option("--tau", tr.tau, "MML warm-up steps for hard_em_annealed");
  t->add_option("--beam", tr.beam, "hard EM beam size");
  t->add_option("--L", tr.L, "graph size");
  t->add_option("--lr", tr.lr);
  t->add_option("--steps", tr.steps);
  t->add_option("--batch", tr.batch);
  t->add_option("--seed", tr.seed);
  t->add_option("--clip", tr.clip);
  t->add_option("--eval-every", tr.eval_every);
  t->add_option("--log-every", tr.log_every);
  t->add_flag("--weak", tr.weak, "train from answers through weak candidates");
  t->add_option("--d", tr.d);
  t->add_option("--heads", tr.heads);
  t->add_option("--encoder-blocks", tr.encoder_blocks);
  t->add_option("--decoder-blocks", tr.decoder_blocks);
  t->add_option("--ffn", tr.ffn);
  t->add_flag("--no-self-attention", tr.no_self_attention);
  t->add_option("--time-limit", tr.time_limit, "stop after this many seconds");
  t->add_option("--dev-limit", tr.dev_limit, "evaluate at most this many dev records");

  std::string ckpt, input, out;
  int k = 1;
  auto* d = app.add_subcommand("decode", "greedy decoding with top-k root alternates");
  d->add_option("--checkpoint", ckpt)->required();
  d->add_option("--input", input)->required();
  d->add_option("--out", out, "predictions file (default stdout)");
  d->add_option("--k", k, "number of root alternates")->check(CLI::PositiveNumber);

  std::string preds, gold, econsts, eops = "add,sub,mul,div,pow", etrain, json_out;
  std::vector<int> ks = {1, 5};
  std::uint64_t eseed = kDefaultEquivalenceSeed;
  auto* e = app.add_subcommand("eval", "score predictions against gold records");
  e->add_option("--predictions", preds)->required();
  e->add_option("--gold", gold)->required();
  e->add_option("--constants", econsts)->required();
  e->add_option("--operators", eops);
  e->add_option("--train", etrain, "training records, enables the novelty breakdown");
  e->add_option("--k", ks, "Val.@k cutoffs");
  e->add_option("--seed", eseed, "equivalence-check seed");
  e->add_option("--json-out", json_out);

  std::uint64_t vseed = verify::Options{}.seed;
  bool mutate = false;
  std::vector<std::string> only;
  auto* v = app.add_subcommand("verify", "run the oracle and property checks");
  v->add_option("--seed", vseed);
  v->add_option("--only", only, "run only the named checks");
  v->add_flag("--mutate-pb-sign", mutate, "flip the sign of the second-operand head gradient");

  CLI11_PARSE(app, argc, argv);
  try {
    if (threads > 0) kernels::set_threads(threads);
    if (*g) return run_generate(gen);
    if (*t) return run_train(tr);
    if (*d) return run_decode(ckpt, input, out, k);
    if (*e) return run_eval(preds, gold, econsts, eops, etrain, ks, eseed, json_out);
    if (*v) return run_verify(vseed, mutate, only);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}
