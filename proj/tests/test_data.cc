#include <filesystem>
#include <fstream>
#include <sstream>

#include "cantor/dataset.h"
#include "cantor/metrics.h"
#include "cantor/synthetic.h"
#include "cantor/trainer.h"
#include "doctest.h"

using namespace cantor;
namespace fs = std::filesystem;

namespace {

const OperatorSet kOps = OperatorSet::arithmetic();

ProblemInstance instance(const std::string& id, std::vector<double> nums, std::string gold) {
  ProblemInstance p;
  p.id = id;
  for (std::size_t i = 0; i < nums.size(); ++i) {
    p.text.push_back("w" + std::to_string(i));
    p.text.push_back(std::to_string(static_cast<int>(nums[i])));
    p.numbers.push_back({nums[i], static_cast<int>(2 * i + 1)});
  }
  const ConstantsConfig none;
  p.answer = evaluate(parse_equation(gold, kOps, none), p.number_values(), none);
  p.gold = gold;
  return p;
}

Prediction predict_as(const ProblemInstance& g, const std::string& eq) {
  const ConstantsConfig none;
  Prediction p;
  p.id = g.id;
  p.equation = eq;
  EvalResult r = try_evaluate(parse_equation(eq, kOps, none), g.number_values(), none);
  if (r.ok()) p.answer = r.value;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("cantor_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("record round trip") {
  std::istringstream in(
      R"({"id":"a","text":"Tom has 3 apples","numbers":[{"value":3,"token":2}],"answer":3.5,"gold":null})"
      "\n\n"
      R"({"id":"b","text":["x","4","y","2"],"numbers":[{"value":4,"token":1},{"value":2,"token":3}],"answer":2,"gold":"num@1 - num@2","split":"test"})"
      "\n");
  auto data = read_dataset(in);
  REQUIRE(data.size() == 2);
  CHECK(data[0].text == std::vector<std::string>{"tom", "has", "3", "apples"});
  CHECK_FALSE(data[0].gold.has_value());
  CHECK(data[1].number_positions() == std::vector<int>{1, 3});
  std::stringstream out;
  write_dataset(out, data);
  auto back = read_dataset(out);
  CHECK(back[1].gold == data[1].gold);
  CHECK(back[1].numbers[1].value == 2.0);
  CHECK(back[0].answer == 3.5);
}

TEST_CASE("dataset errors carry line numbers") {
  std::istringstream bad("{\"id\":\"a\",\"text\":\"x\",\"numbers\":[],\"answer\":1}\n{\"id\":\"b\"}\n");
  try {
    read_dataset(bad, "bad.jsonl");
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
  }
  std::istringstream garbage("not json\n");
  CHECK_THROWS_AS(read_dataset(garbage), DatasetError);
}

TEST_CASE("validate instance") {
  ProblemInstance p = instance("v", {3, 4}, "num@1 + num@2");
  CHECK_NOTHROW(validate_instance(p, kOps, {}));
  p.numbers[0].token = 99;
  CHECK_THROWS(validate_instance(p, kOps, {}));
  ProblemInstance q = instance("w", {3, 4}, "num@1 + num@2");
  q.answer = 8.0;
  CHECK_THROWS(validate_instance(q, kOps, {}));
}

TEST_CASE("answer tolerance") {
  CHECK(answers_match(7.0, 7.0 + 5e-7));
  CHECK_FALSE(answers_match(7.0, 7.0 + 1e-5));
  CHECK(answers_match(1e6, 1e6 * (1 + 5e-7)));
  CHECK_FALSE(answers_match(1e6, 1e6 + 10.0));
}

TEST_CASE("synthetic generation is deterministic") {
  SyntheticConfig cfg;
  cfg.templates = 20;
  cfg.per_template = 100;
  cfg.seed = 7;
  const ConstantsConfig c = default_constants();
  fs::path a = scratch("syn_a"), b = scratch("syn_b");
  write_synthetic(generate_synthetic(cfg, c), cfg, c, a.string());
  write_synthetic(generate_synthetic(cfg, c), cfg, c, b.string());
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "constants.txt"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("synthetic answers and novelty split") {
  SyntheticConfig cfg;
  cfg.train = 400;
  cfg.dev = 50;
  cfg.test = 200;
  cfg.unseen_fraction = 0.25;
  const ConstantsConfig c = default_constants();
  SyntheticDataset ds = generate_synthetic(cfg, c);
  CHECK(ds.templates.size() == 20);
  for (const auto* split : {&ds.train, &ds.dev, &ds.test})
    for (const auto& p : *split) {
      REQUIRE(p.gold);
      CHECK_NOTHROW(validate_instance(p, cfg.operators, c));
    }
  const auto seen = template_keys(ds.train, cfg.operators, c);
  int unseen = 0;
  for (const auto& p : ds.test)
    unseen += !seen.count(template_key(parse_equation(*p.gold, cfg.operators, c), c));
  CHECK(unseen == 50);
}

TEST_CASE("weak synthetic strips gold from training records") {
  SyntheticConfig cfg;
  cfg.weak = true;
  cfg.train = 30;
  cfg.dev = 10;
  cfg.test = 10;
  const ConstantsConfig c = default_constants();
  SyntheticDataset ds = generate_synthetic(cfg, c);
  fs::path dir = scratch("weak");
  write_synthetic(ds, cfg, c, dir.string());
  for (const auto& p : load_dataset((dir / "train.jsonl").string())) CHECK_FALSE(p.gold.has_value());
  for (const auto& p : load_dataset((dir / "test.jsonl").string())) CHECK(p.gold.has_value());
  fs::remove_all(dir);
}

TEST_CASE("metrics on a hand-scored fixture") {
  std::vector<ProblemInstance> gold{
      instance("0", {3, 4}, "( num@1 + num@2 )"),          instance("1", {9, 2}, "( num@1 - num@2 )"),
      instance("2", {6, 3}, "( num@1 / num@2 )"),          instance("3", {2, 5}, "( num@1 * num@2 )"),
      instance("4", {2, 2}, "( num@1 + num@2 )"),          instance("5", {1, 4, 2}, "( ( num@1 + num@2 ) * num@3 )"),
      instance("6", {8, 4}, "( num@1 - num@2 )"),          instance("7", {5, 7}, "( num@1 + num@2 )"),
      instance("8", {3, 3, 4}, "( ( num@1 * num@2 ) - num@3 )"), instance("9", {6, 2}, "( num@1 * num@2 )"),
  };
  std::vector<Prediction> preds{
      predict_as(gold[0], "( num@2 + num@1 )"),  // commuted: right on both
      predict_as(gold[1], "( num@1 - num@2 )"),
      predict_as(gold[2], "( num@1 / num@2 )"),
      predict_as(gold[3], "( num@1 * num@2 )"),
      predict_as(gold[4], "( num@1 * num@2 )"),  // 2*2 = 2+2: value right, equation wrong
      predict_as(gold[5], "( ( num@2 + num@1 ) * num@3 )"),
      predict_as(gold[6], "( num@2 - num@1 )"),  // wrong
      predict_as(gold[7], "( num@1 + num@2 )"),
      predict_as(gold[8], "( ( num@1 + num@2 ) - num@3 )"),  // wrong
      predict_as(gold[9], "( num@1 / num@2 )"),  // wrong
  };
  MetricsReport r = evaluate_predictions(preds, gold, kOps, {});
  CHECK(r.total == 10);
  CHECK(r.value_accuracy() == doctest::Approx(0.7));
  CHECK(r.equation_accuracy() == doctest::Approx(0.6));
  CHECK(r.val_at(1) >= r.val_at(0));  // no alternates: Val.@k falls back to the prediction
  CHECK(r.val_at(0) == doctest::Approx(0.7));
  REQUIRE(r.by_ops.size() == 2);
  CHECK(r.by_ops[0].count == 8);
  CHECK(r.seed == 42);
  CHECK(r.json().find("\"seed\":42") != std::string::npos);
}

TEST_CASE("predictions identical to gold score perfectly") {
  std::vector<ProblemInstance> gold{instance("a", {3, 4}, "( num@1 + num@2 )"),
                                    instance("b", {9, 3}, "( num@1 / num@2 )")};
  std::vector<Prediction> preds{predict_as(gold[0], *gold[0].gold), predict_as(gold[1], *gold[1].gold)};
  for (auto& p : preds) p.alternates.push_back({p.equation, p.answer, 1.0});
  MetricsReport r = evaluate_predictions(preds, gold, kOps, {});
  CHECK(r.value_accuracy() == 1.0);
  CHECK(r.equation_accuracy() == 1.0);
  CHECK(r.val_at(0) == 1.0);
  CHECK(r.val_at(1) == 1.0);
}

TEST_CASE("Val at k uses the first k alternates") {
  std::vector<ProblemInstance> gold{instance("a", {3, 4}, "( num@1 + num@2 )")};
  Prediction p = predict_as(gold[0], "( num@1 * num@2 )");
  p.alternates = {{"( num@1 * num@2 )", 12.0, 0.5}, {"( num@1 - num@2 )", -1.0, 0.3}, {"( num@1 + num@2 )", 7.0, 0.2}};
  MetricsOptions o;
  o.ks = {1, 2, 3};
  MetricsReport r = evaluate_predictions({p}, gold, kOps, {}, o);
  CHECK(r.val_at(0) == 0.0);
  CHECK(r.val_at(1) == 0.0);
  CHECK(r.val_at(2) == 1.0);
}

TEST_CASE("id mismatches are errors") {
  std::vector<ProblemInstance> gold{instance("a", {3, 4}, "( num@1 + num@2 )")};
  Prediction p = predict_as(gold[0], "( num@1 + num@2 )");
  p.id = "zzz";
  CHECK_THROWS_AS(evaluate_predictions({p}, gold, kOps, {}), MetricsError);
  CHECK_THROWS_AS(evaluate_predictions({}, gold, kOps, {}), MetricsError);
}

TEST_CASE("prediction records round trip") {
  Prediction p;
  p.id = "x";
  p.equation = "( num@1 / num@2 )";
  p.root = 3;
  p.alternates = {{"( num@1 / num@2 )", std::nullopt, 0.25}};
  std::stringstream s;
  write_predictions(s, {p});
  auto back = read_predictions(s);
  REQUIRE(back.size() == 1);
  CHECK_FALSE(back[0].answer.has_value());
  CHECK(back[0].root == 3);
  CHECK(back[0].alternates[0].pr == 0.25);
}

TEST_CASE("small training runs are deterministic and warn on branched MML") {
  SyntheticConfig cfg;
  cfg.templates = 4;
  cfg.train = 32;
  cfg.dev = 8;
  cfg.test = 8;
  cfg.max_ops = 3;
  const ConstantsConfig c = default_constants();
  SyntheticDataset ds = generate_synthetic(cfg, c);
  ModelConfig mc;
  mc.d = 16;
  mc.heads = 2;
  mc.encoder_blocks = 1;
  mc.decoder_blocks = 1;
  mc.L = 6;
  TrainerOptions o;
  o.training.mode = TrainingMode::kMml;
  o.training.L = 6;
  o.training.max_steps = 3;
  o.training.batch_size = 4;
  o.training.eval_every = 0;
  Model m = build_model(ds.train, cfg.operators, c, mc, 1);
  TrainResult a = train(ds.train, ds.dev, m, o);
  TrainResult b = train(ds.train, ds.dev, m, o);
  CHECK(a.steps_run == 3);
  std::vector<const Matrix*> pa, pb;
  a.best.params.for_each([&](const std::string&, const Matrix& x) { pa.push_back(&x); });
  b.best.params.for_each([&](const std::string&, const Matrix& x) { pb.push_back(&x); });
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);

  bool branched = false;
  for (const auto& p : ds.train) branched |= count_branches(parse_equation(*p.gold, cfg.operators, c)) > 0;
  bool warned = false;
  for (const auto& w : a.warnings) warned |= w.find("linear") != std::string::npos;
  CHECK(warned == branched);

  auto preds = predict_all(a.best, ds.test, 5);
  CHECK(preds.size() == ds.test.size());
  for (const auto& p : preds) {
    CHECK(p.alternates.size() <= 5);
    CHECK_FALSE(p.alternates.empty());
  }
}
