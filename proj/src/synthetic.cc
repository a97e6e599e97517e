#include "cantor/synthetic.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace cantor {

namespace {

const std::vector<std::string> kNames = {"tom", "anna", "lee", "maria", "sam", "nora", "omar", "lucy",
                                         "ivan", "grace", "ken", "ruth"};
const std::vector<std::string> kItems = {"apples", "pens", "coins", "stamps", "books", "cards",
                                         "shells", "marbles", "bottles", "tickets", "seeds", "bricks"};
const std::vector<std::string> kVerbs = {
    "has",     "buys",    "finds",   "loses",   "sells",   "owns",    "collects", "receives",
    "donates", "borrows", "packs",   "counts",  "keeps",   "trades",  "gathers",  "stores",
    "orders",  "ships",   "returns", "stacks",  "spends",  "earns",   "picks",    "sorts",
    "breaks",  "paints",  "hides",   "carries", "gives",   "takes",   "wraps",    "loads"};
const std::vector<std::string> kPreps = {"today", "on monday", "at the shop", "in a box", "per day",
                                         "from a friend", "each week", "at school", "in total", "later"};
const std::vector<std::string> kQuestions = {
    "how many are there now ?",       "what is the result ?",          "how many remain ?",
    "how many does she get ?",        "what is the total ?",           "how many are left over ?",
    "how many per group ?",           "what number is it finally ?",   "how many in the end ?",
    "what amount results ?"};

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

struct Skeleton {
  std::vector<std::string> verbs;  // one per number mention
  std::vector<std::string> preps;
  std::string question;
  std::string signature() const {
    std::string s;
    for (std::size_t i = 0; i < verbs.size(); ++i) s += verbs[i] + "|" + preps[i] + ";";
    return s + question;
  }
};

struct Draft {
  SyntheticTemplate tmpl;
  Skeleton skeleton;
};

// Random expression tree with k operations in post-order.  Leaves are numbers
// numbered in leaf order, or constants with probability cp.
OperandRef build_tree(int k, Equation& eq, int& next_num, const OperatorSet& ops, int num_constants,
                      double cp, std::mt19937_64& rng) {
  std::bernoulli_distribution use_const(num_constants > 0 ? cp : 0.0);
  if (k == 0) {
    if (use_const(rng)) return OperandRef::constant(std::uniform_int_distribution<int>(1, num_constants)(rng));
    return OperandRef::number(next_num++);
  }
  const int left = std::uniform_int_distribution<int>(0, k - 1)(rng);
  OperandRef a = build_tree(left, eq, next_num, ops, num_constants, cp, rng);
  OperandRef b = build_tree(k - 1 - left, eq, next_num, ops, num_constants, cp, rng);
  if (a.kind == OperandKind::kConst && b.kind == OperandKind::kConst) b = OperandRef::number(next_num++);
  const Operator op = ops.at(std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(rng));
  eq.ops.push_back({op, a, b});
  return OperandRef::operation(static_cast<int>(eq.ops.size()));
}

void remap_numbers(Equation& eq, const std::vector<int>& to) {
  for (Operation& o : eq.ops)
    for (OperandRef* r : {&o.a, &o.b})
      if (r->kind == OperandKind::kNum) r->index = to[static_cast<std::size_t>(r->index - 1)];
}

Draft make_template(const SyntheticConfig& cfg, const ConstantsConfig& constants, std::mt19937_64& rng) {
  Draft d;
  Equation eq;
  int leaves = 1;
  const int nc = static_cast<int>(constants.size());
  if (cfg.weak) {
    std::vector<Operator> addsub;
    for (Operator op : {Operator::kAdd, Operator::kSub})
      if (cfg.operators.contains(op)) addsub.push_back(op);
    const Operator op = pick(addsub, rng);
    OperandRef a = OperandRef::number(1);
    OperandRef b = OperandRef::number(2);
    leaves = 3;
    if (nc > 0 && std::bernoulli_distribution(cfg.constant_prob)(rng)) {
      b = OperandRef::constant(std::uniform_int_distribution<int>(1, nc)(rng));
      leaves = 2;
    }
    if (std::bernoulli_distribution(0.5)(rng)) std::swap(a, b);
    eq.ops.push_back({op, a, b});
  } else {
    const int k = std::uniform_int_distribution<int>(cfg.min_ops, cfg.max_ops)(rng);
    build_tree(k, eq, leaves, cfg.operators, nc, cfg.constant_prob, rng);
  }
  int n = leaves - 1;
  const int distractors = std::bernoulli_distribution(cfg.distractor_prob)(rng) ? 1 : 0;
  const int mentions = std::max(1, n + distractors);
  // Mention order in the text is a random permutation of the leaf order.
  std::vector<int> perm(static_cast<std::size_t>(mentions));
  std::iota(perm.begin(), perm.end(), 1);
  std::shuffle(perm.begin(), perm.end(), rng);
  remap_numbers(eq, perm);
  d.tmpl.equation = eq;
  d.tmpl.number_count = mentions;
  d.tmpl.key = template_key(eq, constants);
  for (int i = 0; i < mentions; ++i) {
    d.skeleton.verbs.push_back(pick(kVerbs, rng));
    d.skeleton.preps.push_back(pick(kPreps, rng));
  }
  d.skeleton.question = pick(kQuestions, rng);
  return d;
}

ProblemInstance make_instance(const Draft& d, const SyntheticConfig& cfg, const ConstantsConfig& constants,
                              std::mt19937_64& rng) {
  std::uniform_int_distribution<int> num(cfg.weak ? 2 : 1, cfg.weak ? 5 * cfg.max_number : cfg.max_number);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> values;
    for (int i = 0; i < d.tmpl.number_count; ++i) values.push_back(num(rng));
    const EvalResult r = try_evaluate(d.tmpl.equation, values, constants);
    if (!r.ok() || std::fabs(r.value) > 1e5) continue;
    ProblemInstance p;
    p.answer = r.value;
    p.gold = serialize_equation(d.tmpl.equation, constants);
    const std::string& name = pick(kNames, rng);
    const std::string& item = pick(kItems, rng);
    for (int i = 0; i < d.tmpl.number_count; ++i) {
      const auto s = static_cast<std::size_t>(i);
      p.text.push_back(i == 0 ? name : "then");
      p.text.push_back(d.skeleton.verbs[s]);
      p.numbers.push_back({values[s], static_cast<int>(p.text.size())});
      std::ostringstream v;
      v << values[s];
      p.text.push_back(v.str());
      p.text.push_back(item);
      for (const std::string& w : tokenize(d.skeleton.preps[s])) p.text.push_back(w);
      p.text.push_back(".");
    }
    for (const std::string& w : tokenize(d.skeleton.question)) p.text.push_back(w);
    return p;
  }
  throw std::runtime_error("synthetic: could not sample valid numbers for template " + d.tmpl.key);
}

}  // namespace

void SyntheticConfig::validate() const {
  if (templates < 1) throw std::invalid_argument("templates must be >= 1");
  if (min_ops < 1 || max_ops < min_ops) throw std::invalid_argument("need 1 <= min_ops <= max_ops");
  if (max_ops > 6) throw std::invalid_argument("max_ops must be <= 6");
  if (per_template < 0 || train < 0 || dev < 0 || test < 0) throw std::invalid_argument("negative size");
  if (unseen_fraction < 0.0 || unseen_fraction >= 1.0) throw std::invalid_argument("unseen_fraction in [0, 1)");
  if (max_number < 2) throw std::invalid_argument("max_number must be >= 2");
  if (weak && !operators.contains(Operator::kAdd) && !operators.contains(Operator::kSub))
    throw std::invalid_argument("weak mode needs add or sub");
}

ConstantsConfig default_constants() { return ConstantsConfig({{"one", 1.0}, {"hundred", 100.0}}); }

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, const ConstantsConfig& constants) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<Draft> drafts;
  std::set<std::string> keys, signatures;
  for (int attempt = 0; static_cast<int>(drafts.size()) < cfg.templates; ++attempt) {
    if (attempt > 100000) throw std::runtime_error("synthetic: cannot find enough distinct templates");
    Draft d = make_template(cfg, constants, rng);
    if (keys.count(d.tmpl.key) || signatures.count(d.skeleton.signature())) continue;
    keys.insert(d.tmpl.key);
    signatures.insert(d.skeleton.signature());
    drafts.push_back(std::move(d));
  }

  const int held = static_cast<int>(std::lround(cfg.unseen_fraction * cfg.templates));
  const int seen_count = cfg.templates - held;
  if (seen_count < 1) throw std::invalid_argument("unseen_fraction leaves no seen templates");
  for (int i = seen_count; i < cfg.templates; ++i) drafts[static_cast<std::size_t>(i)].tmpl.held_out = true;

  int n_train = cfg.train, n_dev = cfg.dev, n_test = cfg.test;
  if (cfg.per_template > 0) {
    const int total = cfg.per_template * cfg.templates;
    n_dev = total / 10;
    n_test = total / 10;
    n_train = total - n_dev - n_test;
  }

  auto fill = [&](const std::string& split, int count, int first, int span) {
    std::vector<ProblemInstance> out;
    for (int i = 0; i < count; ++i) {
      ProblemInstance p = make_instance(drafts[static_cast<std::size_t>(first + i % span)], cfg, constants, rng);
      p.split = split;
      out.push_back(std::move(p));
    }
    return out;
  };

  SyntheticDataset ds;
  ds.train = fill("train", n_train, 0, seen_count);
  ds.dev = fill("dev", n_dev, 0, seen_count);
  const int unseen_test = held > 0 ? static_cast<int>(std::lround(cfg.unseen_fraction * n_test)) : 0;
  ds.test = fill("test", n_test - unseen_test, 0, seen_count);
  if (unseen_test > 0) {
    auto extra = fill("test", unseen_test, seen_count, held);
    ds.test.insert(ds.test.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
  }
  for (auto* part : {&ds.train, &ds.dev, &ds.test}) {
    std::shuffle(part->begin(), part->end(), rng);
    for (std::size_t i = 0; i < part->size(); ++i) (*part)[i].id = (*part)[i].split + "-" + std::to_string(i);
  }
  for (const Draft& d : drafts) ds.templates.push_back(d.tmpl);
  return ds;
}

void write_synthetic(const SyntheticDataset& ds, const SyntheticConfig& cfg, const ConstantsConfig& constants,
                     const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto strip = [&](std::vector<ProblemInstance> v) {
    if (cfg.weak)
      for (auto& p : v) p.gold.reset();
    return v;
  };
  save_dataset(dir + "/train.jsonl", strip(ds.train));
  save_dataset(dir + "/dev.jsonl", strip(ds.dev));
  save_dataset(dir + "/test.jsonl", ds.test);
  std::ofstream c(dir + "/constants.txt");
  if (!c) throw std::runtime_error("cannot write " + dir + "/constants.txt");
  c << constants.to_text();
}

}  // namespace cantor
