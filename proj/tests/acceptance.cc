// Runs every acceptance criterion and prints one PASS/FAIL line each.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cantor/kernels.h"
#include "cantor/metrics.h"
#include "cantor/synthetic.h"
#include "cantor/trainer.h"
#include "cantor/verify.h"

using namespace cantor;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget = 0.0;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

Outcome from_check(const verify::CheckResult& r) {
  Outcome o;
  o.passed = r.passed && r.within_budget();
  o.detail = r.detail;
  if (!r.within_budget()) o.detail += "; over time budget";
  o.seconds = r.seconds;
  o.budget = r.budget_seconds;
  return o;
}

struct Evaluated {
  MetricsReport report;
  double seen_accuracy = 0.0;
  std::size_t seen_count = 0;
};

Evaluated evaluate_model(const Model& m, const SyntheticDataset& ds, const ConstantsConfig& c,
                         const OperatorSet& ops) {
  const std::set<std::string> keys = template_keys(ds.train, ops, c);
  MetricsOptions mo;
  mo.ks = {1, 5};
  mo.train_keys = &keys;
  Evaluated e;
  e.report = evaluate_predictions(predict_all(m, ds.test, 5), ds.test, ops, c, mo);
  for (const auto& row : e.report.by_novelty)
    if (row.key == "seen") {
      e.seen_accuracy = row.value_accuracy();
      e.seen_count = row.count;
    }
  return e;
}

ModelConfig model_config(int L) {
  ModelConfig mc;
  mc.d = 64;
  mc.heads = 4;
  mc.encoder_blocks = 2;
  mc.decoder_blocks = 2;
  mc.L = L;
  return mc;
}

bool val_monotone(const MetricsReport& r) { return r.val_at(1) >= r.val_at(0); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// 20 templates, 2000 train / 500 test, at most 3 operations, L = 12.
Outcome end_to_end() {
  Outcome o;
  const double cpu0 = cpu_seconds();
  SyntheticConfig sc;
  sc.templates = 20;
  sc.train = 2000;
  sc.dev = 200;
  sc.test = 500;
  sc.max_ops = 3;
  const ConstantsConfig c = default_constants();
  const SyntheticDataset ds = generate_synthetic(sc, c);
  const int threads = kernels::max_threads();

  TrainerOptions to;
  to.training.mode = TrainingMode::kHardEmAnnealed;
  to.training.tau = 500;
  to.training.beam = 10;
  to.training.L = 12;
  to.training.max_steps = 1000;
  to.training.eval_every = 250;
  to.training.log_every = 0;
  to.dev_limit = 200;
  // CPU budget is 600 s; keep 60 s for evaluation.
  to.time_limit_seconds = 540.0 / threads;
  const Model init = build_model(ds.train, sc.operators, c, model_config(12), 1);
  const TrainResult annealed = train(ds.train, ds.dev, init, to);
  const Evaluated ea = evaluate_model(annealed.best, ds, c, sc.operators);
  const double annealed_cpu = cpu_seconds() - cpu0;

  TrainerOptions tn = to;
  tn.training.mode = TrainingMode::kNaive;
  const TrainResult naive = train(ds.train, ds.dev, init, tn);
  const Evaluated en = evaluate_model(naive.best, ds, c, sc.operators);

  const bool ok_annealed = ea.seen_accuracy >= 0.9 && annealed_cpu <= 600.0;
  const bool ok_naive = en.seen_accuracy >= 0.8;
  const bool ok_val = val_monotone(ea.report) && val_monotone(en.report);
  o.passed = ok_annealed && ok_naive && ok_val;
  std::ostringstream d;
  d << "annealed seen-template value acc " << fmt(ea.seen_accuracy) << " on " << ea.seen_count << " ("
    << annealed.steps_run << " steps, " << fmt(annealed_cpu) << " cpu-s, overall " << fmt(ea.report.value_accuracy())
    << ", Val@1 " << fmt(ea.report.val_at(0)) << " Val@5 " << fmt(ea.report.val_at(1)) << "); naive seen "
    << fmt(en.seen_accuracy) << " (" << naive.steps_run << " steps, Val@1 " << fmt(en.report.val_at(0)) << " Val@5 "
    << fmt(en.report.val_at(1)) << ")";
  o.detail = d.str();
  o.budget = 600.0;
  return o;
}

// Answer-only training through weak candidates.
Outcome weak_supervision() {
  Outcome o;
  const verify::CheckResult enumeration = verify::check_weak_enumeration();

  SyntheticConfig sc;
  sc.weak = true;
  sc.templates = 10;
  sc.train = 1000;
  sc.dev = 100;
  sc.test = 300;
  sc.unseen_fraction = 0.0;
  sc.seed = 11;
  const ConstantsConfig c = default_constants();
  const SyntheticDataset ds = generate_synthetic(sc, c);

  // Every instance must have a candidate equivalent to its hidden gold.
  std::size_t covered = 0, total = 0;
  for (const auto* split : {&ds.train, &ds.dev, &ds.test})
    for (const auto& p : *split) {
      ++total;
      const Equation gold = parse_equation(*p.gold, sc.operators, c);
      const std::vector<double> nums = p.number_values();
      const int n = static_cast<int>(nums.size());
      for (const Equation& cand : weak_candidates(nums, c, p.answer))
        if (check_equivalence(cand, gold, n, c)) {
          ++covered;
          break;
        }
    }

  std::vector<ProblemInstance> answer_only = ds.train;
  for (auto& p : answer_only) p.gold.reset();
  std::vector<ProblemInstance> dev = ds.dev;
  for (auto& p : dev) p.gold.reset();
  TrainerOptions to;
  to.training.mode = TrainingMode::kMml;
  to.training.weak = true;
  to.training.L = 12;
  to.training.max_steps = 600;
  to.training.eval_every = 200;
  to.training.log_every = 0;
  to.time_limit_seconds = 540.0 / kernels::max_threads();
  const Model init = build_model(answer_only, sc.operators, c, model_config(12), 2);
  const TrainResult r = train(answer_only, dev, init, to);
  const Evaluated e = evaluate_model(r.best, ds, c, sc.operators);

  o.passed = enumeration.passed && covered == total && e.report.value_accuracy() >= 0.9 && val_monotone(e.report);
  std::ostringstream d;
  d << "gold-consistent candidate for " << covered << "/" << total << "; weak MML test value acc "
    << fmt(e.report.value_accuracy()) << " (" << r.steps_run << " steps, Val@1 " << fmt(e.report.val_at(0))
    << " Val@5 " << fmt(e.report.val_at(1)) << "); enumeration: " << enumeration.detail;
  o.detail = d.str();
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gamma count and enumeration", [] { return from_check(verify::check_gamma()); }},
      {"hard EM equals exact argmax", [] { return from_check(verify::check_hardem_optimality()); }},
      {"MML exact on chains, bound on trees", [] { return from_check(verify::check_mml()); }},
      {"k-best assignment equals exhaustive", [] { return from_check(verify::check_kbest()); }},
      {"analytic gradients match finite differences", [] { return from_check(verify::check_gradients()); }},
      {"random models decode to valid graphs", [] { return from_check(verify::check_decoding_validity()); }},
      {"equivalence library", [] { return from_check(verify::check_equivalence_library()); }},
      {"end-to-end synthetic training", end_to_end},
      {"weak supervision", weak_supervision},
      {"hard EM loss non-increasing in beam", [] { return from_check(verify::check_beam_monotonicity()); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << " ("
              << fmt(wall) << " s): " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
