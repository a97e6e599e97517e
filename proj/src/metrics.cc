#include "cantor/metrics.h"

#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace cantor {

std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::set<std::string> template_keys(const std::vector<ProblemInstance>& data, const OperatorSet& operators,
                                    const ConstantsConfig& constants) {
  std::set<std::string> keys;
  for (const auto& p : data)
    if (p.gold) keys.insert(template_key(parse_equation(*p.gold, operators, constants), constants));
  return keys;
}

MetricsReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                   const std::vector<ProblemInstance>& gold, const OperatorSet& operators,
                                   const ConstantsConfig& constants, const MetricsOptions& options) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions)
    if (!by_id.emplace(p.id, &p).second) throw MetricsError("duplicate prediction id " + p.id);
  if (by_id.size() != gold.size())
    throw MetricsError("prediction count " + std::to_string(by_id.size()) + " does not match gold count " +
                       std::to_string(gold.size()));

  MetricsReport r;
  r.ks = options.ks;
  r.seed = options.seed;
  r.val_at_k_correct.assign(r.ks.size(), 0);
  std::map<int, BreakdownRow> ops_rows;
  std::map<std::string, BreakdownRow> novelty_rows;

  for (const auto& g : gold) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw MetricsError("no prediction for id " + g.id);
    const Prediction& p = *it->second;
    ++r.total;
    const bool value_ok = p.answer && answers_match(*p.answer, g.answer);
    r.value_correct += value_ok;

    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      bool hit = false;
      if (p.alternates.empty()) {
        hit = value_ok;
      } else {
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(r.ks[i]), p.alternates.size());
        for (std::size_t a = 0; a < k && !hit; ++a)
          hit = p.alternates[a].answer && answers_match(*p.alternates[a].answer, g.answer);
      }
      r.val_at_k_correct[i] += hit;
    }

    if (!g.gold) continue;
    const Equation gold_eq = parse_equation(*g.gold, operators, constants);
    bool eq_ok = false;
    try {
      const Equation pred_eq = parse_equation(p.equation, operators, constants);
      eq_ok = check_equivalence(pred_eq, gold_eq, static_cast<int>(g.numbers.size()), constants,
                                kDefaultEquivalenceTrials, options.seed + stable_hash(g.id));
    } catch (const EquationError&) {
      eq_ok = false;
    } catch (const ResampleExhausted&) {
      eq_ok = false;
    }
    ++r.equation_total;
    r.equation_correct += eq_ok;

    BreakdownRow& orow = ops_rows[static_cast<int>(gold_eq.ops.size())];
    orow.key = std::to_string(gold_eq.ops.size());
    ++orow.count;
    orow.value_correct += value_ok;
    orow.equation_correct += eq_ok;
    if (options.train_keys) {
      const std::string key = options.train_keys->count(template_key(gold_eq, constants)) ? "seen" : "unseen";
      BreakdownRow& nrow = novelty_rows[key];
      nrow.key = key;
      ++nrow.count;
      nrow.value_correct += value_ok;
      nrow.equation_correct += eq_ok;
    }
  }
  for (auto& [k, row] : ops_rows) r.by_ops.push_back(row);
  for (auto& [k, row] : novelty_rows) r.by_novelty.push_back(row);
  return r;
}

std::string MetricsReport::table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "instances          " << total << "\n";
  out << "value accuracy     " << value_accuracy() << "\n";
  out << "equation accuracy  " << equation_accuracy() << "  (" << equation_total << " with gold)\n";
  for (std::size_t i = 0; i < ks.size(); ++i) out << "Val.@" << std::left << std::setw(13) << ks[i] << val_at(i) << "\n";
  auto rows = [&](const char* title, const std::vector<BreakdownRow>& v) {
    if (v.empty()) return;
    out << title << "\n";
    out << "  " << std::left << std::setw(10) << "key" << std::setw(8) << "count" << std::setw(10) << "value"
        << "equation\n";
    for (const auto& row : v)
      out << "  " << std::setw(10) << row.key << std::setw(8) << row.count << std::setw(10) << row.value_accuracy()
          << row.equation_accuracy() << "\n";
  };
  rows("by operation count", by_ops);
  rows("by template novelty", by_novelty);
  out << "equivalence seed   " << seed << "\n";
  return out.str();
}

std::string MetricsReport::json() const {
  nlohmann::json j;
  j["total"] = total;
  j["value_accuracy"] = value_accuracy();
  j["equation_accuracy"] = equation_accuracy();
  j["equation_total"] = equation_total;
  nlohmann::json vk = nlohmann::json::object();
  for (std::size_t i = 0; i < ks.size(); ++i) vk[std::to_string(ks[i])] = val_at(i);
  j["val_at_k"] = vk;
  auto rows = [](const std::vector<BreakdownRow>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& row : v)
      a.push_back({{"key", row.key},
                   {"count", row.count},
                   {"value_accuracy", row.value_accuracy()},
                   {"equation_accuracy", row.equation_accuracy()}});
    return a;
  };
  j["by_operation_count"] = rows(by_ops);
  j["by_novelty"] = rows(by_novelty);
  j["seed"] = seed;
  return j.dump();
}

}  // namespace cantor
