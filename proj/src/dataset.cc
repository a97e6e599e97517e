#include "cantor/dataset.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace cantor {

using nlohmann::json;

namespace {

ProblemInstance instance_from_json(const json& j) {
  ProblemInstance p;
  p.id = j.at("id").get<std::string>();
  const json& text = j.at("text");
  if (text.is_string())
    p.text = tokenize(text.get<std::string>());
  else
    p.text = text.get<std::vector<std::string>>();
  for (const json& n : j.at("numbers")) {
    NumberMention m;
    if (n.is_array()) {
      m.value = n.at(0).get<double>();
      m.token = n.at(1).get<int>();
    } else {
      m.value = n.at("value").get<double>();
      m.token = n.at("token").get<int>();
    }
    p.numbers.push_back(m);
  }
  p.answer = j.at("answer").get<double>();
  if (j.contains("gold") && !j.at("gold").is_null()) p.gold = j.at("gold").get<std::string>();
  if (j.contains("split")) p.split = j.at("split").get<std::string>();
  return p;
}

json instance_to_json(const ProblemInstance& p) {
  json nums = json::array();
  for (const auto& n : p.numbers) nums.push_back({{"value", n.value}, {"token", n.token}});
  json j = {{"id", p.id}, {"text", p.text}, {"numbers", nums}, {"answer", p.answer}};
  j["gold"] = p.gold ? json(*p.gold) : json(nullptr);
  j["split"] = p.split;
  return j;
}

json optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::optional<double> number_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

template <class T, class Fn>
std::vector<T> read_lines(std::istream& in, const std::string& source, Fn&& parse) {
  std::vector<T> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw DatasetError(source + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<double> ProblemInstance::number_values() const {
  std::vector<double> v;
  for (const auto& n : numbers) v.push_back(n.value);
  return v;
}

std::vector<int> ProblemInstance::number_positions() const {
  std::vector<int> v;
  for (const auto& n : numbers) v.push_back(n.token);
  return v;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<ProblemInstance> read_dataset(std::istream& in, const std::string& source) {
  return read_lines<ProblemInstance>(in, source, instance_from_json);
}

std::vector<ProblemInstance> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path);
  return read_dataset(in, path);
}

void write_dataset(std::ostream& out, const std::vector<ProblemInstance>& data) {
  for (const auto& p : data) out << instance_to_json(p).dump() << '\n';
}

void save_dataset(const std::string& path, const std::vector<ProblemInstance>& data) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot open " + path + " for writing");
  write_dataset(out, data);
}

bool answers_match(double predicted, double gold) {
  if (!std::isfinite(predicted) || !std::isfinite(gold)) return false;
  return std::fabs(predicted - gold) <= 1e-6 * std::max(1.0, std::fabs(gold));
}

void validate_instance(const ProblemInstance& inst, const OperatorSet& operators,
                       const ConstantsConfig& constants) {
  if (inst.text.empty()) throw DatasetError(inst.id + ": empty text");
  for (const auto& n : inst.numbers)
    if (n.token < 0 || n.token >= static_cast<int>(inst.text.size()))
      throw DatasetError(inst.id + ": number token index " + std::to_string(n.token) + " out of range");
  if (!inst.gold) return;
  Equation eq;
  try {
    eq = parse_equation(*inst.gold, operators, constants);
    validate_equation(eq, static_cast<int>(inst.numbers.size()), constants, &operators);
  } catch (const EquationError& e) {
    throw DatasetError(inst.id + ": gold equation: " + e.what());
  }
  const EvalResult r = try_evaluate(eq, inst.number_values(), constants);
  if (!r.ok() || !answers_match(r.value, inst.answer))
    throw DatasetError(inst.id + ": gold equation does not evaluate to the answer");
}

EncodedProblem encode_instance(const ProblemInstance& inst, const Vocabulary& vocab) {
  EncodedProblem e;
  e.number_positions = inst.number_positions();
  e.token_ids = vocab.encode(inst.text, e.number_positions);
  return e;
}

std::vector<Prediction> read_predictions(std::istream& in, const std::string& source) {
  return read_lines<Prediction>(in, source, [](const json& j) {
    Prediction p;
    p.id = j.at("id").get<std::string>();
    p.equation = j.at("equation").get<std::string>();
    p.answer = number_from(j.at("answer"));
    p.root = j.at("root").get<int>();
    if (j.contains("alternates"))
      for (const json& a : j.at("alternates"))
        p.alternates.push_back({a.at("equation").get<std::string>(), number_from(a.at("answer")),
                                a.at("pr").get<double>()});
    return p;
  });
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open predictions " + path);
  return read_predictions(in, path);
}

void write_predictions(std::ostream& out, const std::vector<Prediction>& preds) {
  for (const auto& p : preds) {
    json alts = json::array();
    for (const auto& a : p.alternates)
      alts.push_back({{"equation", a.equation}, {"answer", optional_number(a.answer)}, {"pr", a.pr}});
    json j = {{"id", p.id}, {"equation", p.equation}, {"answer", optional_number(p.answer)},
              {"root", p.root}, {"alternates", alts}};
    out << j.dump() << '\n';
  }
}

void save_predictions(const std::string& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot open " + path + " for writing");
  write_predictions(out, preds);
}

}  // namespace cantor
