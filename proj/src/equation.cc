#include "cantor/equation.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

namespace cantor {

namespace {

constexpr double kDivisorEpsilon = 1e-12;

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  // std::from_chars for double is available in libstdc++ 11.
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_const_prefix(std::string_view name) {
  constexpr std::string_view kPrefix = "const_";
  if (name.substr(0, kPrefix.size()) == kPrefix) name.remove_prefix(kPrefix.size());
  return name;
}

}  // namespace

std::string_view operator_symbol(Operator op) {
  switch (op) {
    case Operator::kAdd: return "+";
    case Operator::kSub: return "-";
    case Operator::kMul: return "*";
    case Operator::kDiv: return "/";
    case Operator::kPow: return "**";
  }
  return "?";
}

std::string_view operator_name(Operator op) {
  switch (op) {
    case Operator::kAdd: return "add";
    case Operator::kSub: return "sub";
    case Operator::kMul: return "mul";
    case Operator::kDiv: return "div";
    case Operator::kPow: return "pow";
  }
  return "?";
}

std::optional<Operator> operator_from_token(std::string_view t) {
  if (t == "+" || t == "add") return Operator::kAdd;
  if (t == "-" || t == "sub") return Operator::kSub;
  if (t == "*" || t == "mul") return Operator::kMul;
  if (t == "/" || t == "div") return Operator::kDiv;
  if (t == "**" || t == "^" || t == "pow") return Operator::kPow;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// OperatorSet

OperatorSet::OperatorSet(std::vector<Operator> ops) : ops_(std::move(ops)) {
  if (ops_.empty()) throw EquationError("operator set is empty");
  for (std::size_t i = 0; i < ops_.size(); ++i)
    for (std::size_t j = i + 1; j < ops_.size(); ++j)
      if (ops_[i] == ops_[j]) throw EquationError("duplicate operator in operator set");
}

OperatorSet OperatorSet::arithmetic() {
  return OperatorSet({Operator::kAdd, Operator::kSub, Operator::kMul, Operator::kDiv});
}

OperatorSet OperatorSet::all() {
  return OperatorSet({Operator::kAdd, Operator::kSub, Operator::kMul, Operator::kDiv, Operator::kPow});
}

OperatorSet OperatorSet::parse(std::string_view list) {
  std::vector<Operator> ops;
  while (!list.empty()) {
    auto comma = list.find(',');
    auto tok = trim(list.substr(0, comma));
    if (!tok.empty()) {
      auto op = operator_from_token(tok);
      if (!op) throw EquationError("unknown operator '" + std::string(tok) + "'");
      ops.push_back(*op);
    }
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return OperatorSet(std::move(ops));
}

bool OperatorSet::contains(Operator op) const {
  return std::find(ops_.begin(), ops_.end(), op) != ops_.end();
}

std::size_t OperatorSet::index_of(Operator op) const {
  auto it = std::find(ops_.begin(), ops_.end(), op);
  if (it == ops_.end())
    throw EquationError("operator '" + std::string(operator_symbol(op)) + "' not in operator set");
  return static_cast<std::size_t>(it - ops_.begin());
}

std::string OperatorSet::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    if (i) out += ',';
    out += operator_name(ops_[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ConstantsConfig

ConstantsConfig::ConstantsConfig(std::vector<Constant> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].name.empty()) throw EquationError("constant with empty name");
    if (!std::isfinite(values_[i].value))
      throw EquationError("constant '" + values_[i].name + "' is not finite");
    for (std::size_t j = 0; j < i; ++j)
      if (values_[j].name == values_[i].name)
        throw EquationError("duplicate constant name '" + values_[i].name + "'");
  }
}

ConstantsConfig ConstantsConfig::parse(std::string_view text) {
  std::vector<Constant> values;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string name, value, extra;
    if (!(fields >> name)) continue;
    double v = 0.0;
    if (!(fields >> value) || !parse_double(value, v) || (fields >> extra))
      throw EquationError("constants line " + std::to_string(lineno) + ": expected `name value`");
    values.push_back({std::string(strip_const_prefix(name)), v});
  }
  return ConstantsConfig(std::move(values));
}

ConstantsConfig ConstantsConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EquationError("cannot open constants file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ConstantsConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& c : values_) out << c.name << ' ' << c.value << '\n';
  return out.str();
}

std::optional<int> ConstantsConfig::find(std::string_view name) const {
  name = strip_const_prefix(name);
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (values_[i].name == name) return static_cast<int>(i) + 1;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class InfixParser {
 public:
  InfixParser(std::string_view text, const OperatorSet& operators, const ConstantsConfig& constants)
      : operators_(operators), constants_(constants) {
    tokenize(text);
  }

  Equation run() {
    if (tokens_.empty()) throw EquationError("empty equation");
    OperandRef root = parse_sum();
    if (pos_ != tokens_.size())
      throw EquationError("arity error: unexpected token '" + tokens_[pos_] + "'");
    if (eq_.ops.empty() || !(root.is_op() && root.index == static_cast<int>(eq_.ops.size())))
      throw EquationError("arity error: equation has no operation");
    return std::move(eq_);
  }

 private:
  void tokenize(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
      char c = s[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '(' || c == ')' || c == '+' || c == '-' || c == '/' || c == '^') {
        tokens_.emplace_back(1, c);
        ++i;
      } else if (c == '*') {
        if (i + 1 < s.size() && s[i + 1] == '*') {
          tokens_.emplace_back("**");
          i += 2;
        } else {
          tokens_.emplace_back("*");
          ++i;
        }
      } else {
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) &&
               std::string_view("()+-*/^").find(s[j]) == std::string_view::npos)
          ++j;
        tokens_.emplace_back(s.substr(i, j - i));
        i = j;
      }
    }
  }

  bool at_end() const { return pos_ >= tokens_.size(); }
  const std::string& peek() const { return tokens_[pos_]; }

  OperandRef emit(Operator op, OperandRef a, OperandRef b) {
    if (!operators_.contains(op))
      throw EquationError("operator '" + std::string(operator_symbol(op)) + "' not in operator set");
    eq_.ops.push_back({op, a, b});
    return OperandRef::operation(static_cast<int>(eq_.ops.size()));
  }

  OperandRef parse_sum() {
    OperandRef left = parse_product();
    while (!at_end() && (peek() == "+" || peek() == "-")) {
      Operator op = peek() == "+" ? Operator::kAdd : Operator::kSub;
      ++pos_;
      OperandRef right = parse_product();
      left = emit(op, left, right);
    }
    return left;
  }

  OperandRef parse_product() {
    OperandRef left = parse_power();
    while (!at_end() && (peek() == "*" || peek() == "/")) {
      Operator op = peek() == "*" ? Operator::kMul : Operator::kDiv;
      ++pos_;
      OperandRef right = parse_power();
      left = emit(op, left, right);
    }
    return left;
  }

  OperandRef parse_power() {
    OperandRef base = parse_atom();
    if (!at_end() && (peek() == "**" || peek() == "^")) {
      ++pos_;
      OperandRef exponent = parse_power();
      return emit(Operator::kPow, base, exponent);
    }
    return base;
  }

  OperandRef parse_atom() {
    if (at_end()) throw EquationError("arity error: operand expected at end of input");
    const std::string tok = peek();
    ++pos_;
    if (tok == "(") {
      OperandRef inner = parse_sum();
      if (at_end() || peek() != ")") throw EquationError("missing ')'");
      ++pos_;
      return inner;
    }
    if (tok == ")" || operator_from_token(tok))
      throw EquationError("arity error: operand expected before '" + tok + "'");
    return parse_leaf(tok, constants_);
  }

 public:
  static OperandRef parse_leaf(std::string_view tok, const ConstantsConfig& constants) {
    if (tok.substr(0, 4) == "num@") {
      int idx = 0;
      if (!parse_int(tok.substr(4), idx) || idx < 1)
        throw EquationError("bad number token '" + std::string(tok) + "'");
      return OperandRef::number(idx);
    }
    if (tok.substr(0, 6) == "const_") {
      auto idx = constants.find(tok);
      if (!idx) throw EquationError("unknown constant '" + std::string(tok) + "'");
      return OperandRef::constant(*idx);
    }
    throw EquationError("unknown token '" + std::string(tok) + "'");
  }

 private:
  const OperatorSet& operators_;
  const ConstantsConfig& constants_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
  Equation eq_;
};

Equation parse_op_list(std::string_view text, const OperatorSet& operators,
                       const ConstantsConfig& constants) {
  Equation eq;
  std::istringstream in{std::string(text)};
  std::string line;
  const char delim = text.find('\n') == std::string_view::npos ? ';' : '\n';
  while (std::getline(in, line, delim)) {
    auto body = trim(line);
    if (body.empty()) continue;
    auto colon = body.find(':');
    if (colon == std::string_view::npos) throw EquationError("op-list line without ':'");
    int idx = 0;
    if (!parse_int(trim(body.substr(0, colon)), idx) || idx != static_cast<int>(eq.ops.size()) + 1)
      throw EquationError("op-list indices must be consecutive from 1");
    std::istringstream fields{std::string(body.substr(colon + 1))};
    std::string op_tok, a_tok, b_tok, extra;
    if (!(fields >> op_tok >> a_tok >> b_tok) || (fields >> extra))
      throw EquationError("arity error in op-list line " + std::to_string(idx));
    auto op = operator_from_token(op_tok);
    if (!op) throw EquationError("unknown operator '" + op_tok + "'");
    if (!operators.contains(*op))
      throw EquationError("operator '" + op_tok + "' not in operator set");
    auto arg = [&](const std::string& t) {
      if (!t.empty() && t[0] == '#') {
        int k = 0;
        if (!parse_int(std::string_view(t).substr(1), k) || k < 1 || k >= idx)
          throw EquationError("bad operation reference '" + t + "'");
        return OperandRef::operation(k);
      }
      return InfixParser::parse_leaf(t, constants);
    };
    eq.ops.push_back({*op, arg(a_tok), arg(b_tok)});
  }
  if (eq.ops.empty()) throw EquationError("empty equation");
  return eq;
}

}  // namespace

Equation parse_equation(std::string_view text, const OperatorSet& operators,
                        const ConstantsConfig& constants) {
  if (text.find(':') != std::string_view::npos) return parse_op_list(text, operators, constants);
  return InfixParser(text, operators, constants).run();
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void append_operand(const Equation& eq, const OperandRef& ref, const ConstantsConfig& constants,
                    std::string& out);

void append_operation(const Equation& eq, int index, const ConstantsConfig& constants,
                      std::string& out) {
  const Operation& o = eq.ops[index - 1];
  out += "( ";
  append_operand(eq, o.a, constants, out);
  out += ' ';
  out += operator_symbol(o.op);
  out += ' ';
  append_operand(eq, o.b, constants, out);
  out += " )";
}

void append_operand(const Equation& eq, const OperandRef& ref, const ConstantsConfig& constants,
                    std::string& out) {
  switch (ref.kind) {
    case OperandKind::kNum:
      out += "num@" + std::to_string(ref.index);
      break;
    case OperandKind::kConst:
      if (ref.index >= 1 && ref.index <= static_cast<int>(constants.size()))
        out += "const_" + constants.at(ref.index).name;
      else
        out += "const_#" + std::to_string(ref.index);
      break;
    case OperandKind::kOp:
      append_operation(eq, ref.index, constants, out);
      break;
  }
}

}  // namespace

std::string serialize_equation(const Equation& eq, const ConstantsConfig& constants) {
  if (eq.empty()) return {};
  std::string out;
  append_operation(eq, static_cast<int>(eq.size()), constants, out);
  return out;
}

std::string template_key(const Equation& eq, const ConstantsConfig& constants) {
  return serialize_equation(eq, constants);
}

bool structurally_equal(const Equation& a, const Equation& b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty();
  std::function<bool(const OperandRef&, const OperandRef&)> same = [&](const OperandRef& x,
                                                                      const OperandRef& y) {
    if (x.kind != y.kind) return false;
    if (!x.is_op()) return x.index == y.index;
    const Operation& ox = a.ops[x.index - 1];
    const Operation& oy = b.ops[y.index - 1];
    return ox.op == oy.op && same(ox.a, oy.a) && same(ox.b, oy.b);
  };
  return same(OperandRef::operation(static_cast<int>(a.size())),
              OperandRef::operation(static_cast<int>(b.size())));
}

void validate_equation(const Equation& eq, int num_count, const ConstantsConfig& constants,
                       const OperatorSet* operators) {
  if (eq.empty()) throw EquationError("empty equation");
  for (std::size_t i = 0; i < eq.size(); ++i) {
    const Operation& o = eq.ops[i];
    if (operators && !operators->contains(o.op))
      throw EquationError("operator '" + std::string(operator_symbol(o.op)) + "' not in operator set");
    for (const OperandRef* r : {&o.a, &o.b}) {
      const std::string where = " in operation " + std::to_string(i + 1);
      switch (r->kind) {
        case OperandKind::kConst:
          if (r->index < 1 || r->index > static_cast<int>(constants.size()))
            throw EquationError("constant index out of range" + where);
          break;
        case OperandKind::kNum:
          if (r->index < 1 || r->index > num_count)
            throw EquationError("number index out of range" + where);
          break;
        case OperandKind::kOp:
          if (r->index < 1 || r->index > static_cast<int>(i))
            throw EquationError("operation reference must point backwards" + where);
          break;
      }
    }
  }
}

std::vector<bool> reachable_operations(const Equation& eq) {
  std::vector<bool> reach(eq.size(), false);
  if (eq.empty()) return reach;
  reach.back() = true;
  for (std::size_t i = eq.size(); i-- > 0;) {
    if (!reach[i]) continue;
    for (const OperandRef* r : {&eq.ops[i].a, &eq.ops[i].b})
      if (r->is_op()) reach[r->index - 1] = true;
  }
  return reach;
}

bool fully_reachable(const Equation& eq) {
  auto r = reachable_operations(eq);
  return std::all_of(r.begin(), r.end(), [](bool b) { return b; });
}

int count_branches(const Equation& eq) {
  int n = 0;
  for (const auto& o : eq.ops)
    if (o.a.is_op() && o.b.is_op()) ++n;
  return n;
}

int max_number_index(const Equation& eq) {
  int m = 0;
  for (const auto& o : eq.ops)
    for (const OperandRef* r : {&o.a, &o.b})
      if (r->kind == OperandKind::kNum) m = std::max(m, r->index);
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view eval_status_name(EvalStatus status) {
  switch (status) {
    case EvalStatus::kOk: return "ok";
    case EvalStatus::kDivByZero: return "DivByZero";
    case EvalStatus::kPowDomain: return "PowDomain";
    case EvalStatus::kOverflow: return "Overflow";
  }
  return "?";
}

EvaluationError::EvaluationError(EvalStatus status)
    : std::runtime_error("evaluation error: " + std::string(eval_status_name(status))),
      status_(status) {}

namespace {

double integer_power(double base, long long n) {
  bool negative = n < 0;
  unsigned long long e = negative ? static_cast<unsigned long long>(-n) : static_cast<unsigned long long>(n);
  double result = 1.0;
  while (e) {
    if (e & 1ULL) result *= base;
    base *= base;
    e >>= 1ULL;
  }
  return negative ? 1.0 / result : result;
}

}  // namespace

double apply_operator(Operator op, double a, double b, EvalStatus& status) {
  status = EvalStatus::kOk;
  double r = 0.0;
  switch (op) {
    case Operator::kAdd: r = a + b; break;
    case Operator::kSub: r = a - b; break;
    case Operator::kMul: r = a * b; break;
    case Operator::kDiv:
      if (std::fabs(b) < kDivisorEpsilon) {
        status = EvalStatus::kDivByZero;
        return 0.0;
      }
      r = a / b;
      break;
    case Operator::kPow:
      if (b == std::nearbyint(b) && std::fabs(b) <= 1e6) {
        if (b < 0 && std::fabs(a) < kDivisorEpsilon) {
          status = EvalStatus::kDivByZero;
          return 0.0;
        }
        r = integer_power(a, static_cast<long long>(b));
      } else {
        if (a < 0) {
          status = EvalStatus::kPowDomain;
          return 0.0;
        }
        r = std::pow(a, b);
      }
      break;
  }
  if (!std::isfinite(r)) {
    status = EvalStatus::kOverflow;
    return 0.0;
  }
  return r;
}

EvalResult try_evaluate(const Equation& eq, std::span<const double> numbers,
                        const ConstantsConfig& constants) {
  std::vector<double> values(eq.size());
  auto fetch = [&](const OperandRef& r) -> double {
    switch (r.kind) {
      case OperandKind::kConst: return constants.at(r.index).value;
      case OperandKind::kNum: return numbers[r.index - 1];
      case OperandKind::kOp: return values[r.index - 1];
    }
    return 0.0;
  };
  for (std::size_t i = 0; i < eq.size(); ++i) {
    const Operation& o = eq.ops[i];
    if ((o.a.kind == OperandKind::kNum && o.a.index > static_cast<int>(numbers.size())) ||
        (o.b.kind == OperandKind::kNum && o.b.index > static_cast<int>(numbers.size())))
      throw EquationError("equation references a missing number");
    EvalStatus status;
    values[i] = apply_operator(o.op, fetch(o.a), fetch(o.b), status);
    if (status != EvalStatus::kOk) {
      // Unreachable operations cannot affect the root.
      auto reach = reachable_operations(eq);
      if (reach[i]) return {status, 0.0};
      values[i] = 0.0;
    }
  }
  if (eq.empty()) throw EquationError("empty equation");
  return {EvalStatus::kOk, values.back()};
}

double evaluate(const Equation& eq, std::span<const double> numbers, const ConstantsConfig& constants) {
  EvalResult r = try_evaluate(eq, numbers, constants);
  if (!r.ok()) throw EvaluationError(r.status);
  return r.value;
}

bool values_match(double x, double y) {
  double diff = std::fabs(x - y);
  if (diff <= 1e-9) return true;
  return diff <= 1e-6 * std::max(std::fabs(x), std::fabs(y));
}

bool check_equivalence(const Equation& a, const Equation& b, int num_count,
                       const ConstantsConfig& constants, int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("check_equivalence: trials must be >= 1");
  if (max_number_index(a) > num_count || max_number_index(b) > num_count)
    throw EquationError("check_equivalence: equation references more numbers than num_count");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(1.5, 12.5);
  std::vector<double> sample(static_cast<std::size_t>(std::max(num_count, 0)));
  for (int t = 0; t < trials; ++t) {
    int failures = 0;
    while (true) {
      for (std::size_t i = 0; i < sample.size(); ++i) {
        bool clash = true;
        while (clash) {
          sample[i] = dist(rng);
          clash = false;
          for (std::size_t j = 0; j < i; ++j)
            if (std::fabs(sample[i] - sample[j]) < 1e-3) clash = true;
        }
      }
      EvalResult ra = try_evaluate(a, sample, constants);
      EvalResult rb = try_evaluate(b, sample, constants);
      if (ra.ok() != rb.ok()) return false;
      if (ra.ok()) {
        if (!values_match(ra.value, rb.value)) return false;
        break;
      }
      if (++failures >= 1000) throw ResampleExhausted();
    }
  }
  return true;
}

}  // namespace cantor
