#include "bisim/expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <set>

namespace bisim {

namespace {

bool is_unary(Op op) {
  switch (op) {
    case Op::Neg:
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Tanh:
    case Op::Sqrt:
    case Op::Abs:
      return true;
    default:
      return false;
  }
}

bool is_binary(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
      return true;
    default:
      return false;
  }
}

std::shared_ptr<const Node> make_node(Op op, std::vector<std::shared_ptr<const Node>> args) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->args = std::move(args);
  return node;
}

}  // namespace

std::string_view function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Tanh: return "tanh";
    case Op::Sqrt: return "sqrt";
    case Op::Abs: return "abs";
    case Op::Min: return "min";
    case Op::Max: return "max";
    default: return {};
  }
}

// ---------------------------------------------------------------------------
// Construction

Expr::Expr() : Expr(constant(0.0)) {}

Expr::Expr(std::shared_ptr<const Node> root)
    : root_(std::move(root)),
      tape_(std::make_shared<const detail::Tape>(detail::compile(*root_))) {}

std::size_t Expr::size() const { return tape_->code.size(); }

Expr constant(double value) {
  if (!std::isfinite(value)) {
    throw Error("expression constants must be finite");
  }
  auto node = std::make_shared<Node>();
  node->op = Op::Constant;
  node->value = value;
  return Expr(std::move(node));
}

Expr variable(std::string family, std::size_t index) {
  if (family.empty()) {
    throw Error("variable family name must not be empty");
  }
  auto node = std::make_shared<Node>();
  node->op = Op::Variable;
  node->var = VarRef{std::move(family), index};
  return Expr(std::move(node));
}

Expr unary(Op op, const Expr& arg) {
  if (!is_unary(op)) {
    throw Error("not a unary operator");
  }
  return Expr(make_node(op, {arg.root_ptr()}));
}

Expr binary(Op op, const Expr& lhs, const Expr& rhs) {
  if (!is_binary(op)) {
    throw Error("not a binary operator");
  }
  return Expr(make_node(op, {lhs.root_ptr(), rhs.root_ptr()}));
}

Expr nary(Op op, const std::vector<Expr>& args) {
  if (op != Op::Min && op != Op::Max) {
    throw Error("only min and max take a variable number of arguments");
  }
  if (args.size() < 2) {
    throw Error("min/max need at least two arguments");
  }
  std::vector<std::shared_ptr<const Node>> nodes;
  nodes.reserve(args.size());
  for (const auto& a : args) nodes.push_back(a.root_ptr());
  return Expr(make_node(op, std::move(nodes)));
}

Expr operator+(const Expr& a, const Expr& b) { return binary(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return binary(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return binary(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return binary(Op::Div, a, b); }
Expr operator-(const Expr& a) { return unary(Op::Neg, a); }

// ---------------------------------------------------------------------------
// Printing

namespace {

int precedence(const Node& n) {
  switch (n.op) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    case Op::Constant:
      return n.value < 0.0 || std::signbit(n.value) ? 0 : 5;
    default:
      return 5;
  }
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), end);
}

void print(const Node& n, std::string& out);

void print_wrapped(const Node& n, bool wrap, std::string& out) {
  if (wrap) out += '(';
  print(n, out);
  if (wrap) out += ')';
}

void print(const Node& n, std::string& out) {
  switch (n.op) {
    case Op::Constant:
      out += format_number(n.value);
      return;
    case Op::Variable:
      out += n.var.family;
      out += '[';
      out += std::to_string(n.var.index);
      out += ']';
      return;
    case Op::Neg:
      out += '-';
      print_wrapped(*n.args[0], precedence(*n.args[0]) < 3, out);
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(n);
      print_wrapped(*n.args[0], precedence(*n.args[0]) < p, out);
      out += n.op == Op::Add ? '+' : n.op == Op::Sub ? '-' : n.op == Op::Mul ? '*' : '/';
      print_wrapped(*n.args[1], precedence(*n.args[1]) <= p, out);
      return;
    }
    case Op::Pow:
      print_wrapped(*n.args[0], precedence(*n.args[0]) < 4, out);
      out += '^';
      print_wrapped(*n.args[1], precedence(*n.args[1]) < 5, out);
      return;
    default: {
      out += function_name(n.op);
      out += '(';
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ',';
        print(*n.args[i], out);
      }
      out += ')';
      return;
    }
  }
}

void collect(const Node& n, std::set<VarRef>& refs) {
  if (n.op == Op::Variable) refs.insert(n.var);
  for (const auto& a : n.args) collect(*a, refs);
}

std::shared_ptr<const Node> rename_node(
    const std::shared_ptr<const Node>& n,
    const std::function<VarRef(const VarRef&)>& map) {
  if (n->op == Op::Constant) return n;
  auto copy = std::make_shared<Node>();
  copy->op = n->op;
  if (n->op == Op::Variable) {
    copy->var = map(n->var);
    return copy;
  }
  copy->args.reserve(n->args.size());
  for (const auto& a : n->args) copy->args.push_back(rename_node(a, map));
  return copy;
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  print(e.root(), out);
  return out;
}

std::vector<VarRef> references(const Expr& e) {
  std::set<VarRef> refs;
  collect(e.root(), refs);
  return {refs.begin(), refs.end()};
}

void require_families(const Expr& e, std::span<const FamilySpec> families,
                      std::string_view context) {
  const std::string where = context.empty() ? std::string() : std::string(context) + ": ";
  for (const auto& ref : references(e)) {
    auto it = std::find_if(families.begin(), families.end(),
                           [&](const FamilySpec& f) { return f.name == ref.family; });
    if (it == families.end()) {
      throw Error(where + "reference to undeclared family \"" + ref.family + "\"");
    }
    if (ref.index >= it->length) {
      throw Error(where + "index " + ref.family + "[" + std::to_string(ref.index) +
                  "] out of range (length " + std::to_string(it->length) + ")");
    }
  }
}

Expr rename(const Expr& e, const std::function<VarRef(const VarRef&)>& map) {
  return Expr(rename_node(e.root_ptr(), map));
}

// ---------------------------------------------------------------------------
// Environment

VarEnv::VarEnv(
    std::initializer_list<std::pair<std::string, std::vector<double>>> families) {
  for (const auto& [name, values] : families) bind(name, values);
}

void VarEnv::bind(std::string_view name, std::span<const double> values) {
  for (auto& f : families_) {
    if (f.name == name) {
      if (f.values.size() != values.size()) {
        throw DimensionError("family \"" + f.name + "\" rebound with length " +
                             std::to_string(values.size()) + ", declared " +
                             std::to_string(f.values.size()));
      }
      std::copy(values.begin(), values.end(), f.values.begin());
      return;
    }
  }
  families_.push_back({std::string(name), {values.begin(), values.end()}});
}

std::span<double> VarEnv::values(std::string_view name) {
  for (auto& f : families_) {
    if (f.name == name) return f.values;
  }
  throw EvalError(EvalError::Kind::MissingBinding,
                  "no binding for family \"" + std::string(name) + "\"");
}

std::optional<std::span<const double>> VarEnv::find(std::string_view name) const {
  for (const auto& f : families_) {
    if (f.name == name) return std::span<const double>(f.values);
  }
  return std::nullopt;
}

double VarEnv::at(std::string_view name, std::size_t index) const {
  auto values = find(name);
  if (!values) {
    throw EvalError(EvalError::Kind::MissingBinding,
                    "no binding for family \"" + std::string(name) + "\"");
  }
  if (index >= values->size()) {
    throw EvalError(EvalError::Kind::MissingBinding,
                    "no binding for " + std::string(name) + "[" + std::to_string(index) +
                        "] (bound length " + std::to_string(values->size()) + ")");
  }
  return (*values)[index];
}

// ---------------------------------------------------------------------------
// Tape

namespace detail {

namespace {

std::uint32_t emit(const Node& n, Tape& tape) {
  Instr ins;
  ins.op = n.op;
  ins.node = &n;
  if (n.op == Op::Constant) {
    ins.constant = n.value;
  } else if (n.op == Op::Variable) {
    auto it = std::find(tape.families.begin(), tape.families.end(), n.var.family);
    if (it == tape.families.end()) {
      tape.families.push_back(n.var.family);
      it = tape.families.end() - 1;
    }
    ins.slot = static_cast<std::uint32_t>(it - tape.families.begin());
    ins.index = static_cast<std::uint32_t>(n.var.index);
  } else {
    std::vector<std::uint32_t> args;
    args.reserve(n.args.size());
    for (const auto& a : n.args) args.push_back(emit(*a, tape));
    ins.first = static_cast<std::uint32_t>(tape.operands.size());
    ins.count = static_cast<std::uint32_t>(args.size());
    tape.operands.insert(tape.operands.end(), args.begin(), args.end());
  }
  std::uint64_t deps = 0;
  if (n.op == Op::Variable) {
    deps = std::uint64_t{1} << std::min<std::uint32_t>(ins.slot, 63);
  } else {
    for (std::uint32_t k = 0; k < ins.count; ++k) deps |= tape.deps[tape.operands[ins.first + k]];
  }
  tape.code.push_back(ins);
  tape.deps.push_back(deps);
  return static_cast<std::uint32_t>(tape.code.size() - 1);
}

}  // namespace

Tape compile(const Node& root) {
  Tape tape;
  emit(root, tape);
  return tape;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Evaluation

namespace {

using detail::Instr;
using detail::Tape;

[[noreturn]] void domain_error(const Instr& ins, const std::string& what) {
  std::string sub;
  print(*ins.node, sub);
  throw EvalError(EvalError::Kind::Domain, what + " in \"" + sub + "\"");
}

[[noreturn]] void tie_error(const Instr& ins, const std::string& what) {
  std::string sub;
  print(*ins.node, sub);
  throw EvalError(EvalError::Kind::NonDifferentiable,
                  "not differentiable (" + what + ") in \"" + sub + "\"");
}

// Scratch buffers reused across calls on the same thread.
struct Scratch {
  std::vector<double> values;
  std::vector<double> tangents;
  std::vector<std::span<const double>> bindings;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

void resolve(const Tape& tape, const VarEnv& env,
             std::vector<std::span<const double>>& bindings) {
  bindings.clear();
  for (const auto& name : tape.families) {
    auto values = env.find(name);
    if (!values) {
      throw EvalError(EvalError::Kind::MissingBinding,
                      "no binding for family \"" + name + "\"");
    }
    bindings.push_back(*values);
  }
}

bool is_integer(double v) { return std::floor(v) == v; }

// Evaluates every instruction into `values`.
void forward_values(const Tape& tape, std::span<const std::span<const double>> bindings,
                    std::vector<double>& values) {
  values.resize(tape.code.size());
  for (std::size_t i = 0; i < tape.code.size(); ++i) {
    const Instr& ins = tape.code[i];
    const std::uint32_t* args = tape.operands.data() + ins.first;
    double r = 0.0;
    switch (ins.op) {
      case Op::Constant:
        r = ins.constant;
        break;
      case Op::Variable: {
        const auto& b = bindings[ins.slot];
        if (ins.index >= b.size()) {
          throw EvalError(EvalError::Kind::MissingBinding,
                          "no binding for " + tape.families[ins.slot] + "[" +
                              std::to_string(ins.index) + "] (bound length " +
                              std::to_string(b.size()) + ")");
        }
        r = b[ins.index];
        break;
      }
      case Op::Neg: r = -values[args[0]]; break;
      case Op::Sin: r = std::sin(values[args[0]]); break;
      case Op::Cos: r = std::cos(values[args[0]]); break;
      case Op::Exp: r = std::exp(values[args[0]]); break;
      case Op::Tanh: r = std::tanh(values[args[0]]); break;
      case Op::Sqrt: {
        const double a = values[args[0]];
        if (a < 0.0) domain_error(ins, "sqrt of negative value");
        r = std::sqrt(a);
        break;
      }
      case Op::Abs: r = std::abs(values[args[0]]); break;
      case Op::Add: r = values[args[0]] + values[args[1]]; break;
      case Op::Sub: r = values[args[0]] - values[args[1]]; break;
      case Op::Mul: r = values[args[0]] * values[args[1]]; break;
      case Op::Div: {
        const double d = values[args[1]];
        if (d == 0.0) domain_error(ins, "division by zero");
        r = values[args[0]] / d;
        break;
      }
      case Op::Pow: {
        const double a = values[args[0]];
        const double b = values[args[1]];
        if (a == 0.0 && b < 0.0) domain_error(ins, "zero raised to a negative power");
        if (a < 0.0 && !is_integer(b)) {
          domain_error(ins, "negative base with non-integer exponent");
        }
        r = std::pow(a, b);
        break;
      }
      case Op::Min:
      case Op::Max: {
        r = values[args[0]];
        for (std::uint32_t k = 1; k < ins.count; ++k) {
          const double v = values[args[k]];
          r = ins.op == Op::Min ? std::min(r, v) : std::max(r, v);
        }
        break;
      }
    }
    if (!std::isfinite(r)) domain_error(ins, "non-finite result");
    values[i] = r;
  }
}


// Forward-mode tangents of every instruction w.r.t. the components of the
// family at `slot` (or nothing, if the tape never references it).
void forward_tangents(const Tape& tape, std::optional<std::uint32_t> slot, std::size_t k,
                      const std::vector<double>& values, std::vector<double>& tangents) {
  tangents.assign(tape.code.size() * k, 0.0);
  const std::uint64_t mask =
      slot ? std::uint64_t{1} << std::min<std::uint32_t>(*slot, 63) : std::uint64_t{0};
  auto depends = [&](std::uint32_t a) { return (tape.deps[a] & mask) != 0; };
  for (std::size_t i = 0; i < tape.code.size(); ++i) {
    const Instr& ins = tape.code[i];
    const std::uint32_t* args = tape.operands.data() + ins.first;
    double* out = tangents.data() + i * k;
    auto tan = [&](std::uint32_t a) { return tangents.data() + a * k; };
    auto scaled = [&](std::uint32_t a, double s) {
      const double* t = tan(a);
      for (std::size_t j = 0; j < k; ++j) out[j] = s * t[j];
    };
    switch (ins.op) {
      case Op::Constant:
        break;
      case Op::Variable:
        if (slot && ins.slot == *slot) out[ins.index] = 1.0;
        break;
      case Op::Neg: scaled(args[0], -1.0); break;
      case Op::Sin: scaled(args[0], std::cos(values[args[0]])); break;
      case Op::Cos: scaled(args[0], -std::sin(values[args[0]])); break;
      case Op::Exp: scaled(args[0], values[i]); break;
      case Op::Tanh: scaled(args[0], 1.0 - values[i] * values[i]); break;
      case Op::Sqrt:
        if (!depends(args[0])) break;
        if (values[i] == 0.0) tie_error(ins, "sqrt at 0");
        scaled(args[0], 0.5 / values[i]);
        break;
      case Op::Abs: {
        if (!depends(args[0])) break;
        const double a = values[args[0]];
        if (a == 0.0) tie_error(ins, "abs at 0");
        scaled(args[0], a > 0.0 ? 1.0 : -1.0);
        break;
      }
      case Op::Add:
      case Op::Sub: {
        const double s = ins.op == Op::Add ? 1.0 : -1.0;
        const double* ta = tan(args[0]);
        const double* tb = tan(args[1]);
        for (std::size_t j = 0; j < k; ++j) out[j] = ta[j] + s * tb[j];
        break;
      }
      case Op::Mul: {
        const double a = values[args[0]];
        const double b = values[args[1]];
        const double* ta = tan(args[0]);
        const double* tb = tan(args[1]);
        for (std::size_t j = 0; j < k; ++j) out[j] = ta[j] * b + a * tb[j];
        break;
      }
      case Op::Div: {
        const double b = values[args[1]];
        const double q = values[i];
        const double* ta = tan(args[0]);
        const double* tb = tan(args[1]);
        for (std::size_t j = 0; j < k; ++j) out[j] = (ta[j] - q * tb[j]) / b;
        break;
      }
      case Op::Pow: {
        const double a = values[args[0]];
        const double b = values[args[1]];
        const double* ta = tan(args[0]);
        const double* tb = tan(args[1]);
        if (depends(args[0]) && b != 0.0) {
          if (a == 0.0 && b < 1.0) tie_error(ins, "power with exponent below 1 at 0");
          const double da = b * std::pow(a, b - 1.0);
          for (std::size_t j = 0; j < k; ++j) out[j] += da * ta[j];
        }
        if (depends(args[1])) {
          if (a == 0.0) tie_error(ins, "variable exponent at zero base");
          if (a < 0.0) domain_error(ins, "variable exponent on negative base");
          const double db = values[i] * std::log(a);
          for (std::size_t j = 0; j < k; ++j) out[j] += db * tb[j];
        }
        break;
      }
      case Op::Min:
      case Op::Max: {
        std::uint32_t best = args[0];
        for (std::uint32_t m = 1; m < ins.count; ++m) {
          const double v = values[args[m]];
          if (ins.op == Op::Min ? v < values[best] : v > values[best]) best = args[m];
        }
        for (std::uint32_t m = 0; m < ins.count; ++m) {
          if (args[m] != best && values[args[m]] == values[best] &&
              (depends(args[m]) || depends(best))) {
            tie_error(ins, std::string(function_name(ins.op)) + " with equal arguments");
          }
        }
        const double* t = tan(best);
        std::copy(t, t + k, out);
        break;
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(out[j])) domain_error(ins, "non-finite derivative");
    }
  }
}

}  // namespace

double eval(const Expr& e, const VarEnv& env) {
  Scratch& s = scratch();
  resolve(e.tape(), env, s.bindings);
  forward_values(e.tape(), s.bindings, s.values);
  return s.values.back();
}

double eval_with_grad(const Expr& e, std::string_view family, const VarEnv& env,
                      std::span<double> out) {
  const Tape& tape = e.tape();
  auto target = env.find(family);
  if (!target) {
    throw EvalError(EvalError::Kind::MissingBinding,
                    "no binding for family \"" + std::string(family) + "\"");
  }
  const std::size_t k = target->size();
  if (out.size() != k) {
    throw DimensionError("gradient buffer has length " + std::to_string(out.size()) +
                         ", family \"" + std::string(family) + "\" has length " +
                         std::to_string(k));
  }
  std::optional<std::uint32_t> slot;
  for (std::size_t i = 0; i < tape.families.size(); ++i) {
    if (tape.families[i] == family) slot = static_cast<std::uint32_t>(i);
  }
  Scratch& s = scratch();
  resolve(tape, env, s.bindings);
  forward_values(tape, s.bindings, s.values);
  forward_tangents(tape, slot, k, s.values, s.tangents);
  const double* root = s.tangents.data() + (tape.code.size() - 1) * k;
  std::copy(root, root + k, out.begin());
  return s.values.back();
}

std::vector<double> grad(const Expr& e, std::string_view family, const VarEnv& env) {
  auto target = env.find(family);
  if (!target) {
    throw EvalError(EvalError::Kind::MissingBinding,
                    "no binding for family \"" + std::string(family) + "\"");
  }
  std::vector<double> out(target->size());
  eval_with_grad(e, family, env, out);
  return out;
}

}  // namespace bisim
