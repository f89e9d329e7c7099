#pragma once

// Expression DSL used for vector fields, candidate bisimulation functions and
// input signals. The grammar is documented in docs/grammar.md.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bisim/error.hpp"

namespace bisim {

/// A declared variable family, e.g. {"x", 3} admits x[0], x[1], x[2].
struct FamilySpec {
  std::string name;
  std::size_t length = 0;
};

struct VarRef {
  std::string family;
  std::size_t index = 0;

  friend bool operator==(const VarRef&, const VarRef&) = default;
  friend auto operator<=>(const VarRef&, const VarRef&) = default;
};

enum class Op : std::uint8_t {
  Constant,
  Variable,
  Neg,
  Sin,
  Cos,
  Exp,
  Tanh,
  Sqrt,
  Abs,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Min,
  Max,
};

/// Function-call spelling of a unary or n-ary op ("sin", "min", ...), or an
/// empty view for operators and leaves.
std::string_view function_name(Op op);

struct Node {
  Op op = Op::Constant;
  double value = 0.0;  // Constant only
  VarRef var;          // Variable only
  std::vector<std::shared_ptr<const Node>> args;
};

namespace detail {
struct Tape;
}

/// Immutable expression tree. Copies share structure.
class Expr {
 public:
  /// The constant 0.
  Expr();
  explicit Expr(std::shared_ptr<const Node> root);

  const Node& root() const { return *root_; }
  const std::shared_ptr<const Node>& root_ptr() const { return root_; }
  const detail::Tape& tape() const { return *tape_; }

  /// Number of nodes in the tree (shared subtrees counted once per use).
  std::size_t size() const;

 private:
  std::shared_ptr<const Node> root_;
  std::shared_ptr<const detail::Tape> tape_;
};

Expr constant(double value);
Expr variable(std::string family, std::size_t index);
Expr unary(Op op, const Expr& arg);
Expr binary(Op op, const Expr& lhs, const Expr& rhs);
Expr nary(Op op, const std::vector<Expr>& args);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

/// Parses a single expression. Every variable must belong to one of
/// `families` and use an index below its declared length. A bare family
/// name is accepted for families of length 1 and means index 0.
Expr parse(std::string_view source, std::span<const FamilySpec> families);
Expr parse(std::string_view source, std::initializer_list<FamilySpec> families);

/// Renders an expression that parses back to an identical tree. Constants
/// use the shortest round-trip decimal form.
std::string to_string(const Expr& e);

/// Distinct variable references, sorted.
std::vector<VarRef> references(const Expr& e);

/// Throws Error if `e` references a family outside `families` or an index
/// past its declared length.
void require_families(const Expr& e, std::span<const FamilySpec> families,
                      std::string_view context = {});

/// Rewrites every variable reference through `map`. Structure is otherwise
/// preserved, so evaluation of the result matches bit for bit.
Expr rename(const Expr& e, const std::function<VarRef(const VarRef&)>& map);

/// Values bound to variable families. Each family has a fixed length once
/// bound.
class VarEnv {
 public:
  VarEnv() = default;
  VarEnv(std::initializer_list<std::pair<std::string, std::vector<double>>>
             families);

  /// Binds or overwrites a family. Overwriting with a different length
  /// throws DimensionError.
  void bind(std::string_view name, std::span<const double> values);
  void bind(std::string_view name, std::initializer_list<double> values) {
    bind(name, std::span<const double>(values.begin(), values.size()));
  }

  /// Mutable access to the storage of an already bound family.
  std::span<double> values(std::string_view name);

  std::optional<std::span<const double>> find(std::string_view name) const;

  /// Throws EvalError(MissingBinding) if the family or index is absent.
  double at(std::string_view name, std::size_t index) const;

 private:
  struct Family {
    std::string name;
    std::vector<double> values;
  };
  std::vector<Family> families_;
};

/// IEEE double evaluation. Division by zero, sqrt of a negative number,
/// 0^negative, negative^non-integer and non-finite intermediates throw
/// EvalError(Domain) naming the offending subexpression.
double eval(const Expr& e, const VarEnv& env);

/// Exact structural gradient with respect to every component of `family`
/// (forward-mode accumulation). abs at 0, sqrt at 0 and ties in min/max throw
/// EvalError(NonDifferentiable).
std::vector<double> grad(const Expr& e, std::string_view family,
                         const VarEnv& env);

/// Same as grad, writing into `out` (sized to the family length) and
/// returning the value of `e`.
double eval_with_grad(const Expr& e, std::string_view family,
                      const VarEnv& env, std::span<double> out);

namespace detail {

struct Instr {
  Op op = Op::Constant;
  double constant = 0.0;
  std::uint32_t slot = 0;   // Variable: index into Tape::families
  std::uint32_t index = 0;  // Variable: component index
  std::uint32_t first = 0;  // operands[first, first + count)
  std::uint32_t count = 0;
  const Node* node = nullptr;
};

/// Post-order flattening of a tree; operand positions always precede the
/// instruction that uses them.
struct Tape {
  std::vector<Instr> code;
  std::vector<std::uint32_t> operands;
  std::vector<std::string> families;
  /// Bit s set iff instruction i structurally depends on family slot s
  /// (slots past 63 are folded into bit 63).
  std::vector<std::uint64_t> deps;
};

Tape compile(const Node& root);

}  // namespace detail

}  // namespace bisim
