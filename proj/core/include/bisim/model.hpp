#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bisim/expr.hpp"

namespace bisim {

/// How a System came to be. Kept for reporting and for writing models back
/// out; evaluation never depends on it.
struct Provenance {
  enum class Kind { Atomic, Interconnection, Repartitioned, FromSubsystem };

  Kind kind = Kind::Atomic;
  std::string left;    // Interconnection
  std::string right;   // Interconnection
  std::string source;  // Repartitioned / FromSubsystem
};

/// A component with partitioned input u = [v, w]: v (length p) is fed by the
/// partner's state on interconnection, w (length q) stays external. The
/// field is written over x (n), v (p) and w (q).
class Subsystem {
 public:
  Subsystem(std::string name, std::size_t n, std::size_t p, std::size_t q,
            std::vector<Expr> field);

  /// Parses each component over x, v, w.
  static Subsystem parse(std::string name, std::size_t n, std::size_t p, std::size_t q,
                         const std::vector<std::string>& field);

  const std::string& name() const { return name_; }
  std::size_t n() const { return n_; }
  std::size_t p() const { return p_; }
  std::size_t q() const { return q_; }
  const std::vector<Expr>& field() const { return field_; }

  /// Provenance::source, when this subsystem was cut out of a System.
  const std::optional<std::string>& source_system() const { return source_system_; }
  void set_source_system(std::string name) { source_system_ = std::move(name); }

  /// Evaluates f(x, v, w).
  std::vector<double> eval_field(std::span<const double> x, std::span<const double> v,
                                 std::span<const double> w) const;

 private:
  std::string name_;
  std::size_t n_;
  std::size_t p_;
  std::size_t q_;
  std::vector<Expr> field_;
  std::optional<std::string> source_system_;
};

/// x' = f(x, u) with the field written over x (n) and u (m).
class System {
 public:
  System(std::string name, std::size_t n, std::size_t m, std::vector<Expr> field,
         Provenance provenance = {});

  static System parse(std::string name, std::size_t n, std::size_t m,
                      const std::vector<std::string>& field);

  const std::string& name() const { return name_; }
  std::size_t n() const { return n_; }
  std::size_t m() const { return m_; }
  const std::vector<Expr>& field() const { return field_; }
  const Provenance& provenance() const { return provenance_; }

 private:
  std::string name_;
  std::size_t n_;
  std::size_t m_;
  std::vector<Expr> field_;
  Provenance provenance_;
};

/// Two subsystems wired state-to-input: v1 = x2, v2 = x1.
class Interconnection {
 public:
  /// Throws DimensionError unless left.p == right.n and right.p == left.n.
  Interconnection(Subsystem left, Subsystem right);

  const Subsystem& left() const { return left_; }
  const Subsystem& right() const { return right_; }

 private:
  Subsystem left_;
  Subsystem right_;
};

/// The closed interconnection: state [x1, x2], input [w1, w2].
System interconnect(const Interconnection& ic, std::string name = {});

/// Splits the input of `s` into interconnection inputs u[v_indices[j]] -> v[j]
/// and external inputs u[w_indices[k]] -> w[k]. The index lists must
/// partition {0, ..., m-1}.
Subsystem repartition(const System& s, std::span<const std::size_t> v_indices,
                      std::span<const std::size_t> w_indices, std::string name = {});

/// The subsystem viewed as a System with u = [v, w].
System as_system(const Subsystem& s);

/// Componentwise f(x, u).
std::vector<double> eval_field(const System& s, std::span<const double> x,
                               std::span<const double> u);

/// Reusable evaluator that keeps its variable bindings between calls.
class FieldEvaluator {
 public:
  explicit FieldEvaluator(const System& s);

  /// Writes f(x, u) into `out` (length n).
  void operator()(std::span<const double> x, std::span<const double> u,
                  std::span<double> out);

 private:
  const System* system_;
  VarEnv env_;
};

}  // namespace bisim
