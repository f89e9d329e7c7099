#include "bisim/model.hpp"

#include <algorithm>

namespace bisim {

namespace {

std::string dims(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

void check_length(std::string_view what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw DimensionError(std::string(what) + " has length " + std::to_string(got) +
                         ", expected " + std::to_string(want));
  }
}

std::vector<Expr> parse_field(const std::vector<std::string>& field,
                              std::span<const FamilySpec> families, const std::string& owner) {
  std::vector<Expr> out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    try {
      out.push_back(parse(field[i], families));
    } catch (const ParseError& e) {
      throw ParseError(owner + " field[" + std::to_string(i) + "]: " + e.what(), e.position());
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Subsystem::Subsystem(std::string name, std::size_t n, std::size_t p, std::size_t q,
                     std::vector<Expr> field)
    : name_(std::move(name)), n_(n), p_(p), q_(q), field_(std::move(field)) {
  if (n_ < 1) throw DimensionError("subsystem \"" + name_ + "\": n must be at least 1");
  check_length("subsystem \"" + name_ + "\" field", field_.size(), n_);
  const FamilySpec families[] = {{"x", n_}, {"v", p_}, {"w", q_}};
  for (std::size_t i = 0; i < field_.size(); ++i) {
    require_families(field_[i], families,
                     "subsystem \"" + name_ + "\" field[" + std::to_string(i) + "]");
  }
}

Subsystem Subsystem::parse(std::string name, std::size_t n, std::size_t p, std::size_t q,
                           const std::vector<std::string>& field) {
  const FamilySpec families[] = {{"x", n}, {"v", p}, {"w", q}};
  auto exprs = parse_field(field, families, "subsystem \"" + name + "\"");
  return Subsystem(std::move(name), n, p, q, std::move(exprs));
}

std::vector<double> Subsystem::eval_field(std::span<const double> x,
                                          std::span<const double> v,
                                          std::span<const double> w) const {
  check_length("x", x.size(), n_);
  check_length("v", v.size(), p_);
  check_length("w", w.size(), q_);
  VarEnv env;
  env.bind("x", x);
  env.bind("v", v);
  env.bind("w", w);
  std::vector<double> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = eval(field_[i], env);
  return out;
}

// ---------------------------------------------------------------------------

System::System(std::string name, std::size_t n, std::size_t m, std::vector<Expr> field,
               Provenance provenance)
    : name_(std::move(name)),
      n_(n),
      m_(m),
      field_(std::move(field)),
      provenance_(std::move(provenance)) {
  if (n_ < 1) throw DimensionError("system \"" + name_ + "\": n must be at least 1");
  check_length("system \"" + name_ + "\" field", field_.size(), n_);
  const FamilySpec families[] = {{"x", n_}, {"u", m_}};
  for (std::size_t i = 0; i < field_.size(); ++i) {
    require_families(field_[i], families,
                     "system \"" + name_ + "\" field[" + std::to_string(i) + "]");
  }
}

System System::parse(std::string name, std::size_t n, std::size_t m,
                     const std::vector<std::string>& field) {
  const FamilySpec families[] = {{"x", n}, {"u", m}};
  auto exprs = parse_field(field, families, "system \"" + name + "\"");
  return System(std::move(name), n, m, std::move(exprs));
}

// ---------------------------------------------------------------------------

Interconnection::Interconnection(Subsystem left, Subsystem right)
    : left_(std::move(left)), right_(std::move(right)) {
  const bool ok1 = left_.p() == right_.n();
  const bool ok2 = right_.p() == left_.n();
  if (!ok1 || !ok2) {
    std::string msg = "cannot interconnect \"" + left_.name() + "\" and \"" + right_.name() +
                      "\": ";
    msg += "p1 = " + std::to_string(left_.p()) + ", n2 = " + std::to_string(right_.n());
    msg += ok1 ? " (ok); " : " (mismatch: " + dims(left_.p(), right_.n()) + "); ";
    msg += "p2 = " + std::to_string(right_.p()) + ", n1 = " + std::to_string(left_.n());
    msg += ok2 ? " (ok)" : " (mismatch: " + dims(right_.p(), left_.n()) + ")";
    throw DimensionError(msg);
  }
}

System interconnect(const Interconnection& ic, std::string name) {
  const Subsystem& s1 = ic.left();
  const Subsystem& s2 = ic.right();
  const std::size_t n1 = s1.n();
  const std::size_t q1 = s1.q();

  // f1: x -> x[i], v -> x[n1 + j], w -> u[k].
  auto map1 = [&](const VarRef& r) -> VarRef {
    if (r.family == "x") return {"x", r.index};
    if (r.family == "v") return {"x", n1 + r.index};
    return {"u", r.index};
  };
  // f2: x -> x[n1 + i], v -> x[j], w -> u[q1 + k].
  auto map2 = [&](const VarRef& r) -> VarRef {
    if (r.family == "x") return {"x", n1 + r.index};
    if (r.family == "v") return {"x", r.index};
    return {"u", q1 + r.index};
  };

  std::vector<Expr> field;
  field.reserve(n1 + s2.n());
  for (const auto& f : s1.field()) field.push_back(rename(f, map1));
  for (const auto& f : s2.field()) field.push_back(rename(f, map2));

  if (name.empty()) name = s1.name() + "*" + s2.name();
  Provenance prov{Provenance::Kind::Interconnection, s1.name(), s2.name(), {}};
  return System(std::move(name), n1 + s2.n(), q1 + s2.q(), std::move(field), std::move(prov));
}

Subsystem repartition(const System& s, std::span<const std::size_t> v_indices,
                      std::span<const std::size_t> w_indices, std::string name) {
  const std::size_t m = s.m();
  // role[i] = ('v' | 'w', position)
  std::vector<std::pair<char, std::size_t>> role(m, {'\0', 0});
  std::vector<std::string> problems;
  auto assign = [&](std::span<const std::size_t> idx, char which) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const std::size_t i = idx[j];
      if (i >= m) {
        problems.push_back("index " + std::to_string(i) + " out of range (m = " +
                           std::to_string(m) + ")");
      } else if (role[i].first != '\0') {
        problems.push_back("input " + std::to_string(i) + " assigned twice");
      } else {
        role[i] = {which, j};
      }
    }
  };
  assign(v_indices, 'v');
  assign(w_indices, 'w');
  for (std::size_t i = 0; i < m; ++i) {
    if (role[i].first == '\0') problems.push_back("input " + std::to_string(i) + " not assigned");
  }
  if (!problems.empty()) {
    std::string msg = "invalid repartition of \"" + s.name() + "\":";
    for (const auto& p : problems) msg += " " + p + ";";
    msg.pop_back();
    throw DimensionError(msg);
  }

  auto map = [&](const VarRef& r) -> VarRef {
    if (r.family == "x") return r;
    const auto& [which, pos] = role[r.index];
    return {std::string(1, which), pos};
  };
  std::vector<Expr> field;
  field.reserve(s.n());
  for (const auto& f : s.field()) field.push_back(rename(f, map));
  if (name.empty()) name = s.name();
  Subsystem out(std::move(name), s.n(), v_indices.size(), w_indices.size(), std::move(field));
  out.set_source_system(s.name());
  return out;
}

System as_system(const Subsystem& s) {
  const std::size_t p = s.p();
  auto map = [&](const VarRef& r) -> VarRef {
    if (r.family == "x") return r;
    if (r.family == "v") return {"u", r.index};
    return {"u", p + r.index};
  };
  std::vector<Expr> field;
  field.reserve(s.n());
  for (const auto& f : s.field()) field.push_back(rename(f, map));
  Provenance prov{Provenance::Kind::FromSubsystem, {}, {}, s.name()};
  return System(s.name(), s.n(), p + s.q(), std::move(field), std::move(prov));
}

std::vector<double> eval_field(const System& s, std::span<const double> x,
                               std::span<const double> u) {
  std::vector<double> out(s.n());
  FieldEvaluator evaluator(s);
  evaluator(x, u, out);
  return out;
}

FieldEvaluator::FieldEvaluator(const System& s) : system_(&s) {
  std::vector<double> zeros_x(s.n(), 0.0);
  std::vector<double> zeros_u(s.m(), 0.0);
  env_.bind("x", zeros_x);
  env_.bind("u", zeros_u);
}

void FieldEvaluator::operator()(std::span<const double> x, std::span<const double> u,
                                std::span<double> out) {
  check_length("x", x.size(), system_->n());
  check_length("u", u.size(), system_->m());
  check_length("output", out.size(), system_->n());
  std::copy(x.begin(), x.end(), env_.values("x").begin());
  std::copy(u.begin(), u.end(), env_.values("u").begin());
  const auto& field = system_->field();
  for (std::size_t i = 0; i < field.size(); ++i) out[i] = eval(field[i], env_);
}

}  // namespace bisim
