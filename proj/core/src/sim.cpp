#include "bisim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bisim {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void check_grid(double h, double T) {
  if (!(h > 0.0) || !std::isfinite(h)) throw Error("step h must be finite and > 0");
  if (!(T >= 0.0) || !std::isfinite(T)) throw Error("horizon T must be finite and >= 0");
  if (T > 0.0 && h > T) {
    throw Error("step h = " + fmt(h) + " exceeds horizon T = " + fmt(T));
  }
}

}  // namespace

InputSignal::InputSignal(std::string label, std::vector<Expr> components)
    : label_(std::move(label)), components_(std::move(components)) {
  const FamilySpec families[] = {{"t", 1}};
  for (std::size_t i = 0; i < components_.size(); ++i) {
    require_families(components_[i], families,
                     "input signal \"" + label_ + "\"[" + std::to_string(i) + "]");
  }
}

InputSignal InputSignal::parse(std::string label, const std::vector<std::string>& components) {
  std::vector<Expr> exprs;
  exprs.reserve(components.size());
  for (const auto& c : components) exprs.push_back(bisim::parse(c, {{"t", 1}}));
  return InputSignal(std::move(label), std::move(exprs));
}

InputSignal InputSignal::zero(std::size_t m, std::string label) {
  return InputSignal(std::move(label), std::vector<Expr>(m, constant(0.0)));
}

std::vector<double> InputSignal::operator()(double t) const {
  std::vector<double> out(components_.size());
  evaluate(t, out);
  return out;
}

void InputSignal::evaluate(double t, std::span<double> out) const {
  if (out.size() != components_.size()) {
    throw DimensionError("input buffer has length " + std::to_string(out.size()) +
                         ", signal has " + std::to_string(components_.size()) + " components");
  }
  VarEnv env;
  env.bind("t", {t});
  for (std::size_t i = 0; i < components_.size(); ++i) out[i] = eval(components_[i], env);
}

std::size_t grid_steps(double h, double T) {
  check_grid(h, T);
  return static_cast<std::size_t>(std::floor(T / h + 1e-9));
}

std::vector<double> time_grid(double h, double T) {
  const std::size_t steps = grid_steps(h, T);
  std::vector<double> times(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) times[k] = static_cast<double>(k) * h;
  return times;
}

Trajectory integrate(const System& s, std::span<const double> x0, const InputSignal& sig,
                     double h, double T) {
  if (x0.size() != s.n()) {
    throw DimensionError("initial state has length " + std::to_string(x0.size()) +
                         ", system \"" + s.name() + "\" has n = " + std::to_string(s.n()));
  }
  if (sig.size() != s.m()) {
    throw DimensionError("input signal has " + std::to_string(sig.size()) +
                         " components, system \"" + s.name() + "\" has m = " +
                         std::to_string(s.m()));
  }
  Trajectory traj;
  traj.step = h;
  traj.horizon = T;
  traj.times = time_grid(h, T);

  const std::size_t n = s.n();
  const std::size_t m = s.m();
  FieldEvaluator f(s);
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::vector<double> u0(m), umid(m), u1(m);

  auto input_at = [&](double t, std::span<double> out) {
    try {
      sig.evaluate(t, out);
    } catch (const EvalError& e) {
      throw IntegrationError("input signal \"" + sig.label() + "\" failed at t = " + fmt(t) +
                             ": " + e.what());
    }
  };
  auto field_at = [&](double t, std::span<const double> state, std::span<const double> u,
                      std::span<double> out) {
    try {
      f(state, u, out);
    } catch (const EvalError& e) {
      throw IntegrationError("field of \"" + s.name() + "\" failed at t = " + fmt(t) + ": " +
                             e.what());
    }
  };

  traj.states.reserve(traj.times.size());
  traj.inputs.reserve(traj.times.size());
  input_at(0.0, u0);
  traj.states.push_back(x);
  traj.inputs.push_back(u0);

  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    const double t = traj.times[k - 1];
    input_at(t + 0.5 * h, umid);
    input_at(traj.times[k], u1);

    field_at(t, x, u0, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    field_at(t + 0.5 * h, tmp, umid, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    field_at(t + 0.5 * h, tmp, umid, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    field_at(traj.times[k], tmp, u1, k4);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(x[i])) {
        throw IntegrationError("state x[" + std::to_string(i) + "] of \"" + s.name() +
                               "\" became non-finite at t = " + fmt(traj.times[k]));
      }
    }
    traj.states.push_back(x);
    traj.inputs.push_back(u1);
    std::swap(u0, u1);
  }
  return traj;
}

double sup_input_gap(const InputSignal& a, const InputSignal& b, double h, double T) {
  if (a.size() != b.size()) {
    throw DimensionError("input signals have " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " components");
  }
  const auto times = time_grid(h, T);
  std::vector<double> ua(a.size()), ub(b.size());
  double sup = 0.0;
  auto probe = [&](double t) {
    a.evaluate(t, ua);
    b.evaluate(t, ub);
    double sq = 0.0;
    for (std::size_t i = 0; i < ua.size(); ++i) sq += (ua[i] - ub[i]) * (ua[i] - ub[i]);
    sup = std::max(sup, std::sqrt(sq));
  };
  for (std::size_t k = 0; k < times.size(); ++k) {
    probe(times[k]);
    if (k + 1 < times.size()) probe(times[k] + 0.5 * h);
  }
  return sup;
}

}  // namespace bisim
