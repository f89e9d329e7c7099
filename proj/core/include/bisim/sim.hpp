#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bisim/expr.hpp"
#include "bisim/model.hpp"

namespace bisim {

inline constexpr double kDefaultStep = 1e-2;
inline constexpr double kDefaultHorizon = 10.0;

/// Open-loop input u(t), one expression over t per component.
class InputSignal {
 public:
  InputSignal() = default;
  InputSignal(std::string label, std::vector<Expr> components);

  static InputSignal parse(std::string label, const std::vector<std::string>& components);
  /// m components, all identically zero.
  static InputSignal zero(std::size_t m, std::string label = "zero");

  const std::string& label() const { return label_; }
  const std::vector<Expr>& components() const { return components_; }
  std::size_t size() const { return components_.size(); }

  std::vector<double> operator()(double t) const;
  void evaluate(double t, std::span<double> out) const;

 private:
  std::string label_;
  std::vector<Expr> components_;
};

struct Trajectory {
  double step = 0.0;
  double horizon = 0.0;
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> inputs;
};

/// Number of grid intervals covering [0, T] with step h: floor(T/h), with a
/// 1e-9 allowance for T/h landing just below an integer.
std::size_t grid_steps(double h, double T);

/// Grid times k*h for k = 0..grid_steps(h, T).
std::vector<double> time_grid(double h, double T);

/// Classical fixed-step RK4. Inputs are evaluated exactly at the stage times
/// t, t + h/2 and t + h. Throws IntegrationError on field or signal errors
/// and when the state stops being finite.
Trajectory integrate(const System& s, std::span<const double> x0, const InputSignal& sig,
                     double h = kDefaultStep, double T = kDefaultHorizon);

/// sup of ||a(t) - b(t)|| over the grid points and the stage midpoints
/// t + h/2. A grid approximation of the true supremum.
double sup_input_gap(const InputSignal& a, const InputSignal& b, double h, double T);

}  // namespace bisim
