#pragma once

// Sampling-based falsification of the two certificate conditions
//
//   (1)  ||x - xp|| <= V(x, xp)
//   (2)  dV/dx f(x, u) + dV/dxp f(xp, up) <= -lambda V(x, xp) + gamma ||u - up||
//
// and of the trajectory bound
//
//   ||x(t) - xp(t)|| <= V(x(t), xp(t)) <= exp(-lambda t) V(x0, xp0)
//                                          + (gamma / lambda) ||u - up||_inf.
//
// A pass means no counterexample was found among the samples; it is not a
// proof.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bisim/certify.hpp"
#include "bisim/model.hpp"
#include "bisim/sim.hpp"

namespace bisim {

inline constexpr std::size_t kDefaultSamples = 10000;
inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr double kDefaultBoxHalfWidth = 10.0;
inline constexpr double kDefaultConditionTolerance = 1e-7;

/// 1e-4 + 10 h^4: absorbs RK4 error and the grid approximation of the
/// input-gap supremum.
double default_bound_tolerance(double h);

struct Interval {
  double lo = -kDefaultBoxHalfWidth;
  double hi = kDefaultBoxHalfWidth;
};

struct SampleBox {
  std::vector<Interval> x;
  std::vector<Interval> xp;
  std::vector<Interval> u;
  std::vector<Interval> up;
  std::size_t samples = kDefaultSamples;
  std::uint64_t seed = kDefaultSeed;

  /// Same interval for every state component of x and xp, and another for
  /// every input component of u and up.
  static SampleBox uniform(std::size_t n, std::size_t m, Interval state = {},
                           Interval input = {}, std::size_t samples = kDefaultSamples,
                           std::uint64_t seed = kDefaultSeed);

  /// Throws Error on empty or non-finite intervals or samples == 0.
  void validate() const;
};

enum class ViolationKind { Cond1, Cond2, Bound };

std::string to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind = ViolationKind::Cond1;
  std::size_t sample = 0;  // Cond1/Cond2: index of the sample
  double time = 0.0;       // Bound: grid time
  std::string detail;      // Bound: which link of the chain failed
  std::vector<double> x;
  std::vector<double> xp;
  std::vector<double> u;
  std::vector<double> up;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // lhs - rhs
};

struct CheckOptions {
  double tol = kDefaultConditionTolerance;
  /// Worker threads; 0 selects hardware concurrency. Results never depend
  /// on this value.
  unsigned workers = 1;
};

struct CheckResult {
  bool passed = true;
  std::size_t samples = 0;
  std::size_t resamples = 0;
  std::size_t violations = 0;
  /// max(lhs - rhs) over all evaluated samples.
  double worst_margin = 0.0;
  std::optional<Violation> first;
  std::optional<Violation> worst;
};

/// Evaluation failed at a sample point (other than a resampled
/// non-differentiable point).
class SampleError : public Error {
 public:
  SampleError(const std::string& message, std::size_t sample)
      : Error(message), sample_(sample) {}
  std::size_t sample() const noexcept { return sample_; }

 private:
  std::size_t sample_;
};

/// Samples (x, xp) from the box and looks for ||x - xp|| > V + tol.
CheckResult check_cond1(const Certificate& cert, const SampleBox& box, CheckOptions opts = {});

/// Samples (x, xp, u, up) and looks for LHS > RHS + tol in condition (2).
/// Points where V is not differentiable are redrawn; more than 10*N redraws
/// in total throws Error.
CheckResult check_cond2(const Certificate& cert, const System& s, const SampleBox& box,
                        CheckOptions opts = {});

struct Envelope {
  std::vector<double> times;
  std::vector<double> eta;
};

/// eta(t) = exp(-lambda t) V0 + (gamma / lambda) u_gap on the given times.
Envelope envelope(Rates rates, double V0, double u_gap, std::span<const double> times);
Envelope envelope(const Certificate& cert, double V0, double u_gap,
                  std::span<const double> times);

struct BoundResult {
  bool passed = true;
  Trajectory first_run;   // from x0 under u
  Trajectory second_run;  // from x0p under up
  std::vector<double> gap;  // ||x(t) - xp(t)||
  std::vector<double> V;    // V(x(t), xp(t))
  Envelope env;
  double V0 = 0.0;
  double u_gap = 0.0;
  std::size_t violations = 0;
  std::optional<Violation> first;
};

/// Integrates both trajectories and checks the bound chain at every grid
/// point. A negative `tol` selects default_bound_tolerance(h).
BoundResult check_bound(const Certificate& cert, const System& s, std::span<const double> x0,
                        std::span<const double> x0p, const InputSignal& u,
                        const InputSignal& up, double h = kDefaultStep,
                        double T = kDefaultHorizon, double tol = -1.0);

namespace detail {

/// Counter-based SplitMix64 stream: the sequence depends only on
/// (seed, stream).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);
  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(Interval iv) { return iv.lo + (iv.hi - iv.lo) * uniform(); }

 private:
  std::uint64_t state_;
};

}  // namespace detail

}  // namespace bisim
