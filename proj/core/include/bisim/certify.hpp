#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bisim/expr.hpp"
#include "bisim/model.hpp"

namespace bisim {

inline constexpr double kDefaultFeasibilityMargin = 1e-9;

/// Decay rate lambda > 0 and input gain gamma >= 0 of a certificate.
struct Rates {
  double lambda = 1.0;
  double gamma = 0.0;
};

/// Candidate bisimulation function V(x, xp) for a system with state
/// dimension n and input dimension m, together with its rates.
class Certificate {
 public:
  /// Throws Error unless lambda > 0 and gamma >= 0, or if V references
  /// anything but x[0..n) and xp[0..n).
  Certificate(Expr V, double lambda, double gamma, std::size_t n, std::size_t m);

  static Certificate parse(std::string_view V, double lambda, double gamma, std::size_t n,
                           std::size_t m);

  const Expr& V() const { return V_; }
  double lambda() const { return rates_.lambda; }
  double gamma() const { return rates_.gamma; }
  Rates rates() const { return rates_; }
  std::size_t n() const { return n_; }
  std::size_t m() const { return m_; }

  /// Same V and dimensions with different rates.
  Certificate with_rates(double lambda, double gamma) const;

 private:
  Expr V_;
  Rates rates_;
  std::size_t n_;
  std::size_t m_;
};

struct CompositionWeights {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
};

/// gamma1*gamma2 / (lambda1*lambda2). The small-gain condition holds iff the
/// result is strictly below 1.
double small_gain_ratio(Rates r1, Rates r2);
double small_gain_ratio(const Certificate& c1, const Certificate& c2);

/// Picks a point of the open interval (lo, hi); hi may be +infinity.
using IntervalRule = std::function<double(double lo, double hi)>;

/// Midpoint of (lo, hi), or 2*lo when hi is unbounded.
double midpoint_rule(double lo, double hi);

/// Weights per the three-case rule:
///   lambda1 <= gamma2:  alpha1 in (gamma2/lambda1, lambda2/gamma1), alpha2 = 1
///   lambda2 <= gamma1:  alpha1 = 1, alpha2 in (gamma1/lambda2, lambda1/gamma2)
///   otherwise:          alpha1 = alpha2 = 1
/// Throws SmallGainError when the ratio is >= 1 and InconsistencyError if
/// both first cases apply at once or the chosen point fails validation.
CompositionWeights select_alphas(Rates r1, Rates r2, const IntervalRule& rule = midpoint_rule,
                                 double margin = kDefaultFeasibilityMargin);
CompositionWeights select_alphas(const Certificate& c1, const Certificate& c2,
                                 const IntervalRule& rule = midpoint_rule,
                                 double margin = kDefaultFeasibilityMargin);

enum class Inequality { Alpha1AtLeastOne, Alpha2AtLeastOne, SlackOne, SlackTwo };

/// Human-readable form, e.g. "alpha1 >= 1".
std::string describe(Inequality which);

struct InequalityViolation {
  Inequality which;
  double value;  // alpha for the bounds, the slack for the strict ones
};

/// Checks alpha1 >= 1, alpha2 >= 1, alpha1*lambda1 - alpha2*gamma2 > margin
/// and alpha2*lambda2 - alpha1*gamma1 > margin. Empty result means pass.
std::vector<InequalityViolation> validate_alphas(CompositionWeights w, Rates r1, Rates r2,
                                                 double margin = kDefaultFeasibilityMargin);
std::vector<InequalityViolation> validate_alphas(CompositionWeights w, const Certificate& c1,
                                                 const Certificate& c2,
                                                 double margin = kDefaultFeasibilityMargin);

/// lambda = min((a1*l1 - a2*g2)/a1, (a2*l2 - a1*g1)/a2), gamma = a1*g1 + a2*g2.
/// Throws InvalidWeightsError if the weights fail validation.
Rates composed_rates(Rates r1, Rates r2, CompositionWeights w,
                     double margin = kDefaultFeasibilityMargin);

/// V(x, xp) = alpha1*V1(x[0..n1), xp[0..n1)) + alpha2*V2(x[n1..n), xp[n1..n))
/// with the composed rates. Each c_i certifies a subsystem with input
/// [v_i, w_i], so the result has m = (m1 - n2) + (m2 - n1) = q1 + q2.
Certificate compose(const Certificate& c1, const Certificate& c2, CompositionWeights w,
                    double margin = kDefaultFeasibilityMargin);

/// As above, additionally checking each certificate against its subsystem
/// (n_i and m_i = p_i + q_i). The result certifies interconnect(ic).
Certificate compose(const Certificate& c1, const Certificate& c2, CompositionWeights w,
                    const Interconnection& ic, double margin = kDefaultFeasibilityMargin);

struct AlphaGrid {
  std::size_t resolution = 200;  // points per axis, >= 2
  double alpha_max = 50.0;       // box is [1, alpha_max]^2
};

/// Every grid point of [1, alpha_max]^2 satisfying all four inequalities.
std::vector<CompositionWeights> alpha_feasible_region_grid(
    Rates r1, Rates r2, AlphaGrid grid = {}, double margin = kDefaultFeasibilityMargin);

}  // namespace bisim
