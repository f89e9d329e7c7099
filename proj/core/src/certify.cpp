#include "bisim/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bisim {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void check_rates(Rates r) {
  if (!(r.lambda > 0.0) || !std::isfinite(r.lambda)) {
    throw Error("certificate lambda must be finite and > 0, got " + fmt(r.lambda));
  }
  if (!(r.gamma >= 0.0) || !std::isfinite(r.gamma)) {
    throw Error("certificate gamma must be finite and >= 0, got " + fmt(r.gamma));
  }
}

}  // namespace

Certificate::Certificate(Expr V, double lambda, double gamma, std::size_t n, std::size_t m)
    : V_(std::move(V)), rates_{lambda, gamma}, n_(n), m_(m) {
  check_rates(rates_);
  if (n_ < 1) throw DimensionError("certificate state dimension must be at least 1");
  const FamilySpec families[] = {{"x", n_}, {"xp", n_}};
  require_families(V_, families, "certificate V");
}

Certificate Certificate::parse(std::string_view V, double lambda, double gamma, std::size_t n,
                               std::size_t m) {
  return Certificate(bisim::parse(V, {{"x", n}, {"xp", n}}), lambda, gamma, n, m);
}

Certificate Certificate::with_rates(double lambda, double gamma) const {
  return Certificate(V_, lambda, gamma, n_, m_);
}

double small_gain_ratio(Rates r1, Rates r2) {
  check_rates(r1);
  check_rates(r2);
  return (r1.gamma * r2.gamma) / (r1.lambda * r2.lambda);
}

double small_gain_ratio(const Certificate& c1, const Certificate& c2) {
  return small_gain_ratio(c1.rates(), c2.rates());
}

double midpoint_rule(double lo, double hi) {
  if (std::isinf(hi)) return 2.0 * lo;
  return 0.5 * (lo + hi);
}

CompositionWeights select_alphas(Rates r1, Rates r2, const IntervalRule& rule, double margin) {
  const double ratio = small_gain_ratio(r1, r2);
  if (!(ratio < 1.0)) {
    throw SmallGainError("small-gain condition violated: gamma1*gamma2/(lambda1*lambda2) = " +
                             fmt(ratio) + " >= 1",
                         ratio);
  }
  const bool case1 = r1.lambda <= r2.gamma;
  const bool case2 = r2.lambda <= r1.gamma;
  if (case1 && case2) {
    throw InconsistencyError(
        "lambda1 <= gamma2 and lambda2 <= gamma1 both hold although the small-gain ratio is " +
        fmt(ratio));
  }
  const double inf = std::numeric_limits<double>::infinity();
  CompositionWeights w;
  if (case1) {
    const double lo = r2.gamma / r1.lambda;
    const double hi = r1.gamma > 0.0 ? r2.lambda / r1.gamma : inf;
    w = {rule(lo, hi), 1.0};
  } else if (case2) {
    const double lo = r1.gamma / r2.lambda;
    const double hi = r2.gamma > 0.0 ? r1.lambda / r2.gamma : inf;
    w = {1.0, rule(lo, hi)};
  }
  if (auto bad = validate_alphas(w, r1, r2, margin); !bad.empty()) {
    std::string msg = "selected weights (" + fmt(w.alpha1) + ", " + fmt(w.alpha2) +
                      ") fail validation:";
    for (const auto& v : bad) msg += " " + describe(v.which) + " (" + fmt(v.value) + ")";
    throw InconsistencyError(msg);
  }
  return w;
}

CompositionWeights select_alphas(const Certificate& c1, const Certificate& c2,
                                 const IntervalRule& rule, double margin) {
  return select_alphas(c1.rates(), c2.rates(), rule, margin);
}

std::string describe(Inequality which) {
  switch (which) {
    case Inequality::Alpha1AtLeastOne: return "alpha1 >= 1";
    case Inequality::Alpha2AtLeastOne: return "alpha2 >= 1";
    case Inequality::SlackOne: return "alpha1*lambda1 - alpha2*gamma2 > 0";
    case Inequality::SlackTwo: return "alpha2*lambda2 - alpha1*gamma1 > 0";
  }
  return {};
}

std::vector<InequalityViolation> validate_alphas(CompositionWeights w, Rates r1, Rates r2,
                                                 double margin) {
  std::vector<InequalityViolation> out;
  if (!(w.alpha1 >= 1.0)) out.push_back({Inequality::Alpha1AtLeastOne, w.alpha1});
  if (!(w.alpha2 >= 1.0)) out.push_back({Inequality::Alpha2AtLeastOne, w.alpha2});
  const double s1 = w.alpha1 * r1.lambda - w.alpha2 * r2.gamma;
  const double s2 = w.alpha2 * r2.lambda - w.alpha1 * r1.gamma;
  if (!(s1 > margin)) out.push_back({Inequality::SlackOne, s1});
  if (!(s2 > margin)) out.push_back({Inequality::SlackTwo, s2});
  return out;
}

std::vector<InequalityViolation> validate_alphas(CompositionWeights w, const Certificate& c1,
                                                 const Certificate& c2, double margin) {
  return validate_alphas(w, c1.rates(), c2.rates(), margin);
}

Rates composed_rates(Rates r1, Rates r2, CompositionWeights w, double margin) {
  check_rates(r1);
  check_rates(r2);
  if (auto bad = validate_alphas(w, r1, r2, margin); !bad.empty()) {
    std::string msg = "invalid composition weights (" + fmt(w.alpha1) + ", " + fmt(w.alpha2) +
                      "):";
    for (const auto& v : bad) msg += " " + describe(v.which) + " violated;";
    msg.pop_back();
    throw InvalidWeightsError(msg);
  }
  const double s1 = w.alpha1 * r1.lambda - w.alpha2 * r2.gamma;
  const double s2 = w.alpha2 * r2.lambda - w.alpha1 * r1.gamma;
  return {std::min(s1 / w.alpha1, s2 / w.alpha2), w.alpha1 * r1.gamma + w.alpha2 * r2.gamma};
}

Certificate compose(const Certificate& c1, const Certificate& c2, CompositionWeights w,
                    double margin) {
  // With v1 = x2 and v2 = x1, each certificate's input is [v_i, w_i], so
  // q1 = m1 - n2 and q2 = m2 - n1.
  if (c1.m() < c2.n() || c2.m() < c1.n()) {
    throw DimensionError("certificate input dimensions (" + std::to_string(c1.m()) + ", " +
                         std::to_string(c2.m()) + ") cannot hold the partner states (" +
                         std::to_string(c2.n()) + ", " + std::to_string(c1.n()) + ")");
  }
  const Rates r = composed_rates(c1.rates(), c2.rates(), w, margin);
  const std::size_t n1 = c1.n();
  auto shift = [n1](const VarRef& ref) { return VarRef{ref.family, n1 + ref.index}; };
  Expr V = constant(w.alpha1) * c1.V() + constant(w.alpha2) * rename(c2.V(), shift);
  return Certificate(std::move(V), r.lambda, r.gamma, n1 + c2.n(),
                     (c1.m() - c2.n()) + (c2.m() - n1));
}

Certificate compose(const Certificate& c1, const Certificate& c2, CompositionWeights w,
                    const Interconnection& ic, double margin) {
  auto check = [](const Certificate& c, const Subsystem& s, const char* which) {
    if (c.n() != s.n() || c.m() != s.p() + s.q()) {
      throw DimensionError(std::string("certificate ") + which + " has (n, m) = (" +
                           std::to_string(c.n()) + ", " + std::to_string(c.m()) +
                           ") but subsystem \"" + s.name() + "\" has (n, p + q) = (" +
                           std::to_string(s.n()) + ", " + std::to_string(s.p() + s.q()) + ")");
    }
  };
  check(c1, ic.left(), "1");
  check(c2, ic.right(), "2");
  return compose(c1, c2, w, margin);
}

namespace {

bool feasible(double a1, double a2, Rates r1, Rates r2, double margin) {
  return a1 >= 1.0 && a2 >= 1.0 && a1 * r1.lambda - a2 * r2.gamma > margin &&
         a2 * r2.lambda - a1 * r1.gamma > margin;
}

}  // namespace

std::vector<CompositionWeights> alpha_feasible_region_grid(Rates r1, Rates r2, AlphaGrid grid,
                                                           double margin) {
  if (grid.resolution < 2) throw Error("alpha grid needs at least 2 points per axis");
  if (!(grid.alpha_max > 1.0)) throw Error("alpha grid upper bound must exceed 1");
  std::vector<CompositionWeights> out;
  const double step = (grid.alpha_max - 1.0) / static_cast<double>(grid.resolution - 1);
  for (std::size_t i = 0; i < grid.resolution; ++i) {
    const double a1 = 1.0 + static_cast<double>(i) * step;
    for (std::size_t j = 0; j < grid.resolution; ++j) {
      const double a2 = 1.0 + static_cast<double>(j) * step;
      if (feasible(a1, a2, r1, r2, margin)) out.push_back({a1, a2});
    }
  }
  return out;
}

}  // namespace bisim
