#include "bisim/certify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace bisim {
namespace {

constexpr Rates R(double lambda, double gamma) { return {lambda, gamma}; }

bool violates(const std::vector<InequalityViolation>& v, Inequality which) {
  return std::any_of(v.begin(), v.end(), [&](const auto& x) { return x.which == which; });
}

TEST(SmallGain, Ratio) {
  EXPECT_DOUBLE_EQ(small_gain_ratio(R(2, 1), R(2, 1)), 0.25);
  EXPECT_DOUBLE_EQ(small_gain_ratio(R(1, 2), R(1, 2)), 4.0);
  EXPECT_EQ(small_gain_ratio(R(3, 0), R(0.5, 7)), 0.0);
  EXPECT_EQ(small_gain_ratio(R(3, 2), R(0.5, 0)), 0.0);
  EXPECT_THROW(small_gain_ratio(R(0, 1), R(1, 1)), Error);
  EXPECT_THROW(small_gain_ratio(R(1, -1), R(1, 1)), Error);
}

TEST(SelectAlphas, FirstCaseMidpoint) {
  // lambda1 <= gamma2: alpha1 in (2, 5)
  const auto w = select_alphas(R(1, 1), R(5, 2));
  EXPECT_EQ(w.alpha1, 3.5);
  EXPECT_EQ(w.alpha2, 1.0);
}

TEST(SelectAlphas, SecondCaseMidpoint) {
  // lambda2 <= gamma1: alpha2 in (gamma1/lambda2, lambda1/gamma2) = (2, 5)
  const auto w = select_alphas(R(5, 2), R(1, 1));
  EXPECT_EQ(w.alpha1, 1.0);
  EXPECT_EQ(w.alpha2, 3.5);
}

TEST(SelectAlphas, OtherCasesUseUnitWeights) {
  const auto w = select_alphas(R(2, 1), R(2, 1));
  EXPECT_EQ(w.alpha1, 1.0);
  EXPECT_EQ(w.alpha2, 1.0);
}

TEST(SelectAlphas, UnboundedIntervalWhenPartnerGainIsZero) {
  // lambda1 <= gamma2 with gamma1 = 0: alpha1 in (4, inf)
  const auto w = select_alphas(R(0.5, 0), R(1, 2));
  EXPECT_EQ(w.alpha1, 8.0);
  EXPECT_TRUE(validate_alphas(w, R(0.5, 0), R(1, 2)).empty());
}

TEST(SelectAlphas, CustomIntervalRule) {
  auto lower_quarter = [](double lo, double hi) { return lo + 0.25 * (hi - lo); };
  const auto w = select_alphas(R(1, 1), R(5, 2), lower_quarter);
  EXPECT_EQ(w.alpha1, 2.75);
  auto outside = [](double lo, double) { return lo; };
  EXPECT_THROW(select_alphas(R(1, 1), R(5, 2), outside), InconsistencyError);
}

TEST(SelectAlphas, SmallGainViolation) {
  try {
    select_alphas(R(1, 2), R(1, 2));
    FAIL();
  } catch (const SmallGainError& e) {
    EXPECT_EQ(e.ratio(), 4.0);
  }
  EXPECT_THROW(select_alphas(R(1, 1), R(1, 1)), SmallGainError);
}

TEST(ValidateAlphas, Examples) {
  EXPECT_TRUE(validate_alphas({1, 1}, R(2, 1), R(2, 1)).empty());

  const auto bad = validate_alphas({1, 1}, R(1, 1), R(5, 2));
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].which, Inequality::SlackOne);
  EXPECT_DOUBLE_EQ(bad[0].value, -1.0);

  EXPECT_TRUE(violates(validate_alphas({0.5, 1}, R(2, 1), R(2, 1)), Inequality::Alpha1AtLeastOne));
  EXPECT_TRUE(violates(validate_alphas({1, 0.5}, R(2, 1), R(2, 1)), Inequality::Alpha2AtLeastOne));
  EXPECT_EQ(describe(Inequality::Alpha1AtLeastOne), "alpha1 >= 1");
}

TEST(ValidateAlphas, MarginRejectsBoundary) {
  // slack one is exactly 0 at alpha1 = 2
  EXPECT_TRUE(violates(validate_alphas({2, 1}, R(1, 1), R(5, 2)), Inequality::SlackOne));
  EXPECT_TRUE(violates(validate_alphas({2 + 1e-10, 1}, R(1, 1), R(5, 2)), Inequality::SlackOne));
  EXPECT_TRUE(validate_alphas({2 + 1e-10, 1}, R(1, 1), R(5, 2), 0.0).empty());
}

TEST(ComposedRates, Examples) {
  const Rates a = composed_rates(R(1, 1), R(5, 2), {3.5, 1});
  EXPECT_NEAR(a.lambda, 3.0 / 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(a.gamma, 5.5);

  const Rates b = composed_rates(R(2, 1), R(2, 1), {1, 1});
  EXPECT_DOUBLE_EQ(b.lambda, 1.0);
  EXPECT_DOUBLE_EQ(b.gamma, 2.0);

  const Rates c = composed_rates(R(3, 0), R(0.7, 0), {1, 1});
  EXPECT_DOUBLE_EQ(c.lambda, 0.7);
  EXPECT_EQ(c.gamma, 0.0);

  EXPECT_THROW(composed_rates(R(1, 1), R(5, 2), {1, 1}), InvalidWeightsError);
}

TEST(Compose, BuildsWeightedSumOverShiftedStates) {
  const Certificate c1 = Certificate::parse("sqrt((x[0]-xp[0])^2)", 1, 1, 1, 2);
  const Certificate c2 = Certificate::parse("abs(x[0]-xp[0])", 5, 2, 1, 1);
  const Certificate c = compose(c1, c2, {3.5, 1});
  EXPECT_EQ(c.n(), 2u);
  EXPECT_EQ(c.m(), 1u);  // q1 = 2 - 1, q2 = 1 - 1
  EXPECT_EQ(to_string(c.V()), "3.5*sqrt((x[0]-xp[0])^2)+1*abs(x[1]-xp[1])");
  EXPECT_NEAR(c.lambda(), 3.0 / 7.0, 1e-15);
  EXPECT_EQ(c.gamma(), 5.5);
  const VarEnv env{{"x", {1.0, -2.0}}, {"xp", {0.0, 1.0}}};
  EXPECT_DOUBLE_EQ(eval(c.V(), env), 3.5 * 1 + 3);
}

TEST(Compose, ChecksMetadataAgainstInterconnection) {
  const Interconnection ic(Subsystem::parse("A", 1, 1, 1, {"-x[0]+v[0]+w[0]"}),
                           Subsystem::parse("B", 1, 1, 0, {"-5*x[0]+2*v[0]"}));
  const Certificate c1 = Certificate::parse("abs(x[0]-xp[0])", 1, std::sqrt(2.0), 1, 2);
  const Certificate c2 = Certificate::parse("abs(x[0]-xp[0])", 5, 2, 1, 1);
  const auto w = select_alphas(c1, c2);
  const Certificate c = compose(c1, c2, w, ic);
  EXPECT_EQ(c.m(), interconnect(ic).m());
  const Certificate wrong_m = Certificate::parse("abs(x[0]-xp[0])", 1, std::sqrt(2.0), 1, 1);
  EXPECT_THROW(compose(wrong_m, c2, w, ic), DimensionError);
}

TEST(Compose, InvalidWeightsAreRejected) {
  const Certificate c1 = Certificate::parse("abs(x[0]-xp[0])", 1, 1, 1, 1);
  const Certificate c2 = Certificate::parse("abs(x[0]-xp[0])", 5, 2, 1, 1);
  EXPECT_THROW(compose(c1, c2, {1, 1}), InvalidWeightsError);
}

TEST(CertificateInvariants, RatesAndFamilies) {
  EXPECT_THROW(Certificate::parse("abs(x[0]-xp[0])", 0, 1, 1, 1), Error);
  EXPECT_THROW(Certificate::parse("abs(x[0]-xp[0])", 1, -0.1, 1, 1), Error);
  EXPECT_THROW(Certificate::parse("abs(x[0]-u[0])", 1, 1, 1, 1), ParseError);
  EXPECT_THROW(Certificate::parse("abs(x[1]-xp[0])", 1, 1, 1, 1), ParseError);
}

TEST(FeasibleGrid, EmptyWithoutSmallGain) {
  EXPECT_TRUE(alpha_feasible_region_grid(R(1, 2), R(1, 2)).empty());
  EXPECT_TRUE(alpha_feasible_region_grid(R(1, 2), R(1, 2), {50, 5.0}).empty());
}

TEST(FeasibleGrid, ContainsUnitWeightsInSymmetricCase) {
  const auto pts = alpha_feasible_region_grid(R(2, 1), R(2, 1), {21, 3.0});
  EXPECT_TRUE(std::any_of(pts.begin(), pts.end(),
                          [](const auto& w) { return w.alpha1 == 1.0 && w.alpha2 == 1.0; }));
}

TEST(FeasibleGrid, UnitRowMatchesOpenInterval) {
  // [1, 6] with step 0.1
  const auto pts = alpha_feasible_region_grid(R(1, 1), R(5, 2), {51, 6.0});
  ASSERT_FALSE(pts.empty());
  std::vector<double> row;
  for (const auto& w : pts) {
    if (w.alpha2 == 1.0) row.push_back(w.alpha1);
  }
  // On the alpha2 = 1 row the inequalities reduce to 2 < alpha1 < 5.
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 51; ++i) {
    const double a1 = 1.0 + static_cast<double>(i) * 0.1;
    if (a1 - 2.0 > 1e-9 && 5.0 - a1 > 1e-9) ++expected;
  }
  EXPECT_EQ(expected, 29u);
  EXPECT_EQ(row.size(), expected);
  for (double a1 : row) {
    EXPECT_GT(a1, 2.0);
    EXPECT_LT(a1, 5.0);
  }
}

TEST(FeasibleGrid, RejectsDegenerateGrid) {
  EXPECT_THROW(alpha_feasible_region_grid(R(1, 1), R(1, 0), {1, 5.0}), Error);
  EXPECT_THROW(alpha_feasible_region_grid(R(1, 1), R(1, 0), {10, 1.0}), Error);
}

// Returns a tuple whose ratio lies in the requested range.
std::pair<Rates, Rates> random_tuple(std::mt19937_64& rng, bool want_small_gain) {
  std::uniform_real_distribution<double> lam(0.01, 10.0), gam(0.0, 10.0);
  for (;;) {
    const Rates r1{lam(rng), gam(rng)};
    const Rates r2{lam(rng), gam(rng)};
    const double ratio = small_gain_ratio(r1, r2);
    if (want_small_gain ? ratio < 1.0 - 1e-6 : ratio >= 1.0) return {r1, r2};
  }
}

TEST(CertifyProperty, SelectionIsSound) {
  std::mt19937_64 rng(2024);
  int case1 = 0, case2 = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto [r1, r2] = random_tuple(rng, true);
    const auto w = select_alphas(r1, r2);
    EXPECT_TRUE(validate_alphas(w, r1, r2).empty());
    case1 += r1.lambda <= r2.gamma;
    case2 += r2.lambda <= r1.gamma;
  }
  // every configuration gets exercised
  EXPECT_GT(case1, 50);
  EXPECT_GT(case2, 50);
  EXPECT_LT(case1 + case2, 950);
}

TEST(CertifyProperty, NoFeasibleWeightsWithoutSmallGain) {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 1000; ++k) {
    const auto [r1, r2] = random_tuple(rng, false);
    EXPECT_TRUE(alpha_feasible_region_grid(r1, r2, {200, 50.0}).empty());
    EXPECT_THROW(select_alphas(r1, r2), SmallGainError);
  }
}

// With a comfortable margin the feasible cone is wide enough for the grid to
// see it.
TEST(CertifyProperty, GridFindsWeightsWhenSmallGainHolds) {
  std::mt19937_64 rng(31);
  int checked = 0;
  while (checked < 200) {
    const auto [r1, r2] = random_tuple(rng, true);
    if (small_gain_ratio(r1, r2) > 0.5) continue;
    const auto w = select_alphas(r1, r2);
    if (std::max(w.alpha1, w.alpha2) > 10.0) continue;
    EXPECT_FALSE(alpha_feasible_region_grid(r1, r2).empty());
    ++checked;
  }
}

TEST(CertifyProperty, ComposedRatesArePositive) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 200; ++k) {
    const auto [r1, r2] = random_tuple(rng, true);
    const auto pts = alpha_feasible_region_grid(r1, r2, {20, 50.0});
    for (const auto& w : pts) {
      const Rates r = composed_rates(r1, r2, w);
      EXPECT_GT(r.lambda, 0.0);
      EXPECT_GE(r.gamma, 0.0);
    }
    const Rates sel = composed_rates(r1, r2, select_alphas(r1, r2));
    EXPECT_GT(sel.lambda, 0.0);
  }
}

}  // namespace
}  // namespace bisim
