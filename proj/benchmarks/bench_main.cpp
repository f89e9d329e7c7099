#include <benchmark/benchmark.h>

#include <cmath>

#include "bisim/certify.hpp"
#include "bisim/sim.hpp"
#include "bisim/verify.hpp"

namespace {

using namespace bisim;

const FamilySpec kX3[] = {{"x", 3}};

Expr sample_expr() {
  return parse("sin(x[0]) * exp(tanh(x[1] - x[2])) + sqrt(1 + (x[0] * x[2])^2) / (2 + cos(x[1]))",
               kX3);
}

void BM_Eval(benchmark::State& state) {
  const Expr e = sample_expr();
  const VarEnv env{{"x", {0.3, -1.2, 0.7}}};
  for (auto _ : state) benchmark::DoNotOptimize(eval(e, env));
}
BENCHMARK(BM_Eval);

void BM_Grad(benchmark::State& state) {
  const Expr e = sample_expr();
  const VarEnv env{{"x", {0.3, -1.2, 0.7}}};
  std::vector<double> g(3);
  for (auto _ : state) benchmark::DoNotOptimize(eval_with_grad(e, "x", env, g));
}
BENCHMARK(BM_Grad);

void BM_Parse(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(sample_expr());
}
BENCHMARK(BM_Parse);

Interconnection scalar_pair() {
  return Interconnection(Subsystem::parse("S1", 1, 1, 1, {"-x[0] + v[0] + w[0]"}),
                         Subsystem::parse("S2", 1, 1, 1, {"-5*x[0] + 2*v[0]"}));
}

void BM_CheckCond2(benchmark::State& state) {
  const auto ic = scalar_pair();
  const auto V1 = Certificate::parse("abs(x[0]-xp[0])", 1, std::sqrt(2.0), 1, 2);
  const auto V2 = Certificate::parse("abs(x[0]-xp[0])", 5, 2, 1, 2);
  const Certificate V = compose(V1, V2, select_alphas(V1, V2), ic);
  const System s = interconnect(ic);
  const auto box = SampleBox::uniform(2, 2, {}, {}, static_cast<std::size_t>(state.range(0)));
  const CheckOptions opts{kDefaultConditionTolerance, static_cast<unsigned>(state.range(1))};
  for (auto _ : state) benchmark::DoNotOptimize(check_cond2(V, s, box, opts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CheckCond2)->Args({10000, 1})->Args({10000, 0})->Unit(benchmark::kMillisecond);

void BM_Integrate(benchmark::State& state) {
  const System s = interconnect(scalar_pair());
  const std::vector<double> x0{1.0, -1.0};
  const auto u = InputSignal::parse("u", {"sin(t)", "0"});
  for (auto _ : state) benchmark::DoNotOptimize(integrate(s, x0, u, 1e-3, 10.0));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_Integrate)->Unit(benchmark::kMillisecond);

void BM_FeasibleGrid(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(alpha_feasible_region_grid(Rates{1, 1}, Rates{5, 2}));
  }
}
BENCHMARK(BM_FeasibleGrid)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
