#include "bisim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <thread>

namespace bisim {

namespace detail {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : state_(mix64(seed ^ mix64(stream + kGolden))) {}

std::uint64_t CounterRng::next() {
  state_ += kGolden;
  return mix64(state_);
}

double CounterRng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

}  // namespace detail

double default_bound_tolerance(double h) { return 1e-4 + 10.0 * std::pow(h, 4); }

SampleBox SampleBox::uniform(std::size_t n, std::size_t m, Interval state, Interval input,
                             std::size_t samples, std::uint64_t seed) {
  SampleBox box;
  box.x.assign(n, state);
  box.xp.assign(n, state);
  box.u.assign(m, input);
  box.up.assign(m, input);
  box.samples = samples;
  box.seed = seed;
  return box;
}

void SampleBox::validate() const {
  if (samples == 0) throw Error("sample count must be at least 1");
  auto check = [](const std::vector<Interval>& ivs, const char* name) {
    for (std::size_t i = 0; i < ivs.size(); ++i) {
      const auto& iv = ivs[i];
      if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo <= iv.hi)) {
        throw Error(std::string("sample box for ") + name + "[" + std::to_string(i) +
                    "] must be a finite nonempty interval");
      }
    }
  };
  check(x, "x");
  check(xp, "xp");
  check(u, "u");
  check(up, "up");
  if (x.size() != xp.size()) throw DimensionError("sample box x and xp differ in length");
  if (u.size() != up.size()) throw DimensionError("sample box u and up differ in length");
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Cond1: return "cond1";
    case ViolationKind::Cond2: return "cond2";
    case ViolationKind::Bound: return "bound";
  }
  return {};
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

void draw(detail::CounterRng& rng, const std::vector<Interval>& box, std::vector<double>& out) {
  out.resize(box.size());
  for (std::size_t i = 0; i < box.size(); ++i) out[i] = rng.uniform(box[i]);
}

struct SamplePoint {
  std::vector<double> x, xp, u, up;
};

enum class Outcome { Ok, Redraw };

struct Evaluation {
  double lhs = 0.0;
  double rhs = 0.0;
};

// Outcome of one worker over a contiguous range of sample indices.
struct Partial {
  CheckResult result;
  std::optional<std::size_t> error_index;
  std::string error_message;
};

// Runs `eval(point, out)` for every sample index, redrawing the same
// sample's stream while it returns Outcome::Redraw. Splits the index range
// into contiguous chunks, one per worker, and merges in index order so the
// result is independent of the worker count.
template <typename MakeEvaluator>
CheckResult run_sampler(const SampleBox& box, double tol, unsigned workers, ViolationKind kind,
                        bool draw_inputs, std::size_t redraw_budget,
                        MakeEvaluator make_evaluator) {
  box.validate();
  if (!(tol >= 0.0)) throw Error("tolerance must be >= 0");
  const std::size_t N = box.samples;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, N));

  std::vector<Partial> partials(workers);
  auto work = [&](unsigned w) {
    const std::size_t begin = N * w / workers;
    const std::size_t end = N * (w + 1) / workers;
    auto evaluator = make_evaluator();
    Partial& part = partials[w];
    CheckResult& r = part.result;
    r.worst_margin = -std::numeric_limits<double>::infinity();
    SamplePoint p;
    for (std::size_t i = begin; i < end; ++i) {
      detail::CounterRng rng(box.seed, i);
      Evaluation ev;
      try {
        for (;;) {
          draw(rng, box.x, p.x);
          draw(rng, box.xp, p.xp);
          if (draw_inputs) {
            draw(rng, box.u, p.u);
            draw(rng, box.up, p.up);
          }
          if (evaluator(p, ev) == Outcome::Ok) break;
          // No later sample can matter once this chunk alone is over budget.
          if (++r.resamples > redraw_budget) return;
        }
      } catch (const std::exception& e) {
        part.error_index = i;
        part.error_message = e.what();
        return;
      }
      const double margin = ev.lhs - ev.rhs;
      r.worst_margin = std::max(r.worst_margin, margin);
      if (margin > tol) {
        ++r.violations;
        Violation v{kind, i, 0.0, {}, p.x, p.xp, p.u, p.up, ev.lhs, ev.rhs, margin};
        if (!r.first) r.first = v;
        if (!r.worst || margin > r.worst->margin) r.worst = std::move(v);
      }
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }

  CheckResult out;
  out.samples = N;
  out.worst_margin = -std::numeric_limits<double>::infinity();
  auto exhausted = [&] {
    return Error("resample budget of " + std::to_string(redraw_budget) +
                 " exhausted at non-differentiable points");
  };
  for (auto& part : partials) {
    // Matches the sequential order: a chunk stops at its first error or
    // when the running redraw count passes the budget.
    if (out.resamples + part.result.resamples > redraw_budget) throw exhausted();
    if (part.error_index) {
      throw SampleError("sample " + std::to_string(*part.error_index) + ": " +
                            part.error_message,
                        *part.error_index);
    }
    const CheckResult& r = part.result;
    out.resamples += r.resamples;
    out.violations += r.violations;
    out.worst_margin = std::max(out.worst_margin, r.worst_margin);
    if (!out.first && r.first) out.first = r.first;
    if (r.worst && (!out.worst || r.worst->margin > out.worst->margin)) out.worst = r.worst;
  }
  out.passed = out.violations == 0;
  return out;
}

std::string describe_point(const SamplePoint& p, bool inputs) {
  auto vec = [](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(v[i]);
    }
    return s + "]";
  };
  std::string s = "x = " + vec(p.x) + ", xp = " + vec(p.xp);
  if (inputs) s += ", u = " + vec(p.u) + ", up = " + vec(p.up);
  return s;
}

}  // namespace

CheckResult check_cond1(const Certificate& cert, const SampleBox& box, CheckOptions opts) {
  if (box.x.size() != cert.n()) {
    throw DimensionError("sample box has " + std::to_string(box.x.size()) +
                         " state components, certificate has n = " + std::to_string(cert.n()));
  }
  auto make = [&cert] {
    return [&cert, env = VarEnv{}](const SamplePoint& p, Evaluation& ev) mutable {
      env.bind("x", p.x);
      env.bind("xp", p.xp);
      try {
        ev.rhs = eval(cert.V(), env);
      } catch (const EvalError& e) {
        throw Error(std::string(e.what()) + " at " + describe_point(p, false));
      }
      ev.lhs = distance(p.x, p.xp);
      return Outcome::Ok;
    };
  };
  return run_sampler(box, opts.tol, opts.workers, ViolationKind::Cond1, false, 0, make);
}

CheckResult check_cond2(const Certificate& cert, const System& s, const SampleBox& box,
                        CheckOptions opts) {
  if (cert.n() != s.n() || cert.m() != s.m()) {
    throw DimensionError("certificate has (n, m) = (" + std::to_string(cert.n()) + ", " +
                         std::to_string(cert.m()) + "), system \"" + s.name() + "\" has (" +
                         std::to_string(s.n()) + ", " + std::to_string(s.m()) + ")");
  }
  if (box.x.size() != s.n() || box.u.size() != s.m()) {
    throw DimensionError("sample box dimensions do not match system \"" + s.name() + "\"");
  }
  const std::size_t n = s.n();
  const double lambda = cert.lambda();
  const double gamma = cert.gamma();
  auto make = [&, n, lambda, gamma] {
    struct State {
      VarEnv env;
      FieldEvaluator f;
      std::vector<double> gx, gxp, fx, fxp;
    };
    auto st = std::make_shared<State>(State{VarEnv{}, FieldEvaluator(s), std::vector<double>(n),
                                            std::vector<double>(n), std::vector<double>(n),
                                            std::vector<double>(n)});
    return [&cert, st, lambda, gamma](const SamplePoint& p, Evaluation& ev) {
      st->env.bind("x", p.x);
      st->env.bind("xp", p.xp);
      double V = 0.0;
      try {
        V = eval_with_grad(cert.V(), "x", st->env, st->gx);
        eval_with_grad(cert.V(), "xp", st->env, st->gxp);
      } catch (const EvalError& e) {
        if (e.kind() == EvalError::Kind::NonDifferentiable) return Outcome::Redraw;
        throw Error(std::string(e.what()) + " at " + describe_point(p, true));
      }
      try {
        st->f(p.x, p.u, st->fx);
        st->f(p.xp, p.up, st->fxp);
      } catch (const EvalError& e) {
        throw Error(std::string(e.what()) + " at " + describe_point(p, true));
      }
      double lhs = 0.0;
      for (std::size_t i = 0; i < st->fx.size(); ++i) {
        lhs += st->gx[i] * st->fx[i] + st->gxp[i] * st->fxp[i];
      }
      ev.lhs = lhs;
      ev.rhs = -lambda * V + gamma * distance(p.u, p.up);
      return Outcome::Ok;
    };
  };
  return run_sampler(box, opts.tol, opts.workers, ViolationKind::Cond2, true, 10 * box.samples,
                     make);
}

Envelope envelope(Rates rates, double V0, double u_gap, std::span<const double> times) {
  if (!(rates.lambda > 0.0)) throw Error("envelope needs lambda > 0");
  Envelope env;
  env.times.assign(times.begin(), times.end());
  env.eta.resize(times.size());
  const double asymptote = rates.gamma / rates.lambda * u_gap;
  for (std::size_t k = 0; k < times.size(); ++k) {
    env.eta[k] = std::exp(-rates.lambda * times[k]) * V0 + asymptote;
  }
  return env;
}

Envelope envelope(const Certificate& cert, double V0, double u_gap,
                  std::span<const double> times) {
  return envelope(cert.rates(), V0, u_gap, times);
}

BoundResult check_bound(const Certificate& cert, const System& s, std::span<const double> x0,
                        std::span<const double> x0p, const InputSignal& u,
                        const InputSignal& up, double h, double T, double tol) {
  if (cert.n() != s.n() || cert.m() != s.m()) {
    throw DimensionError("certificate has (n, m) = (" + std::to_string(cert.n()) + ", " +
                         std::to_string(cert.m()) + "), system \"" + s.name() + "\" has (" +
                         std::to_string(s.n()) + ", " + std::to_string(s.m()) + ")");
  }
  if (tol < 0.0) tol = default_bound_tolerance(h);

  BoundResult r;
  r.first_run = integrate(s, x0, u, h, T);
  r.second_run = integrate(s, x0p, up, h, T);
  r.u_gap = sup_input_gap(u, up, h, T);

  const auto& times = r.first_run.times;
  VarEnv env;
  r.gap.resize(times.size());
  r.V.resize(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto& xa = r.first_run.states[k];
    const auto& xb = r.second_run.states[k];
    env.bind("x", xa);
    env.bind("xp", xb);
    r.gap[k] = distance(xa, xb);
    try {
      r.V[k] = eval(cert.V(), env);
    } catch (const EvalError& e) {
      throw Error("evaluating V at t = " + std::to_string(times[k]) + ": " + e.what());
    }
  }
  r.V0 = r.V.front();
  r.env = envelope(cert, r.V0, r.u_gap, times);

  for (std::size_t k = 0; k < times.size(); ++k) {
    auto flag = [&](double lhs, double rhs, const char* detail) {
      if (lhs - rhs <= tol) return;
      ++r.violations;
      if (r.first) return;
      Violation v;
      v.kind = ViolationKind::Bound;
      v.sample = k;
      v.time = times[k];
      v.detail = detail;
      v.x = r.first_run.states[k];
      v.xp = r.second_run.states[k];
      v.u = r.first_run.inputs[k];
      v.up = r.second_run.inputs[k];
      v.lhs = lhs;
      v.rhs = rhs;
      v.margin = lhs - rhs;
      r.first = std::move(v);
    };
    flag(r.gap[k], r.V[k], "||x - xp|| <= V");
    flag(r.V[k], r.env.eta[k], "V <= eta");
  }
  r.passed = r.violations == 0;
  return r;
}

}  // namespace bisim
