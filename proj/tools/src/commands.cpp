#include "bisim/cli/commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "bisim/cli/model_file.hpp"
#include "bisim/verify.hpp"

namespace bisim::cli {

using Json = nlohmann::ordered_json;

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string format_csv_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string model;
  std::string target;  // interconnection, certificate or scenario
  std::string certificate;
  std::string out_path;
  std::string alphas;
  std::size_t samples = kDefaultSamples;
  std::uint64_t seed = kDefaultSeed;
  std::string box = "-10,10";
  std::string ubox;
  double tol = kDefaultConditionTolerance;
  double bound_tol = -1.0;
  unsigned workers = 1;
  std::optional<double> step;
  std::optional<double> horizon;
};

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || res.ec != std::errc{} || res.ptr != item.data() + item.size() ||
        !std::isfinite(v)) {
      throw UsageError(std::string(flag) + ": \"" + text + "\" is not a comma-separated list of numbers");
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// "lo,hi", or a single half-width w meaning [-w, w].
Interval parse_box(const std::string& text, const char* flag) {
  const auto v = parse_list(text, flag);
  Interval iv;
  if (v.size() == 1) {
    iv = {-std::abs(v[0]), std::abs(v[0])};
  } else if (v.size() == 2) {
    iv = {v[0], v[1]};
  } else {
    throw UsageError(std::string(flag) + " expects lo,hi or a half-width");
  }
  if (!(iv.lo <= iv.hi)) throw UsageError(std::string(flag) + ": lower end exceeds upper end");
  return iv;
}

template <typename T, typename Name>
std::string available(const std::vector<T>& items, Name name_of) {
  if (items.empty()) return "none";
  std::string s;
  for (const auto& item : items) {
    if (!s.empty()) s += ", ";
    s += name_of(item);
  }
  return s;
}

const ScenarioEntry& scenario(const ModelFile& m, const std::string& name) {
  if (const auto* s = m.find_scenario(name)) return *s;
  throw ModelError("no scenario named \"" + name + "\"; available: " +
                   available(m.scenarios, [](const auto& s) { return s.name; }));
}

const CertificateEntry& certificate(const ModelFile& m, const std::string& name) {
  if (const auto* c = m.find_certificate(name)) return *c;
  throw ModelError("no certificate named \"" + name + "\"; available: " +
                   available(m.certificates, [](const auto& c) { return c.name; }));
}

// Explicit pair first, then a certificate targeting the subsystem itself,
// then one targeting the system it was repartitioned from.
const CertificateEntry& certificate_for(const ModelFile& m, const InterconnectionEntry& ic,
                                        bool left) {
  if (ic.certificates) {
    return certificate(m, left ? ic.certificates->first : ic.certificates->second);
  }
  const std::string& sub = left ? ic.left : ic.right;
  auto unique_target = [&](const std::string& target) -> const CertificateEntry* {
    const CertificateEntry* found = nullptr;
    for (const auto& c : m.certificates) {
      if (c.target != target) continue;
      if (found) {
        throw ModelError("several certificates target \"" + target +
                         "\"; name them in the interconnection's \"certificates\"");
      }
      found = &c;
    }
    return found;
  };
  if (const auto* c = unique_target(sub)) return *c;
  const auto* entry = m.find_subsystem(sub);
  if (entry && entry->derived) {
    if (const auto* c = unique_target(entry->derived->system)) return *c;
  }
  throw ModelError("no certificate for subsystem \"" + sub + "\"");
}

std::string vec(std::span<const double> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_real(v[i]);
  }
  return s + "]";
}

Json real_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json violation_json(const Violation& v) {
  Json j;
  j["kind"] = to_string(v.kind);
  if (v.kind == ViolationKind::Bound) {
    j["time"] = v.time;
    j["step"] = v.sample;
    j["detail"] = v.detail;
  } else {
    j["sample"] = v.sample;
  }
  Json w;
  w["x"] = v.x;
  w["xp"] = v.xp;
  if (v.kind != ViolationKind::Cond1) {
    w["u"] = v.u;
    w["up"] = v.up;
  }
  j["witness"] = std::move(w);
  j["lhs"] = real_json(v.lhs);
  j["rhs"] = real_json(v.rhs);
  j["margin"] = real_json(v.margin);
  return j;
}

Json condition_json(const CheckResult& r) {
  Json j;
  j["status"] = r.passed ? "pass" : "violation";
  j["samples"] = r.samples;
  j["resamples"] = r.resamples;
  j["violations"] = r.violations;
  j["worst_margin"] = real_json(r.worst_margin);
  j["first_violation"] = r.first ? violation_json(*r.first) : Json(nullptr);
  j["worst_violation"] = r.worst ? violation_json(*r.worst) : Json(nullptr);
  return j;
}

std::string describe(const Violation& v) {
  std::string s = to_string(v.kind) + " violated at sample " + std::to_string(v.sample) +
                  ": lhs = " + format_real(v.lhs) + ", rhs = " + format_real(v.rhs) +
                  ", margin = " + format_real(v.margin) + "; x = " + vec(v.x) +
                  ", xp = " + vec(v.xp);
  if (v.kind == ViolationKind::Cond2) s += ", u = " + vec(v.u) + ", up = " + vec(v.up);
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ModelError("cannot write " + path);
  f << text;
  if (!f) throw ModelError("error writing " + path);
}

// CSV to --out, or to `out` when no path is given. Returns the stream that
// should receive the human-readable status line.
std::ostream& emit(const Options& o, const std::string& text, std::ostream& out,
                   std::ostream& err) {
  if (o.out_path.empty()) {
    out << text;
    return err;
  }
  write_text(o.out_path, text);
  return out;
}

void csv_row(std::string& csv, std::initializer_list<std::span<const double>> parts) {
  bool first = true;
  for (const auto& part : parts) {
    for (double v : part) {
      if (!first) csv += ',';
      csv += format_csv_real(v);
      first = false;
    }
  }
  csv += '\n';
}

// A count of kScalar adds one bare column instead of name[0..count).
constexpr std::size_t kScalar = static_cast<std::size_t>(-1);

void csv_header(std::string& csv, std::initializer_list<std::pair<const char*, std::size_t>> cols) {
  csv += "t";
  for (const auto& [name, count] : cols) {
    if (count == kScalar) {
      csv += std::string(",") + name;
      continue;
    }
    for (std::size_t i = 0; i < count; ++i) csv += "," + std::string(name) + "[" + std::to_string(i) + "]";
  }
  csv += '\n';
}

int cmd_compose(const Options& o, std::ostream& out, std::ostream& err) {
  ModelFile m = load_model(o.model);
  const auto* entry = m.find_interconnection(o.target);
  if (!entry) {
    throw ModelError("no interconnection named \"" + o.target + "\"; available: " +
                     available(m.interconnections, [](const auto& c) { return c.name; }));
  }
  const InterconnectionEntry icd = *entry;
  const Interconnection ic(m.find_subsystem(icd.left)->subsystem,
                           m.find_subsystem(icd.right)->subsystem);
  const CertificateEntry c1 = certificate_for(m, icd, true);
  const CertificateEntry c2 = certificate_for(m, icd, false);

  const double ratio = small_gain_ratio(c1.certificate, c2.certificate);
  out << "interconnection: " << icd.name << " (" << icd.left << " * " << icd.right << ")\n";
  out << "certificates: " << c1.name << ", " << c2.name << "\n";
  out << "small-gain ratio: " << format_real(ratio) << "\n";
  if (!(ratio < 1.0)) {
    err << "error: small-gain condition fails: ratio = " << format_real(ratio) << " >= 1\n";
    return kExitSmallGain;
  }

  std::optional<CompositionWeights> w = icd.alphas;
  if (!o.alphas.empty()) {
    const auto a = parse_list(o.alphas, "--alphas");
    if (a.size() != 2) throw UsageError("--alphas expects a1,a2");
    w = CompositionWeights{a[0], a[1]};
  }
  const bool explicit_weights = w.has_value();
  if (w) {
    const auto bad = validate_alphas(*w, c1.certificate, c2.certificate);
    if (!bad.empty()) {
      err << "error: invalid alphas (" << format_real(w->alpha1) << ", "
          << format_real(w->alpha2) << "):\n";
      for (const auto& v : bad) {
        err << "  " << describe(v.which) << " violated (value " << format_real(v.value) << ")\n";
      }
      return kExitInvalidAlphas;
    }
  } else {
    w = select_alphas(c1.certificate, c2.certificate);
  }

  const Certificate c = compose(c1.certificate, c2.certificate, *w, ic);
  out << "alphas: " << format_real(w->alpha1) << ", " << format_real(w->alpha2)
      << (explicit_weights ? " (explicit)" : " (selected)") << "\n";
  out << "lambda: " << format_real(c.lambda()) << "\n";
  out << "gamma: " << format_real(c.gamma()) << "\n";
  if (!o.out_path.empty()) {
    m.put(interconnect(ic, icd.name));
    m.put(CertificateEntry{icd.name + "_cert", icd.name, c});
    m.validate();
    save_model(m, o.out_path);
    out << "wrote system \"" << icd.name << "\" and certificate \"" << icd.name
        << "_cert\" to " << o.out_path << "\n";
  }
  return kExitOk;
}

int cmd_check(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.samples == 0) throw UsageError("--samples must be at least 1");
  if (!(o.tol >= 0.0)) throw UsageError("--tol must be >= 0");
  const Interval state = parse_box(o.box, "--box");
  const Interval input = o.ubox.empty() ? state : parse_box(o.ubox, "--ubox");
  const ModelFile m = load_model(o.model);
  const CertificateEntry& c = certificate(m, o.target);
  const System s = m.resolve_system(c.target);
  const SampleBox box = SampleBox::uniform(s.n(), s.m(), state, input, o.samples, o.seed);
  const CheckOptions opts{o.tol, o.workers};
  const CheckResult r1 = check_cond1(c.certificate, box, opts);
  const CheckResult r2 = check_cond2(c.certificate, s, box, opts);
  const bool passed = r1.passed && r2.passed;

  std::string message;
  if (passed) {
    message = "no counterexample found in " + std::to_string(o.samples) + " samples";
  } else {
    message = "counterexample found:";
    for (const auto* r : {&r1, &r2}) {
      if (r->first) {
        message += (message.back() == ':' ? " " : "; ") + to_string(r->first->kind) +
                   " violated at sample " + std::to_string(r->first->sample);
      }
    }
  }

  Json report;
  report["certificate"] = c.name;
  report["target"] = c.target;
  report["lambda"] = c.certificate.lambda();
  report["gamma"] = c.certificate.gamma();
  report["samples"] = o.samples;
  report["seed"] = o.seed;
  report["tolerance"] = o.tol;
  report["box"] = {{"state", {state.lo, state.hi}}, {"input", {input.lo, input.hi}}};
  report["conditions"] = {{"cond1", condition_json(r1)}, {"cond2", condition_json(r2)}};
  report["verdict"] = passed ? "pass" : "violation";
  report["message"] = message;

  std::ostream& status = emit(o, report.dump(2) + "\n", out, err);
  for (const auto* r : {&r1, &r2}) {
    const std::string name = r == &r1 ? "cond1" : "cond2";
    if (r->first) {
      status << name << ": " << r->violations << " of " << r->samples << " samples violate; first "
             << describe(*r->first) << "\n";
    } else {
      status << name << ": pass, worst margin " << format_real(r->worst_margin) << "\n";
    }
  }
  status << message << "\n";
  return passed ? kExitOk : kExitViolation;
}

ScenarioEntry with_grid(const Options& o, ScenarioEntry sc) {
  if (o.step) sc.h = *o.step;
  if (o.horizon) sc.T = *o.horizon;
  grid_steps(sc.h, sc.T);
  return sc;
}

int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile m = load_model(o.model);
  const ScenarioEntry sc = with_grid(o, scenario(m, o.target));
  const System s = m.resolve_system(sc.system);
  const Trajectory a = integrate(s, sc.x0, sc.u, sc.h, sc.T);
  const Trajectory b = integrate(s, sc.x0p, sc.up, sc.h, sc.T);

  std::string csv;
  csv_header(csv, {{"x", s.n()}, {"xp", s.n()}, {"u", s.m()}, {"up", s.m()}});
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    const double t = a.times[k];
    csv_row(csv, {std::span(&t, 1), a.states[k], b.states[k], a.inputs[k], b.inputs[k]});
  }
  std::ostream& status = emit(o, csv, out, err);
  status << "simulated " << sc.name << ": " << a.times.size() << " grid points, h = "
         << format_real(sc.h) << ", T = " << format_real(sc.T) << "\n";
  return kExitOk;
}

int cmd_bound(const Options& o, std::ostream& out, std::ostream& err) {
  const ModelFile m = load_model(o.model);
  const ScenarioEntry sc = with_grid(o, scenario(m, o.target));
  const CertificateEntry& c = certificate(m, o.certificate);
  if (c.target != sc.system) {
    throw ModelError("certificate \"" + c.name + "\" targets \"" + c.target + "\" but scenario \"" +
                     sc.name + "\" uses \"" + sc.system + "\"");
  }
  const System s = m.resolve_system(sc.system);
  const BoundResult r =
      check_bound(c.certificate, s, sc.x0, sc.x0p, sc.u, sc.up, sc.h, sc.T, o.bound_tol);

  std::string csv;
  csv_header(csv, {{"x", s.n()}, {"xp", s.n()}, {"norm_gap", kScalar}, {"V", kScalar},
                   {"eta", kScalar}});
  const auto& times = r.first_run.times;
  for (std::size_t k = 0; k < times.size(); ++k) {
    csv_row(csv, {std::span(&times[k], 1), r.first_run.states[k], r.second_run.states[k],
                  std::span(&r.gap[k], 1), std::span(&r.V[k], 1), std::span(&r.env.eta[k], 1)});
  }
  std::ostream& status = emit(o, csv, out, err);
  if (r.passed) {
    status << "bound: pass at all " << times.size() << " grid points (V0 = " << format_real(r.V0)
           << ", input gap = " << format_real(r.u_gap) << ")\n";
    return kExitOk;
  }
  const Violation& v = *r.first;
  status << "bound: violation at t = " << format_real(v.time) << " (" << v.detail
         << "): lhs = " << format_real(v.lhs) << ", rhs = " << format_real(v.rhs)
         << ", margin = " << format_real(v.margin) << "; " << r.violations
         << " failed comparisons\n";
  return kExitViolation;
}

int cmd_info(const Options& o, std::ostream& out, std::ostream&) {
  const ModelFile m = load_model(o.model);
  out << "subsystems:\n";
  for (const auto& e : m.subsystems) {
    const auto& s = e.subsystem;
    out << "  " << s.name() << ": n = " << s.n() << ", p = " << s.p() << ", q = " << s.q();
    if (e.derived) out << " (from system " << e.derived->system << ")";
    out << "\n";
  }
  out << "systems:\n";
  for (const auto& s : m.systems) {
    out << "  " << s.name() << ": n = " << s.n() << ", m = " << s.m();
    if (s.provenance().kind == Provenance::Kind::Interconnection) {
      out << " (" << s.provenance().left << " * " << s.provenance().right << ")";
    }
    out << "\n";
  }
  out << "certificates:\n";
  for (const auto& c : m.certificates) {
    out << "  " << c.name << ": target " << c.target << ", lambda = "
        << format_real(c.certificate.lambda()) << ", gamma = "
        << format_real(c.certificate.gamma()) << "\n";
  }
  out << "interconnections:\n";
  for (const auto& ic : m.interconnections) {
    out << "  " << ic.name << ": " << ic.left << " * " << ic.right << "\n";
  }
  out << "scenarios:\n";
  for (const auto& sc : m.scenarios) {
    out << "  " << sc.name << ": system " << sc.system << ", h = " << format_real(sc.h)
        << ", T = " << format_real(sc.T) << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compose and check bisimulation functions of interconnected systems", "bisim"};
  app.require_subcommand(1);
  Options o;

  auto* compose = app.add_subcommand("compose", "Compose the certificates of an interconnection");
  compose->add_option("model", o.model, "Model file")->required();
  compose->add_option("interconnection", o.target, "Interconnection name")->required();
  compose->add_option("--alphas", o.alphas, "Explicit weights a1,a2 (validated)");
  compose->add_option("--out", o.out_path, "Write the model with the composed entries here");

  auto* check = app.add_subcommand("check", "Falsify both certificate conditions by sampling");
  check->add_option("model", o.model, "Model file")->required();
  check->add_option("certificate", o.target, "Certificate name")->required();
  check->add_option("--samples", o.samples, "Number of samples")->capture_default_str();
  check->add_option("--seed", o.seed, "Sampling seed")->capture_default_str();
  check->add_option("--box", o.box, "State box lo,hi (or a half-width) for x and xp")
      ->capture_default_str();
  check->add_option("--ubox", o.ubox, "Input box for u and up (default: --box)");
  check->add_option("--tol", o.tol, "Violation tolerance")->capture_default_str();
  check->add_option("--workers", o.workers, "Sampling threads, 0 for all cores (results do not depend on it)")
      ->capture_default_str();
  check->add_option("--out", o.out_path, "Write the JSON report here instead of stdout");

  auto* simulate = app.add_subcommand("simulate", "Integrate both trajectories of a scenario");
  simulate->add_option("model", o.model, "Model file")->required();
  simulate->add_option("scenario", o.target, "Scenario name")->required();
  simulate->add_option("--out", o.out_path, "Write the CSV trace here instead of stdout");

  auto* bound = app.add_subcommand("bound", "Check the trajectory bound on a scenario");
  bound->add_option("model", o.model, "Model file")->required();
  bound->add_option("scenario", o.target, "Scenario name")->required();
  bound->add_option("certificate", o.certificate, "Certificate name")->required();
  bound->add_option("--tol", o.bound_tol, "Tolerance (default 1e-4 + 10 h^4)");
  bound->add_option("--out", o.out_path, "Write the CSV trace here instead of stdout");

  for (auto* sub : {simulate, bound}) {
    sub->add_option("--step", o.step, "Override the scenario step h");
    sub->add_option("--horizon", o.horizon, "Override the scenario horizon T");
  }

  auto* info = app.add_subcommand("info", "List the contents of a model file");
  info->add_option("model", o.model, "Model file")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*compose) return cmd_compose(o, out, err);
    if (*check) return cmd_check(o, out, err);
    if (*simulate) return cmd_simulate(o, out, err);
    if (*bound) return cmd_bound(o, out, err);
    return cmd_info(o, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitLoadError;
  }
}

}  // namespace bisim::cli
