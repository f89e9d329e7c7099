#include "bisim/cli/commands.hpp"
#include "bisim/cli/model_file.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

namespace bisim::cli {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures = BISIM_FIXTURE_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bisim");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const char* name) { return (kFixtures / name).string(); }

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("bisim_cli_test_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const char* name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> csv_rows(const std::string& text, std::string* header = nullptr) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::size_t pos = 0;
    for (;;) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
      double v = 0.0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      EXPECT_EQ(r.ec, std::errc{}) << cell;
      row.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

TEST(CliCompose, TwoScalarLoop) {
  TempDir tmp;
  const auto out = tmp.file("composed.json");
  const auto r = cli({"compose", fixture("two_scalar.json"), "loop", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("small-gain ratio: " + format_real(2 * std::sqrt(2.0) / 5)),
            std::string::npos)
      << r.out;
  const ModelFile m = load_model(out);
  ASSERT_NE(m.find_system("loop"), nullptr);
  const auto* c = m.find_certificate("loop_cert");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->target, "loop");
  // lambda1 <= gamma2, so alpha1 is the midpoint of (2, 5/sqrt(2)).
  const double a1 = 0.5 * (2.0 + 5.0 / std::sqrt(2.0));
  EXPECT_NEAR(c->certificate.lambda(), (a1 - 2.0) / a1, 1e-15);
  EXPECT_NEAR(c->certificate.gamma(), a1 * std::sqrt(2.0) + 2.0, 1e-15);

  const auto check = cli({"check", out, "loop_cert", "--samples", "3000"});
  EXPECT_EQ(check.code, kExitOk) << check.out << check.err;
}

TEST(CliCompose, ExplicitAlphas) {
  const auto bad = cli({"compose", fixture("two_scalar.json"), "loop", "--alphas", "0.5,1"});
  EXPECT_EQ(bad.code, kExitInvalidAlphas);
  EXPECT_NE(bad.err.find("alpha1 >= 1 violated"), std::string::npos) << bad.err;

  const auto good = cli({"compose", fixture("two_scalar.json"), "loop", "--alphas", "3,1"});
  EXPECT_EQ(good.code, kExitOk) << good.err;
  EXPECT_NE(good.out.find("(explicit)"), std::string::npos);
  EXPECT_NE(good.out.find("lambda: " + format_real(1.0 / 3.0)), std::string::npos) << good.out;

  EXPECT_EQ(cli({"compose", fixture("two_scalar.json"), "loop", "--alphas", "3"}).code,
            kExitUsage);
}

TEST(CliCompose, SmallGainFailure) {
  const auto r = cli({"compose", fixture("small_gain_fail.json"), "AB"});
  EXPECT_EQ(r.code, kExitSmallGain);
  EXPECT_NE(r.err.find("ratio = 4.0"), std::string::npos) << r.err;
}

TEST(CliCompose, UnknownInterconnection) {
  const auto r = cli({"compose", fixture("two_scalar.json"), "nope"});
  EXPECT_EQ(r.code, kExitLoadError);
  EXPECT_NE(r.err.find("available: loop"), std::string::npos) << r.err;
}

TEST(CliCheck, PassingCertificate) {
  const auto r = cli({"check", fixture("leaky.json"), "leaky_cert", "--samples", "2000"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["verdict"], "pass");
  EXPECT_EQ(report["message"], "no counterexample found in 2000 samples");
  EXPECT_EQ(report["samples"], 2000);
  EXPECT_EQ(report["seed"], 42);
  EXPECT_EQ(report["conditions"]["cond2"]["status"], "pass");
  EXPECT_TRUE(report["conditions"]["cond2"]["first_violation"].is_null());
}

TEST(CliCheck, ViolatedCertificate) {
  const auto r = cli({"check", fixture("leaky.json"), "leaky_fast", "--samples", "500"});
  ASSERT_EQ(r.code, kExitViolation) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["verdict"], "violation");
  EXPECT_EQ(report["conditions"]["cond1"]["status"], "pass");
  const auto& v = report["conditions"]["cond2"]["first_violation"];
  ASSERT_TRUE(v.is_object());
  EXPECT_EQ(v["kind"], "cond2");
  EXPECT_GT(v["margin"].get<double>(), 1e-7);
  EXPECT_EQ(v["witness"]["u"].size(), 1u);
}

TEST(CliCheck, UsageErrors) {
  EXPECT_EQ(cli({"check", fixture("leaky.json"), "leaky_cert", "--samples", "0"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"check", fixture("leaky.json"), "leaky_cert", "--box", "3,1"}).code, kExitUsage);
  EXPECT_EQ(cli({"check", fixture("leaky.json"), "leaky_cert", "--tol", "-1"}).code, kExitUsage);
  EXPECT_EQ(cli({"check", fixture("leaky.json")}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"check", fixture("leaky.json"), "missing"}).code, kExitLoadError);
}

TEST(CliCheck, ReportIsIndependentOfWorkers) {
  const auto base = cli({"check", fixture("leaky.json"), "leaky_rate2", "--samples", "3001"});
  EXPECT_EQ(base.code, kExitViolation);
  for (const char* w : {"1", "2", "3", "0"}) {
    const auto r = cli({"check", fixture("leaky.json"), "leaky_rate2", "--samples", "3001",
                        "--workers", w});
    EXPECT_EQ(r.out, base.out) << "workers " << w;
    EXPECT_EQ(r.out.find("workers"), std::string::npos);
  }
}

TEST(CliCheck, BoxOptions) {
  TempDir tmp;
  const auto out = tmp.file("report.json");
  const auto r = cli({"check", fixture("leaky.json"), "leaky_cert", "--samples", "100", "--box",
                      "2", "--ubox", "-1,0.5", "--seed", "7", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("no counterexample found in 100 samples"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(report["box"]["state"], nlohmann::json::parse("[-2.0, 2.0]"));
  EXPECT_EQ(report["box"]["input"], nlohmann::json::parse("[-1.0, 0.5]"));
  EXPECT_EQ(report["seed"], 7);
}

TEST(CliBound, TightScenario) {
  const auto r = cli({"bound", fixture("leaky.json"), "rest", "leaky_cert"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::string header;
  const auto rows = csv_rows(r.out, &header);
  EXPECT_EQ(header, "t,x[0],xp[0],norm_gap,V,eta");
  ASSERT_EQ(rows.size(), 5001u);
  for (const auto& row : rows) {
    ASSERT_EQ(row.size(), 6u);
    EXPECT_NEAR(row[4], row[5], 1e-6);
    EXPECT_NEAR(row[5], std::exp(-row[0]), 1e-15);
  }
}

TEST(CliBound, CorruptedRateIsReported) {
  const auto r = cli({"bound", fixture("leaky.json"), "rest", "leaky_rate2"});
  EXPECT_EQ(r.code, kExitViolation);
  EXPECT_NE(r.err.find("violation at t = 0.001 "), std::string::npos) << r.err;
}

TEST(CliBound, ZeroHorizonIsOneRow) {
  const auto r = cli({"bound", fixture("leaky.json"), "instant", "leaky_cert"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(csv_rows(r.out).size(), 1u);
  const auto shortened =
      cli({"bound", fixture("leaky.json"), "forced", "leaky_cert", "--horizon", "0"});
  EXPECT_EQ(shortened.code, kExitOk);
  EXPECT_EQ(csv_rows(shortened.out).size(), 1u);
}

TEST(CliBound, ForcedScenarioPasses) {
  const auto r = cli({"bound", fixture("leaky.json"), "forced", "leaky_cert"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(csv_rows(r.out).size(), 1001u);
}

TEST(CliBound, CertificateMustMatchScenarioSystem) {
  TempDir tmp;
  const auto path = tmp.file("m.json");
  auto m = load_model(fixture("leaky.json"));
  m.systems.push_back(System::parse("other", 1, 1, {"-x[0]"}));
  m.certificates.push_back(
      {"other_cert", "other", Certificate::parse("abs(x[0]-xp[0])", 1, 1, 1, 1)});
  save_model(m, path);
  EXPECT_EQ(cli({"bound", path, "rest", "other_cert"}).code, kExitLoadError);
}

TEST(CliBound, OutputIsByteStable) {
  TempDir tmp;
  std::vector<std::string> outputs;
  for (int i = 0; i < 3; ++i) {
    const auto path = tmp.file(("b" + std::to_string(i) + ".csv").c_str());
    ASSERT_EQ(cli({"bound", fixture("leaky.json"), "forced", "leaky_cert", "--out", path}).code,
              kExitOk);
    outputs.push_back(slurp(path));
  }
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_EQ(outputs[0], outputs[2]);
}

TEST(CliSimulate, DecayingScalar) {
  const auto r = cli({"simulate", fixture("decay.json"), "decay"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::string header;
  const auto rows = csv_rows(r.out, &header);
  EXPECT_EQ(header, "t,x[0],xp[0]");
  ASSERT_EQ(rows.size(), 101u);
  EXPECT_NEAR(rows.back()[0], 1.0, 1e-12);
  EXPECT_NEAR(rows.back()[1], std::exp(-1.0), 1e-6);
  EXPECT_NEAR(rows.back()[2], 0.5 * std::exp(-1.0), 1e-6);
}

TEST(CliSimulate, ZeroFieldColumnsAreConstant) {
  const auto r = cli({"simulate", fixture("decay.json"), "still"});
  ASSERT_EQ(r.code, kExitOk);
  for (const auto& row : csv_rows(r.out)) {
    EXPECT_EQ(row[1], 1.5);
    EXPECT_EQ(row[2], -2.0);
    EXPECT_EQ(row[3], 0.0);
    EXPECT_EQ(row[4], 3.0);
  }
}

TEST(CliSimulate, MissingScenarioListsNames) {
  const auto r = cli({"simulate", fixture("decay.json"), "nope"});
  EXPECT_EQ(r.code, kExitLoadError);
  EXPECT_NE(r.err.find("available: decay, still"), std::string::npos) << r.err;
}

TEST(CliSimulate, CsvMatchesLibraryBitForBit) {
  const auto r = cli({"simulate", fixture("leaky.json"), "forced"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out.find('\r'), std::string::npos);
  const auto m = load_model(fixture("leaky.json"));
  const auto& sc = *m.find_scenario("forced");
  const auto tr = integrate(*m.find_system("leaky"), sc.x0, sc.u, sc.h, sc.T);
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), tr.times.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k][0], tr.times[k]);
    EXPECT_EQ(rows[k][1], tr.states[k][0]);
    EXPECT_EQ(rows[k][3], tr.inputs[k][0]);
  }
}

TEST(CliInfo, ListsEverything) {
  const auto r = cli({"info", fixture("leaky.json")});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("leaky_fast: target leaky, lambda = 3.0, gamma = 1.0"), std::string::npos)
      << r.out;
  EXPECT_NE(r.out.find("rest: system leaky"), std::string::npos);
}

TEST(ModelFile, RoundTripIsBitExact) {
  TempDir tmp;
  const auto composed = tmp.file("composed.json");
  ASSERT_EQ(cli({"compose", fixture("two_scalar.json"), "loop", "--out", composed}).code,
            kExitOk);
  const ModelFile a = load_model(composed);
  const auto again = tmp.file("again.json");
  save_model(a, again);
  EXPECT_EQ(slurp(again), slurp(composed));
  const ModelFile b = load_model(again);

  const System& sa = *a.find_system("loop");
  const System& sb = *b.find_system("loop");
  const auto& ca = a.find_certificate("loop_cert")->certificate;
  const auto& cb = b.find_certificate("loop_cert")->certificate;
  EXPECT_EQ(ca.lambda(), cb.lambda());
  EXPECT_EQ(ca.gamma(), cb.gamma());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-10, 10);
  for (int k = 0; k < 100; ++k) {
    const std::vector<double> x{d(rng), d(rng)}, xp{d(rng), d(rng)}, u{d(rng), d(rng)};
    const auto fa = eval_field(sa, x, u), fb = eval_field(sb, x, u);
    EXPECT_EQ(std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)), 0);
    const VarEnv env{{"x", x}, {"xp", xp}};
    EXPECT_EQ(eval(ca.V(), env), eval(cb.V(), env));
  }
}

TEST(ModelFile, DerivedSubsystemsFallBackToSystemCertificate) {
  const char* text = R"j({
    "systems": [
      {"name": "P", "n": 1, "m": 2, "field": ["-2*x[0] + 0.5*u[1] + u[0]"]},
      {"name": "Q", "n": 1, "m": 1, "field": ["-3*x[0] + u[0]"]}
    ],
    "subsystems": [
      {"name": "Ps", "from_system": "P", "v_indices": [1], "w_indices": [0]},
      {"name": "Qs", "from_system": "Q", "v_indices": [0], "w_indices": []}
    ],
    "certificates": [
      {"name": "VP", "target": "P", "V": "abs(x[0]-xp[0])", "lambda": 2, "gamma": 1.118033988749895},
      {"name": "VQ", "target": "Q", "V": "abs(x[0]-xp[0])", "lambda": 3, "gamma": 1}
    ],
    "interconnections": [{"name": "PQ", "left": "Ps", "right": "Qs"}]
  })j";
  TempDir tmp;
  const auto in = tmp.file("in.json"), out = tmp.file("out.json");
  std::ofstream(in) << text;
  const auto r = cli({"compose", in, "PQ", "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("certificates: VP, VQ"), std::string::npos);
  EXPECT_EQ(cli({"check", out, "PQ_cert", "--samples", "2000"}).code, kExitOk);
  const auto m = load_model(out);
  EXPECT_EQ(m.find_subsystem("Ps")->derived->system, "P");
  EXPECT_EQ(m.find_system("PQ")->m(), 1u);
}

TEST(ModelFile, LoadErrors) {
  auto bad = [](const std::string& text) {
    EXPECT_THROW(parse_model(text), ModelError) << text;
  };
  bad("{");
  bad("[]");
  bad(R"j({"systems": [{"name": "s", "n": 1, "m": 0}]})j");
  bad(R"j({"systems": [{"name": "s", "n": -1, "m": 0, "field": []}]})j");
  bad(R"j({"systems": [{"name": "s", "n": 1, "m": 0, "field": ["u[0]"]}]})j");
  bad(R"j({"systems": [{"name": "s", "n": 1, "m": 0, "field": ["x[0]"]},
                      {"name": "s", "n": 1, "m": 0, "field": ["x[0]"]}]})j");
  bad(R"j({"certificates": [{"name": "c", "target": "nowhere", "V": "0", "lambda": 1, "gamma": 0}]})j");
  bad(R"j({"systems": [{"name": "s", "n": 1, "m": 0, "field": ["x[0]"]}],
          "certificates": [{"name": "c", "target": "s", "V": "abs(x[0]-xp[0])", "lambda": 0, "gamma": 0}]})j");
  bad(R"j({"subsystems": [{"name": "a", "n": 1, "p": 2, "q": 0, "field": ["v[1]"]},
                         {"name": "b", "n": 1, "p": 1, "q": 0, "field": ["v[0]"]}],
          "interconnections": [{"name": "ab", "left": "a", "right": "b"}]})j");
  bad(R"j({"systems": [{"name": "s", "n": 1, "m": 0, "field": ["x[0]"]}],
          "scenarios": [{"name": "r", "system": "s", "x0": [1, 2], "x0p": [0], "u": [], "up": []}]})j");
  bad(R"j({"systems": [{"name": "s", "n": 1, "m": 0, "field": ["x[0]"]}],
          "scenarios": [{"name": "r", "system": "s", "x0": [1], "x0p": [0], "u": [], "up": [], "h": 0}]})j");
  try {
    parse_model(R"j({"systems": [{"name": "s", "n": 1, "m": 0, "field": ["x[0] +"]}]})j");
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("systems[0]"), std::string::npos) << e.what();
  }
  EXPECT_EQ(cli({"info", "/nonexistent/model.json"}).code, kExitLoadError);
}

TEST(Format, Reals) {
  EXPECT_EQ(format_real(4.0), "4.0");
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(format_real(1e300), "1e+300");
  EXPECT_EQ(format_csv_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_csv_real(1.0), "1");
}

}  // namespace
}  // namespace bisim::cli
