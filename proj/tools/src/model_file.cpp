#include "bisim/cli/model_file.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bisim::cli {

using Json = nlohmann::ordered_json;

namespace {

template <typename T, typename Name>
const T* find_by(const std::vector<T>& items, std::string_view name, Name name_of) {
  for (const auto& item : items) {
    if (name_of(item) == name) return &item;
  }
  return nullptr;
}

// Accessors that report the JSON path of whatever is wrong.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ModelError(path_ + ": " + what);
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const Json& at(const char* key) const {
    if (!j_.contains(key)) fail(std::string("missing field \"") + key + "\"");
    return j_.at(key);
  }

  std::string sub(const char* key) const { return path_ + "." + key; }

  std::string string(const char* key) const {
    const Json& v = at(key);
    if (!v.is_string()) fail(std::string("\"") + key + "\" must be a string");
    return v.get<std::string>();
  }

  std::size_t count(const char* key) const {
    const Json& v = at(key);
    if (!v.is_number_unsigned()) {
      fail(std::string("\"") + key + "\" must be a nonnegative integer");
    }
    return v.get<std::size_t>();
  }

  double number(const char* key) const {
    const Json& v = at(key);
    if (!v.is_number()) fail(std::string("\"") + key + "\" must be a number");
    return v.get<double>();
  }

  std::vector<double> numbers(const char* key) const {
    std::vector<double> out;
    for (const auto& v : array(key)) {
      if (!v.is_number()) fail(std::string("\"") + key + "\" must contain numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }

  std::vector<std::size_t> indices(const char* key) const {
    std::vector<std::size_t> out;
    for (const auto& v : array(key)) {
      if (!v.is_number_unsigned()) {
        fail(std::string("\"") + key + "\" must contain nonnegative integers");
      }
      out.push_back(v.get<std::size_t>());
    }
    return out;
  }

  std::vector<std::string> strings(const char* key) const {
    std::vector<std::string> out;
    for (const auto& v : array(key)) {
      if (!v.is_string()) fail(std::string("\"") + key + "\" must contain strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  }

  const Json& array(const char* key) const {
    const Json& v = at(key);
    if (!v.is_array()) fail(std::string("\"") + key + "\" must be an array");
    return v;
  }

 private:
  const Json& j_;
  std::string path_;
};

// Runs `f`, prefixing library errors with the record path.
template <typename F>
auto at_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    throw ModelError(path + ": " + e.what());
  }
}

const char* kind_name(Provenance::Kind k) {
  switch (k) {
    case Provenance::Kind::Atomic: return "atomic";
    case Provenance::Kind::Interconnection: return "interconnection";
    case Provenance::Kind::Repartitioned: return "repartitioned";
    case Provenance::Kind::FromSubsystem: return "from_subsystem";
  }
  return "atomic";
}

Provenance read_provenance(const Reader& r) {
  Provenance p;
  if (!r.has("provenance")) return p;
  const Reader pr(r.at("provenance"), r.sub("provenance"));
  const std::string kind = pr.string("kind");
  if (kind == "atomic") {
    p.kind = Provenance::Kind::Atomic;
  } else if (kind == "interconnection") {
    p.kind = Provenance::Kind::Interconnection;
    p.left = pr.string("left");
    p.right = pr.string("right");
  } else if (kind == "repartitioned" || kind == "from_subsystem") {
    p.kind = kind == "repartitioned" ? Provenance::Kind::Repartitioned
                                     : Provenance::Kind::FromSubsystem;
    p.source = pr.string("source");
  } else {
    pr.fail("unknown provenance kind \"" + kind + "\"");
  }
  return p;
}

Json write_provenance(const Provenance& p) {
  Json j;
  j["kind"] = kind_name(p.kind);
  if (p.kind == Provenance::Kind::Interconnection) {
    j["left"] = p.left;
    j["right"] = p.right;
  } else if (p.kind != Provenance::Kind::Atomic) {
    j["source"] = p.source;
  }
  return j;
}

Json field_json(const std::vector<Expr>& field) {
  Json out = Json::array();
  for (const auto& e : field) out.push_back(to_string(e));
  return out;
}

const Json& section(const Json& root, const char* key) {
  static const Json empty = Json::array();
  if (!root.contains(key)) return empty;
  const Json& v = root.at(key);
  if (!v.is_array()) throw ModelError(std::string(key) + ": must be an array");
  return v;
}

}  // namespace

const SubsystemEntry* ModelFile::find_subsystem(std::string_view name) const {
  return find_by(subsystems, name, [](const auto& s) -> const std::string& {
    return s.subsystem.name();
  });
}

const System* ModelFile::find_system(std::string_view name) const {
  return find_by(systems, name, [](const auto& s) -> const std::string& { return s.name(); });
}

const CertificateEntry* ModelFile::find_certificate(std::string_view name) const {
  return find_by(certificates, name, [](const auto& c) -> const std::string& { return c.name; });
}

const InterconnectionEntry* ModelFile::find_interconnection(std::string_view name) const {
  return find_by(interconnections, name,
                 [](const auto& c) -> const std::string& { return c.name; });
}

const ScenarioEntry* ModelFile::find_scenario(std::string_view name) const {
  return find_by(scenarios, name, [](const auto& c) -> const std::string& { return c.name; });
}

System ModelFile::resolve_system(std::string_view name) const {
  if (const System* s = find_system(name)) return *s;
  if (const SubsystemEntry* s = find_subsystem(name)) return as_system(s->subsystem);
  throw ModelError("no system or subsystem named \"" + std::string(name) + "\"");
}

void ModelFile::put(System s) {
  for (auto& existing : systems) {
    if (existing.name() == s.name()) {
      existing = std::move(s);
      return;
    }
  }
  systems.push_back(std::move(s));
}

void ModelFile::put(CertificateEntry c) {
  for (auto& existing : certificates) {
    if (existing.name == c.name) {
      existing = std::move(c);
      return;
    }
  }
  certificates.push_back(std::move(c));
}

void ModelFile::validate() const {
  std::set<std::string> dynamics;
  auto unique = [](std::set<std::string>& seen, const std::string& name, const char* what) {
    if (name.empty()) throw ModelError(std::string(what) + " with an empty name");
    if (!seen.insert(name).second) {
      throw ModelError(std::string("duplicate ") + what + " name \"" + name + "\"");
    }
  };
  for (const auto& s : systems) unique(dynamics, s.name(), "system/subsystem");
  for (const auto& s : subsystems) {
    unique(dynamics, s.subsystem.name(), "system/subsystem");
    if (s.derived && !find_system(s.derived->system)) {
      throw ModelError("subsystem \"" + s.subsystem.name() + "\": no system named \"" +
                       s.derived->system + "\"");
    }
  }

  std::set<std::string> seen;
  for (const auto& c : certificates) {
    unique(seen, c.name, "certificate");
    const std::string ctx = "certificate \"" + c.name + "\"";
    const System target = at_path(ctx, [&] { return resolve_system(c.target); });
    if (target.n() != c.certificate.n() || target.m() != c.certificate.m()) {
      throw ModelError(ctx + ": dimensions do not match target \"" + c.target + "\"");
    }
  }

  seen.clear();
  for (const auto& ic : interconnections) {
    unique(seen, ic.name, "interconnection");
    const std::string ctx = "interconnection \"" + ic.name + "\"";
    const auto* l = find_subsystem(ic.left);
    const auto* r = find_subsystem(ic.right);
    if (!l) throw ModelError(ctx + ": no subsystem named \"" + ic.left + "\"");
    if (!r) throw ModelError(ctx + ": no subsystem named \"" + ic.right + "\"");
    at_path(ctx, [&] { return Interconnection(l->subsystem, r->subsystem); });
    if (ic.certificates) {
      for (const auto* name : {&ic.certificates->first, &ic.certificates->second}) {
        if (!find_certificate(*name)) {
          throw ModelError(ctx + ": no certificate named \"" + *name + "\"");
        }
      }
    }
  }

  seen.clear();
  for (const auto& sc : scenarios) {
    unique(seen, sc.name, "scenario");
    const std::string ctx = "scenario \"" + sc.name + "\"";
    const System s = at_path(ctx, [&] { return resolve_system(sc.system); });
    if (sc.x0.size() != s.n() || sc.x0p.size() != s.n()) {
      throw ModelError(ctx + ": x0 and x0p need " + std::to_string(s.n()) + " components");
    }
    if (sc.u.size() != s.m() || sc.up.size() != s.m()) {
      throw ModelError(ctx + ": u and up need " + std::to_string(s.m()) + " components");
    }
    at_path(ctx, [&] { return grid_steps(sc.h, sc.T); });
  }
}

ModelFile parse_model(std::string_view json_text) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ModelError(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ModelError("model file must contain a JSON object");

  ModelFile m;
  const Json& systems = section(root, "systems");
  for (std::size_t i = 0; i < systems.size(); ++i) {
    const std::string path = "systems[" + std::to_string(i) + "]";
    const Reader r(systems[i], path);
    const std::string name = r.string("name");
    const std::size_t n = r.count("n"), mm = r.count("m");
    const auto field = r.strings("field");
    const Provenance prov = read_provenance(r);
    m.systems.push_back(at_path(path, [&] {
      System parsed = System::parse(name, n, mm, field);
      return System(name, n, mm, parsed.field(), prov);
    }));
  }

  const Json& subsystems = section(root, "subsystems");
  for (std::size_t i = 0; i < subsystems.size(); ++i) {
    const std::string path = "subsystems[" + std::to_string(i) + "]";
    const Reader r(subsystems[i], path);
    const std::string name = r.string("name");
    if (r.has("from_system")) {
      SubsystemEntry::Derived d{r.string("from_system"), r.indices("v_indices"),
                                r.indices("w_indices")};
      const System* src = m.find_system(d.system);
      if (!src) r.fail("no system named \"" + d.system + "\"");
      Subsystem sub = at_path(path, [&] { return repartition(*src, d.v_indices, d.w_indices, name); });
      m.subsystems.push_back({std::move(sub), std::move(d)});
    } else {
      const std::size_t n = r.count("n"), p = r.count("p"), q = r.count("q");
      const auto field = r.strings("field");
      m.subsystems.push_back(
          {at_path(path, [&] { return Subsystem::parse(name, n, p, q, field); }), std::nullopt});
    }
  }

  const Json& certs = section(root, "certificates");
  for (std::size_t i = 0; i < certs.size(); ++i) {
    const std::string path = "certificates[" + std::to_string(i) + "]";
    const Reader r(certs[i], path);
    const std::string name = r.string("name");
    const std::string target = r.string("target");
    const System s = at_path(path, [&] { return m.resolve_system(target); });
    const std::string V = r.string("V");
    const double lambda = r.number("lambda"), gamma = r.number("gamma");
    m.certificates.push_back({name, target, at_path(path, [&] {
                                return Certificate::parse(V, lambda, gamma, s.n(), s.m());
                              })});
  }

  const Json& ics = section(root, "interconnections");
  for (std::size_t i = 0; i < ics.size(); ++i) {
    const Reader r(ics[i], "interconnections[" + std::to_string(i) + "]");
    InterconnectionEntry ic{r.string("name"), r.string("left"), r.string("right"), {}, {}};
    if (r.has("alphas")) {
      const auto a = r.numbers("alphas");
      if (a.size() != 2) r.fail("\"alphas\" must have two entries");
      ic.alphas = CompositionWeights{a[0], a[1]};
    }
    if (r.has("certificates")) {
      const auto c = r.strings("certificates");
      if (c.size() != 2) r.fail("\"certificates\" must have two entries");
      ic.certificates = std::pair{c[0], c[1]};
    }
    m.interconnections.push_back(std::move(ic));
  }

  const Json& scenarios = section(root, "scenarios");
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const std::string path = "scenarios[" + std::to_string(i) + "]";
    const Reader r(scenarios[i], path);
    ScenarioEntry sc;
    sc.name = r.string("name");
    sc.system = r.string("system");
    sc.x0 = r.numbers("x0");
    sc.x0p = r.numbers("x0p");
    const auto u = r.strings("u"), up = r.strings("up");
    sc.u = at_path(path, [&] { return InputSignal::parse("u", u); });
    sc.up = at_path(path, [&] { return InputSignal::parse("up", up); });
    if (r.has("h")) sc.h = r.number("h");
    if (r.has("T")) sc.T = r.number("T");
    m.scenarios.push_back(std::move(sc));
  }

  m.validate();
  return m;
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str());
  } catch (const ModelError& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
}

std::string dump_model(const ModelFile& m) {
  Json root;
  root["subsystems"] = Json::array();
  for (const auto& e : m.subsystems) {
    Json j;
    j["name"] = e.subsystem.name();
    if (e.derived) {
      j["from_system"] = e.derived->system;
      j["v_indices"] = e.derived->v_indices;
      j["w_indices"] = e.derived->w_indices;
    } else {
      j["n"] = e.subsystem.n();
      j["p"] = e.subsystem.p();
      j["q"] = e.subsystem.q();
      j["field"] = field_json(e.subsystem.field());
    }
    root["subsystems"].push_back(std::move(j));
  }
  root["systems"] = Json::array();
  for (const auto& s : m.systems) {
    Json j;
    j["name"] = s.name();
    j["n"] = s.n();
    j["m"] = s.m();
    j["field"] = field_json(s.field());
    if (s.provenance().kind != Provenance::Kind::Atomic) {
      j["provenance"] = write_provenance(s.provenance());
    }
    root["systems"].push_back(std::move(j));
  }
  root["certificates"] = Json::array();
  for (const auto& c : m.certificates) {
    Json j;
    j["name"] = c.name;
    j["target"] = c.target;
    j["V"] = to_string(c.certificate.V());
    j["lambda"] = c.certificate.lambda();
    j["gamma"] = c.certificate.gamma();
    root["certificates"].push_back(std::move(j));
  }
  root["interconnections"] = Json::array();
  for (const auto& ic : m.interconnections) {
    Json j;
    j["name"] = ic.name;
    j["left"] = ic.left;
    j["right"] = ic.right;
    if (ic.alphas) j["alphas"] = {ic.alphas->alpha1, ic.alphas->alpha2};
    if (ic.certificates) j["certificates"] = {ic.certificates->first, ic.certificates->second};
    root["interconnections"].push_back(std::move(j));
  }
  root["scenarios"] = Json::array();
  for (const auto& sc : m.scenarios) {
    Json j;
    j["name"] = sc.name;
    j["system"] = sc.system;
    j["x0"] = sc.x0;
    j["x0p"] = sc.x0p;
    j["u"] = field_json(sc.u.components());
    j["up"] = field_json(sc.up.components());
    j["h"] = sc.h;
    j["T"] = sc.T;
    root["scenarios"].push_back(std::move(j));
  }
  return root.dump(2) + "\n";
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  const std::string text = dump_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write model file " + path.string());
  out << text;
  if (!out) throw ModelError("error writing model file " + path.string());
}

}  // namespace bisim::cli
