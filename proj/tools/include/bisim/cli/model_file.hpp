#pragma once

// JSON model files: named subsystems, systems, certificates,
// interconnections and scenarios. The schema is in docs/model_schema.json.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bisim/certify.hpp"
#include "bisim/model.hpp"
#include "bisim/sim.hpp"

namespace bisim::cli {

/// Malformed file, unresolved reference or violated dimension constraint.
class ModelError : public Error {
 public:
  using Error::Error;
};

struct SubsystemEntry {
  Subsystem subsystem;
  /// Set when the subsystem is a repartition of a system in the same file.
  struct Derived {
    std::string system;
    std::vector<std::size_t> v_indices;
    std::vector<std::size_t> w_indices;
  };
  std::optional<Derived> derived;
};

struct CertificateEntry {
  std::string name;
  std::string target;  // system or subsystem name
  Certificate certificate;
};

struct InterconnectionEntry {
  std::string name;
  std::string left;
  std::string right;
  std::optional<CompositionWeights> alphas;
  std::optional<std::pair<std::string, std::string>> certificates;
};

struct ScenarioEntry {
  std::string name;
  std::string system;
  std::vector<double> x0;
  std::vector<double> x0p;
  InputSignal u;
  InputSignal up;
  double h = kDefaultStep;
  double T = kDefaultHorizon;
};

class ModelFile {
 public:
  std::vector<SubsystemEntry> subsystems;
  std::vector<System> systems;
  std::vector<CertificateEntry> certificates;
  std::vector<InterconnectionEntry> interconnections;
  std::vector<ScenarioEntry> scenarios;

  const SubsystemEntry* find_subsystem(std::string_view name) const;
  const System* find_system(std::string_view name) const;
  const CertificateEntry* find_certificate(std::string_view name) const;
  const InterconnectionEntry* find_interconnection(std::string_view name) const;
  const ScenarioEntry* find_scenario(std::string_view name) const;

  /// The named system, or a subsystem viewed as a system with u = [v, w].
  /// Throws ModelError if neither exists.
  System resolve_system(std::string_view name) const;

  /// Inserts or replaces by name.
  void put(System s);
  void put(CertificateEntry c);

  /// Checks every reference and dimension; throws ModelError.
  void validate() const;
};

ModelFile parse_model(std::string_view json_text);
ModelFile load_model(const std::filesystem::path& path);

/// Serializes with expressions printed in round-trip form, so reading the
/// result back evaluates bit for bit like the original.
std::string dump_model(const ModelFile& model);
void save_model(const ModelFile& model, const std::filesystem::path& path);

}  // namespace bisim::cli
