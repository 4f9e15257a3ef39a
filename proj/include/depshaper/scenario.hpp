#pragma once

// Scenario files: a JSON document describing a ControlProblem plus run
// settings.  Physical quantities carry their unit in the key name
// (`_mm`, `_s`, `_V`); mu and energy_scale are dimensionless model constants.
// Unknown keys are rejected and every error names a JSON pointer.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "depshaper/solver.hpp"

namespace depshaper {

class ScenarioError : public std::runtime_error {
public:
  ScenarioError(const std::string& pointer, const std::string& what)
      : std::runtime_error(pointer + ": " + what), pointer_(pointer) {}
  const std::string& pointer() const noexcept { return pointer_; }

private:
  std::string pointer_;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  SolverMode mode = SolverMode::ContinuousMap;
  bool deterministic = true;
  std::string output_dir = "out";

  ControlProblem problem;

  int trajectory_hidden = 64;
  int potential_hidden = 24;
  double trajectory_init_scale = 0.0;
  double potential_init_scale = 0.1;

  TrainConfig train;
  int rollout_substeps = 4;
  std::vector<double> snapshot_times;

  /// Canonical serialization (sorted keys, no whitespace) of the parsed
  /// document; the manifest hash is taken over it.
  std::string canonical;
};

inline constexpr const char* kVersion = "0.1.0";

/// `seed_override` replaces the document's seed (the document hash is
/// unaffected; the manifest records the seed separately).
Scenario parse_scenario(const std::string& text, std::optional<std::uint64_t> seed_override = {});
Scenario load_scenario(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});

/// 64-bit FNV-1a of the canonical document, as 16 hex digits.
std::string scenario_hash(const Scenario& s);

/// Snapshot times 0, 1.5, 3, 4.95 s of a 5 s run, scaled to `horizon`.
std::vector<double> default_snapshot_times(double horizon);

const char* mode_name(SolverMode mode);

}  // namespace depshaper
