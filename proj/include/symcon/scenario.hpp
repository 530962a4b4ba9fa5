#pragma once

// Scenario files: a JSON document naming a model and a list of steps
// (partitions, symmetry checks, certificates, simulations, fold-change runs),
// each with optional expectations. The format is described in docs/sysdl.md.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "symcon/measures.hpp"
#include "symcon/model.hpp"
#include "symcon/network.hpp"
#include "symcon/sysdl.hpp"

namespace symcon {

struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  std::string relation;  // "<=", ">=", "=="
  bool ok = false;
};

struct ScenarioResult {
  std::string name;
  nlohmann::json report;
  int exit_code = 0;  // 0 all expectations met, 1 error, 2 expectation failure
  std::vector<std::string> failures;  // failed checks and errors, one line each
  std::vector<std::string> files;     // artifacts written
};

struct RunOptions {
  std::string out_dir;  // empty: write nothing
};

ScenarioResult run_scenario(const std::string& path, const RunOptions& opt = {});
ScenarioResult run_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                            const RunOptions& opt = {});

// --- pieces shared with the command-line tool --------------------------------------

/// "{1,4} {2,3}" over the layout's node ids; `a..b` expands integer ranges.
/// Every node must appear exactly once.
Partition parse_partition(const NetworkLayout& layout, std::string_view text);
std::string describe(const NetworkLayout& layout, const Partition& p);

/// "1", "2", "inf"; or {"norm": ..., "weight": matrix or JSON file path}.
MeasureKind parse_measure(const nlohmann::json& j, const std::filesystem::path& base = {});
/// A JSON file holding a matrix, or an object with a "weight" matrix.
Eigen::MatrixXd load_weight(const std::string& path);

/// Value of a constant expression; the model's parameters may be named.
double constant_value(std::string_view text, const SystemModel* m = nullptr);
double constant_json(const nlohmann::json& j, const SystemModel* m = nullptr);

/// Copy of the model with parameters and delays replaced (networks are
/// reassembled so that quotients see the new values).
LoadedModel with_overrides(const LoadedModel& lm, const nlohmann::json& params, const nlohmann::json& delays = {});

/// Model default box with `{"name": [lo, hi]}` overrides; a trailing `*` in a
/// name matches every component with that prefix.
Box box_with_overrides(Box base, const SystemModel& m, const nlohmann::json& overrides);

/// Installed data directory (models/, scenarios/): SYMCON_DATA environment
/// variable, else the source tree the tool was built from.
std::filesystem::path data_dir();
std::vector<std::string> bundled_scenarios();
std::filesystem::path bundled_scenario(const std::string& name);

}  // namespace symcon
