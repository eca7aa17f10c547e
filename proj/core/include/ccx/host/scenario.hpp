#pragma once

// Scenario scripts drive whole runs: create enclaves, make ECALLs, inject
// interrupts, swap pages, attest, seal, and check results with EXPECT.
// One command per line; '#' starts a comment. See docs/scenario.md.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccx/config.hpp"
#include "ccx/cost_model.hpp"

namespace ccx::host {

struct ScenarioLine {
  std::size_t line = 0;
  std::string op;
  std::vector<std::string> args;
  std::string text;
};

struct ScenarioParseError {
  std::size_t line = 0;
  std::string message;
};

Expected<std::vector<ScenarioLine>, ScenarioParseError> parse_scenario(std::string_view text);

struct ScenarioOptions {
  std::optional<SimMode> mode;     // wins over SET_MODE lines
  std::filesystem::path base_dir;  // CREATE paths are relative to this
  std::ostream* trace = nullptr;   // machine trace, one JSON object per line
};

struct ScenarioReport {
  std::string mode;
  bool passed = true;
  std::string error;  // parse error, unknown entity, internal failure
  std::size_t error_line = 0;
  std::size_t failed_line = 0;  // first failing EXPECT
  std::string failure;
  nlohmann::json snapshot;  // machine state at the failure
  std::vector<nlohmann::json> events;
  std::array<LeafStats, kLeafCount> leaves{};
  std::uint64_t swap_outs = 0;
  std::uint64_t swap_ins = 0;

  // 0 when every EXPECT held, 1 on a failed EXPECT, 2 on an error.
  int exit_code() const noexcept;
  std::uint64_t leaf_count(Leaf l) const { return leaves[static_cast<std::size_t>(l)].count; }
  nlohmann::json summary() const;
  // The "out" object of every event: results that must not depend on the mode.
  std::vector<nlohmann::json> functional() const;
  void write_jsonl(std::ostream& os) const;
  void write_text(std::ostream& os) const;
};

ScenarioReport run_scenario(const Config& cfg, std::string_view script,
                            const ScenarioOptions& opts = {});
ScenarioReport run_scenario_file(const Config& cfg, const std::filesystem::path& path,
                                 ScenarioOptions opts = {});

}  // namespace ccx::host
