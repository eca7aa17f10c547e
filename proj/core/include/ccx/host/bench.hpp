#pragma once

// Leaf benchmark suites reported in abstract cost units.
//   leaves         every leaf, `reps` rounds over the fixture enclaves
//                  (the write-back family only where the EPC is fixed)
//   oversubscribe  the scenarios/oversubscribe.scn workload

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccx/config.hpp"
#include "ccx/cost_model.hpp"

namespace ccx::host {

struct BenchOptions {
  unsigned reps = 100;
  std::filesystem::path fixtures;  // directory holding enclave/ and scenarios/
};

struct BenchReport {
  std::string suite;
  std::string mode;
  std::uint64_t granule_count = 0;
  unsigned reps = 0;
  std::array<LeafStats, kLeafCount> leaves{};
  std::string error;
  double wall_ms = 0;  // informational, left out of the JSON

  const LeafStats& stats(Leaf l) const { return leaves[static_cast<std::size_t>(l)]; }
  // Mean cost per invocation, 0 for leaves that never ran.
  std::uint64_t mean_cost(Leaf l) const;
  nlohmann::json to_json() const;
  void write_text(std::ostream& os) const;
};

std::vector<std::string> bench_suites();
BenchReport run_bench(const Config& cfg, const std::string& suite, const BenchOptions& opts);

}  // namespace ccx::host
