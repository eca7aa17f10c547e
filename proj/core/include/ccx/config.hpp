#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "ccx/cost_model.hpp"
#include "ccx/crypto.hpp"
#include "ccx/memory.hpp"

namespace ccx {

enum class SimMode : std::uint8_t { kSgx, kCcx };

std::string_view to_string(SimMode m) noexcept;
std::optional<SimMode> sim_mode_from_string(std::string_view s) noexcept;

struct Config {
  std::uint64_t granule_count = 16384;
  SimMode mode = SimMode::kSgx;
  GranuleNum epc_base = 1024;
  std::uint64_t epc_size = 512;
  unsigned vcpus = 4;

  std::uint64_t crypto_seed = 1;
  MacAlgorithm mac = MacAlgorithm::kAesCmac;
  std::uint64_t scheduler_seed = 1;

  CostTable costs = CostTable::defaults();

  // Directory for swapped-out page blobs; empty means a fresh temp dir.
  std::string swap_dir;

  MemoryMode memory_mode() const;

  nlohmann::json to_json() const;
  // Missing fields keep their defaults. Throws std::invalid_argument on bad values.
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::filesystem::path& path);

  friend bool operator==(const Config&, const Config&) = default;
};

}  // namespace ccx
