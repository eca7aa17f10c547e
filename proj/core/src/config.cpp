#include "ccx/config.hpp"

#include <fstream>
#include <stdexcept>

namespace ccx {

std::string_view to_string(SimMode m) noexcept { return m == SimMode::kSgx ? "sgx" : "ccx"; }

std::optional<SimMode> sim_mode_from_string(std::string_view s) noexcept {
  if (s == "sgx") return SimMode::kSgx;
  if (s == "ccx") return SimMode::kCcx;
  return std::nullopt;
}

MemoryMode Config::memory_mode() const {
  if (mode == SimMode::kSgx) return SgxFixed{epc_base, epc_size};
  return CcaDynamic{};
}

nlohmann::json Config::to_json() const {
  nlohmann::ordered_json leafs;
  for (const auto& info : kLeaves) {
    leafs[std::string(info.name)] = costs.leaf_base[static_cast<std::size_t>(info.leaf)];
  }
  nlohmann::ordered_json j;
  j["machine"] = {{"granule_count", granule_count},
                  {"mode", std::string(to_string(mode))},
                  {"epc_base", epc_base},
                  {"epc_size", epc_size},
                  {"vcpus", vcpus}};
  j["crypto"] = {{"seed", crypto_seed}, {"mac", std::string(to_string(mac))}};
  j["scheduler"] = {{"seed", scheduler_seed}};
  j["costs"] = {{"leaf", leafs},
                {"gpt_entry", costs.gpt_entry},
                {"hash_block", costs.hash_block},
                {"aead_16b", costs.aead_16b},
                {"sig_verify", costs.sig_verify},
                {"kdf", costs.kdf},
                {"mac", costs.mac},
                {"context_copy", costs.context_copy}};
  j["swap_dir"] = swap_dir;
  return j;
}

namespace {

template <class T>
void take(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.is_object() && obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

Config Config::from_json(const nlohmann::json& j) {
  Config c;
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  try {
    if (j.contains("machine")) {
      const auto& m = j.at("machine");
      take(m, "granule_count", c.granule_count);
      take(m, "epc_base", c.epc_base);
      take(m, "epc_size", c.epc_size);
      take(m, "vcpus", c.vcpus);
      if (m.contains("mode")) {
        auto mode = sim_mode_from_string(m.at("mode").get<std::string>());
        if (!mode) throw std::invalid_argument("machine.mode must be \"sgx\" or \"ccx\"");
        c.mode = *mode;
      }
    }
    if (j.contains("crypto")) {
      const auto& k = j.at("crypto");
      take(k, "seed", c.crypto_seed);
      if (k.contains("mac")) {
        auto mac = mac_algorithm_from_string(k.at("mac").get<std::string>());
        if (!mac) throw std::invalid_argument("crypto.mac must be aes128-cmac or hmac-sha256-128");
        c.mac = *mac;
      }
    }
    if (j.contains("scheduler")) take(j.at("scheduler"), "seed", c.scheduler_seed);
    if (j.contains("costs")) {
      const auto& k = j.at("costs");
      take(k, "gpt_entry", c.costs.gpt_entry);
      take(k, "hash_block", c.costs.hash_block);
      take(k, "aead_16b", c.costs.aead_16b);
      take(k, "sig_verify", c.costs.sig_verify);
      take(k, "kdf", c.costs.kdf);
      take(k, "mac", c.costs.mac);
      take(k, "context_copy", c.costs.context_copy);
      if (k.contains("leaf")) {
        for (const auto& [name, value] : k.at("leaf").items()) {
          auto leaf = leaf_from_string(name);
          if (!leaf) throw std::invalid_argument("unknown leaf in costs.leaf: " + name);
          c.costs.leaf_base[static_cast<std::size_t>(*leaf)] = value.get<std::uint64_t>();
        }
      }
    }
    take(j, "swap_dir", c.swap_dir);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (c.granule_count == 0) throw std::invalid_argument("machine.granule_count must be positive");
  if (c.vcpus == 0) throw std::invalid_argument("machine.vcpus must be positive");
  if (c.mode == SimMode::kSgx && (c.epc_size == 0 || c.epc_base + c.epc_size > c.granule_count)) {
    throw std::invalid_argument("EPC range does not fit in physical memory");
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace ccx
