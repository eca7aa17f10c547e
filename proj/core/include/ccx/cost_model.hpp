#pragma once

#include <array>
#include <cstdint>

#include "ccx/leaf.hpp"

namespace ccx {

// Abstract cost units. Each leaf pays a base cost plus the work it does:
// GPT entries written, hash blocks absorbed, bytes sealed, signatures checked.
struct CostTable {
  std::array<std::uint64_t, kLeafCount> leaf_base{};
  std::uint64_t gpt_entry = 64;
  std::uint64_t hash_block = 16;
  std::uint64_t aead_16b = 32;
  std::uint64_t sig_verify = 40000;
  std::uint64_t kdf = 600;
  std::uint64_t mac = 300;
  std::uint64_t context_copy = 150;

  static CostTable defaults();
  friend bool operator==(const CostTable&, const CostTable&) = default;
};

struct LeafStats {
  std::uint64_t count = 0;
  std::uint64_t cost = 0;
};

class CostLedger {
 public:
  explicit CostLedger(CostTable table = CostTable::defaults()) : table_(table) {}

  const CostTable& table() const noexcept { return table_; }

  void begin(Leaf l);
  void charge(Leaf l, std::uint64_t units) { stats_[index(l)].cost += units; }
  void charge_gpt_entries(Leaf l, std::uint64_t n) { charge(l, n * table_.gpt_entry); }
  void charge_hash_blocks(Leaf l, std::uint64_t n) { charge(l, n * table_.hash_block); }
  void charge_aead(Leaf l, std::uint64_t bytes) { charge(l, (bytes + 15) / 16 * table_.aead_16b); }
  void charge_sig_verify(Leaf l) { charge(l, table_.sig_verify); }
  void charge_kdf(Leaf l) { charge(l, table_.kdf); }
  void charge_mac(Leaf l) { charge(l, table_.mac); }
  void charge_context_copy(Leaf l) { charge(l, table_.context_copy); }

  const LeafStats& stats(Leaf l) const { return stats_[index(l)]; }
  std::uint64_t total_cost() const noexcept;
  std::uint64_t total_count() const noexcept;
  void reset() { stats_ = {}; }

 private:
  static std::size_t index(Leaf l) { return static_cast<std::size_t>(l); }

  CostTable table_;
  std::array<LeafStats, kLeafCount> stats_{};
};

}  // namespace ccx
