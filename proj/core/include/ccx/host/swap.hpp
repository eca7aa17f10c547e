#pragma once

// Host-side paging of enclave memory (EBLOCK / ETRACK / EWB out, ELDU in).
// Only active with a fixed EPC; with dynamic enclave memory every call is a
// no-op and the counters stay at zero.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <utility>

#include "ccx/host/driver.hpp"

namespace ccx::host {

struct SwapBlob {
  std::uint32_t eid = 0;
  VirtAddr vaddr = 0;
  PhysAddr slot = 0;
  Pcmd pcmd;
  Bytes ciphertext;

  static constexpr std::string_view kMagic = "CCXSWAP1";
  Bytes serialize() const;
  static std::optional<SwapBlob> parse(std::span<const std::uint8_t> in);
};

class SwapManager {
 public:
  // An empty directory means a private temporary one, removed on destruction.
  SwapManager(Driver& d, std::filesystem::path dir);
  ~SwapManager();
  SwapManager(const SwapManager&) = delete;
  SwapManager& operator=(const SwapManager&) = delete;

  bool active() const noexcept { return driver_.fixed_epc(); }

  // Resident pages the manager may evict, oldest first.
  void track(EnclaveId eid, VirtAddr va);
  void untrack(EnclaveId eid, VirtAddr va);
  // Drops every record of a destroyed enclave.
  void forget(EnclaveId eid);

  bool swapped(EnclaveId eid, VirtAddr va) const;
  std::size_t swapped_count() const noexcept { return swapped_.size(); }
  std::filesystem::path blob_path(EnclaveId eid, VirtAddr va) const;

  Status swap_out(EnclaveId eid, VirtAddr va);
  Status swap_in(EnclaveId eid, VirtAddr va);
  // Evicts the oldest tracked page. False when nothing can be evicted.
  bool reclaim_one();

  // Victim choice; defaults to the front of the FIFO.
  using VictimPolicy = std::function<std::optional<std::pair<EnclaveId, VirtAddr>>(
      const std::deque<std::pair<EnclaveId, VirtAddr>>&)>;
  void set_victim_policy(VictimPolicy p) { policy_ = std::move(p); }

  std::uint64_t ewb_count() const noexcept { return ewb_; }
  std::uint64_t eldu_count() const noexcept { return eldu_; }
  std::uint64_t failures() const noexcept { return failures_; }

 private:
  bool add_va_page(GranuleNum g);
  std::optional<PhysAddr> take_slot();
  Status evict(EnclaveId eid, VirtAddr va, PhysAddr slot);

  Driver& driver_;
  std::filesystem::path dir_;
  bool own_dir_ = false;
  std::deque<std::pair<EnclaveId, VirtAddr>> fifo_;
  std::map<std::pair<EnclaveId, VirtAddr>, PhysAddr> swapped_;  // -> VA slot
  std::set<PhysAddr> free_slots_;
  std::vector<GranuleNum> va_pages_;
  VictimPolicy policy_;
  bool reclaiming_ = false;
  std::uint64_t ewb_ = 0;
  std::uint64_t eldu_ = 0;
  std::uint64_t failures_ = 0;
};

}  // namespace ccx::host
