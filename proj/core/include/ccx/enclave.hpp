#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "ccx/crypto.hpp"
#include "ccx/types.hpp"

namespace ccx {

// Runtime view of one enclave's SECS. Lives in monitor memory; the SECS
// granule itself is only the EPC slot that pins the enclave.
struct Secs {
  EnclaveId eid{0};
  GranuleNum granule = 0;
  std::uint64_t size = 0;
  VirtAddr base = 0;
  std::uint32_t ssa_frame_size = 1;
  std::uint64_t attributes = 0;

  RunningHash measurement;
  Digest mrenclave{};
  Digest mrsigner{};
  std::uint16_t isv_prod_id = 0;
  std::uint16_t isv_svn = 0;
  Perms max_page_perms{true, true, true};

  std::uint64_t track_epoch = 0;
  // Threads currently inside, keyed by the epoch they entered in.
  std::map<std::uint64_t, std::uint64_t> entered_counts;

  // EPC-resident pages by virtual address.
  std::map<VirtAddr, GranuleNum> pages;

  bool initialized() const noexcept;
  bool contains(VirtAddr va) const noexcept { return va >= base && va - base < size; }
  std::uint64_t threads_inside() const noexcept;
  // Threads that entered at or before `epoch` and are still inside.
  std::uint64_t threads_inside_upto(std::uint64_t epoch) const noexcept;
};

class EnclaveRegistry {
 public:
  EnclaveId next_id() const noexcept { return EnclaveId{next_}; }
  Secs& create(GranuleNum secs_granule);
  void erase(EnclaveId eid);

  Secs* find(EnclaveId eid);
  const Secs* find(EnclaveId eid) const;
  std::vector<EnclaveId> ids() const;
  std::size_t count() const noexcept { return table_.size(); }

 private:
  std::uint32_t next_ = 1;  // eid 0 means "no owner" in the EPCM
  std::map<EnclaveId, std::unique_ptr<Secs>> table_;
};

}  // namespace ccx
