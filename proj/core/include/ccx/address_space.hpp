#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "ccx/types.hpp"

namespace ccx {

// Host page tables of the single untrusted process: virtual page -> granule.
// Maintained by the (untrusted) driver; the EPCM catches any misuse.
class AddressSpace {
 public:
  void map(VirtAddr va, GranuleNum g) { pages_[page_floor(va)] = g; }
  void unmap(VirtAddr va) { pages_.erase(page_floor(va)); }
  std::optional<GranuleNum> lookup(VirtAddr va) const {
    auto it = pages_.find(page_floor(va));
    if (it == pages_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<PhysAddr> translate(VirtAddr va) const {
    auto g = lookup(va);
    if (!g) return std::nullopt;
    return granule_base(*g) + page_offset(va);
  }
  std::size_t size() const noexcept { return pages_.size(); }
  const std::map<VirtAddr, GranuleNum>& entries() const noexcept { return pages_; }

 private:
  std::map<VirtAddr, GranuleNum> pages_;
};

}  // namespace ccx
