#pragma once

// Kernel-driver facade: granule pools, the host page table, and one wrapper
// per ENCLS leaf. Argument structures are passed through a staging granule
// in normal memory, the way an ioctl would hand them to the monitor.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>

#include "ccx/machine.hpp"

namespace ccx::host {

class Driver {
 public:
  explicit Driver(Machine& m);

  Machine& machine() noexcept { return m_; }
  const Machine& machine() const noexcept { return m_; }
  // True when enclave pages come from the fixed EPC carve-out.
  bool fixed_epc() const noexcept { return fixed_; }

  // Granules that may become enclave pages. When the pool is empty the
  // reclaimer (the swap manager) is asked to free one.
  std::optional<GranuleNum> alloc_epc();
  std::optional<GranuleNum> alloc_epc_no_reclaim();
  void free_epc(GranuleNum g);
  std::size_t epc_free() const noexcept { return epc_pool_.size(); }
  void set_reclaimer(std::function<bool()> r) { reclaim_ = std::move(r); }

  std::optional<GranuleNum> alloc_host();
  void free_host(GranuleNum g);
  std::size_t host_free() const noexcept;

  // Host virtual address space.
  VirtAddr reserve_range(std::uint64_t size);
  VirtAddr map_host_page(GranuleNum g);
  void map(VirtAddr va, GranuleNum g) { m_.address_space().map(va, g); }
  void unmap(VirtAddr va) { m_.address_space().unmap(va); }

  // Normal-world page used for page contents and swap ciphertext.
  PhysAddr bounce() const noexcept { return granule_base(bounce_); }
  PhysAddr pcmd_area() const noexcept { return granule_base(staging_) + kPcmdOffset; }

  LeafResult ecreate(const SecsTemplate& t, GranuleNum target);
  LeafResult eadd(const PageInfo& pi, GranuleNum target);
  LeafResult eextend(EnclaveId eid, VirtAddr va);
  LeafResult einit(const SigStruct& sig, EnclaveId eid);
  LeafResult eremove(GranuleNum g);
  LeafResult edbgrd(PhysAddr pa);
  LeafResult edbgwr(PhysAddr pa, std::uint64_t value);
  LeafResult eblock(GranuleNum g);
  LeafResult etrack(EnclaveId eid);
  LeafResult epa(GranuleNum g);
  // Page goes to bounce(); PCMD to pcmd_area().
  LeafResult ewb(GranuleNum g, PhysAddr slot);
  // Expects the ciphertext in bounce() and the PCMD in pcmd_area().
  LeafResult eld(bool blocked, VirtAddr va, EnclaveId eid, GranuleNum target, PhysAddr slot);
  LeafResult eaug(EnclaveId eid, VirtAddr va, GranuleNum target);
  LeafResult emodpr(const SecInfo& si, GranuleNum g);
  LeafResult emodt(const SecInfo& si, GranuleNum g);

 private:
  static constexpr std::size_t kArgOffset = 0x0;
  static constexpr std::size_t kSecinfoOffset = 0x100;
  static constexpr std::size_t kSigOffset = 0x200;
  static constexpr std::size_t kPcmdOffset = 0x400;

  PhysAddr stage(std::size_t offset, std::span<const std::uint8_t> data);
  PhysAddr stage_pageinfo(const PageInfo& pi);

  Machine& m_;
  bool fixed_;
  std::set<GranuleNum> epc_pool_;
  std::set<GranuleNum> host_pool_;  // same set as epc_pool_ when memory is dynamic
  std::function<bool()> reclaim_;
  GranuleNum staging_ = 0;
  GranuleNum bounce_ = 0;
  VirtAddr next_host_va_ = 0x10000000;
  VirtAddr next_range_ = 0x100000000;
};

}  // namespace ccx::host
