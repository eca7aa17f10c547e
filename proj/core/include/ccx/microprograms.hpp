#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "ccx/address_space.hpp"
#include "ccx/cost_model.hpp"
#include "ccx/crypto.hpp"
#include "ccx/enclave.hpp"
#include "ccx/leaf.hpp"
#include "ccx/memory.hpp"
#include "ccx/structs.hpp"

namespace ccx {

// What a leaf hands back through x0/x1. `fault` is set when an ENCLU leaf
// touched an enclave address that could not be accessed; the caller turns
// that into an asynchronous exit so the host can page the address in.
struct LeafResult {
  Status status = Status::kSuccess;
  std::uint64_t value = 0;
  std::optional<VirtAddr> fault;

  static LeafResult ok(std::uint64_t v = 0) { return {Status::kSuccess, v, std::nullopt}; }
  static LeafResult error(Status s) { return {s, 0, std::nullopt}; }
  bool succeeded() const noexcept { return status == Status::kSuccess; }
};

enum class AccessKind : std::uint8_t { kRead, kWrite, kExecute };

struct MemFault {
  enum class Kind : std::uint8_t { kUnmapped, kGpf, kEpcm };
  Kind kind = Kind::kUnmapped;
  VirtAddr va = 0;
  std::optional<Gpf> gpf;

  Status status() const noexcept { return kind == Kind::kGpf ? Status::kGpf : Status::kPageFault; }
};

std::string_view to_string(MemFault::Kind k) noexcept;

// The enclave thread issuing an ENCLU leaf.
struct EnclaveCaller {
  EnclaveId eid{0};
  GranuleNum tcs = 0;
};

// Validates a TCS image against the enclave geometry.
bool tcs_well_formed(const Tcs& tcs, std::uint64_t enclave_size, std::uint32_t ssa_frame_size);

// The leaf functions. Every entry point requires the execution token, so at
// most one leaf runs at a time machine-wide.
class Microprograms {
 public:
  Microprograms(MachineMemory& mem, const CryptoEngine& crypto, EnclaveRegistry& enclaves,
                const AddressSpace& as, CostLedger& costs);

  // ENCLS with register arguments (physical addresses of structures in
  // normal memory, see docs/abi.md). Unknown leaf numbers give kInvalidLeaf.
  LeafResult encls(const ExecutionToken& tok, std::uint64_t leaf, std::uint64_t a1,
                   std::uint64_t a2, std::uint64_t a3);

  // ENCLU leaves that execute entirely in the core: EREPORT, EGETKEY,
  // EACCEPT, EMODPE, EACCEPTCOPY, EDECCSSA. Entry/exit leaves belong to the
  // execution layer.
  LeafResult enclu(const ExecutionToken& tok, const EnclaveCaller& caller, Leaf leaf,
                   std::uint64_t a1, std::uint64_t a2, std::uint64_t a3);

  // Enclave-mode translation: host page table, then the enclave GPT, then
  // the EPCM (owner, address, type, state, permissions).
  Expected<GranuleNum, MemFault> resolve_enclave(EnclaveId eid, VirtAddr va, AccessKind k) const;
  // Host-mode translation: host page table and the system GPT.
  Expected<GranuleNum, MemFault> resolve_host(VirtAddr va) const;

  Expected<Bytes, MemFault> enclave_read(EnclaveId eid, VirtAddr va, std::size_t len,
                                         AccessKind k = AccessKind::kRead) const;
  Expected<std::monostate, MemFault> enclave_write(const ExecutionToken& tok, EnclaveId eid,
                                                   VirtAddr va, std::span<const std::uint8_t> data);

  Tcs load_tcs(GranuleNum g) const;
  void store_tcs(const ExecutionToken& tok, GranuleNum g, const Tcs& tcs);

  // Monitor-private record of issued paging MACs, used to tell a replayed
  // blob from a tampered one.
  std::uint64_t versions_issued() const noexcept { return version_counter_; }

  MachineMemory& memory() noexcept { return mem_; }
  const MachineMemory& memory() const noexcept { return mem_; }
  const CryptoEngine& crypto() const noexcept { return crypto_; }
  EnclaveRegistry& enclaves() noexcept { return enclaves_; }
  const EnclaveRegistry& enclaves() const noexcept { return enclaves_; }
  CostLedger& costs() noexcept { return costs_; }

 private:
  Result<Bytes> read_normal(PhysAddr pa, std::size_t len) const;
  Status write_normal(const ExecutionToken& tok, PhysAddr pa, std::span<const std::uint8_t> data);

  LeafResult ecreate(const ExecutionToken& tok, PhysAddr secs_pa, PhysAddr target);
  LeafResult eadd(const ExecutionToken& tok, PhysAddr pageinfo_pa, PhysAddr target);
  LeafResult einit(const ExecutionToken& tok, PhysAddr sigstruct_pa, std::uint64_t eid);
  LeafResult eremove(const ExecutionToken& tok, PhysAddr page);
  LeafResult edbgrd(PhysAddr pa) const;
  LeafResult edbgwr(const ExecutionToken& tok, PhysAddr pa, std::uint64_t value);
  LeafResult eextend(const ExecutionToken& tok, std::uint64_t eid, VirtAddr va);
  LeafResult eld(const ExecutionToken& tok, Leaf leaf, PhysAddr pageinfo_pa, PhysAddr target,
                 PhysAddr slot_pa);
  LeafResult eblock(const ExecutionToken& tok, PhysAddr page);
  LeafResult epa(const ExecutionToken& tok, PhysAddr page);
  LeafResult ewb(const ExecutionToken& tok, PhysAddr pageinfo_pa, PhysAddr page, PhysAddr slot_pa);
  LeafResult etrack(std::uint64_t eid);
  LeafResult eaug(const ExecutionToken& tok, PhysAddr pageinfo_pa, PhysAddr target);
  LeafResult emodpr(const ExecutionToken& tok, PhysAddr secinfo_pa, PhysAddr page);
  LeafResult emodt(const ExecutionToken& tok, PhysAddr secinfo_pa, PhysAddr page);

  LeafResult ereport(const ExecutionToken& tok, const Secs& secs, VirtAddr ti, VirtAddr rd,
                     VirtAddr out);
  LeafResult egetkey(const ExecutionToken& tok, const Secs& secs, VirtAddr req, VirtAddr out);
  LeafResult eaccept(const ExecutionToken& tok, Secs& secs, VirtAddr secinfo, VirtAddr target);
  LeafResult emodpe(const ExecutionToken& tok, Secs& secs, VirtAddr secinfo, VirtAddr target);
  LeafResult eacceptcopy(const ExecutionToken& tok, Secs& secs, VirtAddr secinfo, VirtAddr dest,
                         VirtAddr src);
  LeafResult edeccssa(const ExecutionToken& tok, const EnclaveCaller& caller);

  // Resolves a VA slot address to (granule, byte offset) if it lies in a VA page.
  std::optional<std::pair<GranuleNum, std::size_t>> va_slot(PhysAddr slot_pa) const;
  // Finds the EPCM-valid page mapped at `va` for an enclave, ignoring page state.
  Expected<GranuleNum, MemFault> own_page(EnclaveId eid, VirtAddr va) const;

  MachineMemory& mem_;
  const CryptoEngine& crypto_;
  EnclaveRegistry& enclaves_;
  const AddressSpace& as_;
  CostLedger& costs_;

  std::uint64_t version_counter_ = 0;
  std::map<Mac128, std::uint64_t> issued_;
};

}  // namespace ccx
