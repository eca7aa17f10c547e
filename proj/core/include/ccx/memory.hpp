#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ccx/types.hpp"

namespace ccx {

// Fixed EPC carved out of physical memory, as on SGX hardware.
struct SgxFixed {
  GranuleNum epc_base = 0;
  std::uint64_t epc_size = 0;
  friend bool operator==(const SgxFixed&, const SgxFixed&) = default;
};

// Any normal granule may become enclave memory by flipping its GPT entries.
struct CcaDynamic {
  friend bool operator==(const CcaDynamic&, const CcaDynamic&) = default;
};

using MemoryMode = std::variant<SgxFixed, CcaDynamic>;

inline bool is_sgx_fixed(const MemoryMode& m) { return std::holds_alternative<SgxFixed>(m); }

// Names one of the tables in a GptSet.
struct GptSelector {
  std::optional<EnclaveId> enclave;

  static GptSelector system() { return {}; }
  static GptSelector of(EnclaveId eid) { return {eid}; }
  bool is_system() const { return !enclave.has_value(); }
  friend bool operator==(const GptSelector&, const GptSelector&) = default;
};

std::string to_string(const GptSelector& sel);

enum class Verdict : std::uint8_t { kAllow, kDeny };

struct AccessContext {
  SecurityState state = SecurityState::kNormal;
  GptSelector gpt;
};

// Granule protection fault record. A simulated fault, not a host error.
struct Gpf {
  GranuleNum granule = 0;
  SecurityState accessor = SecurityState::kNormal;
  Pas pas = Pas::kNormal;
  GptSelector gpt;
  friend bool operator==(const Gpf&, const Gpf&) = default;
};

// Proof that the caller holds the machine-wide execution token. Every
// mutation of machine state takes one by reference.
class ExecutionToken {
 public:
  explicit ExecutionToken(std::mutex& m) : lock_(m) {}

 private:
  std::unique_lock<std::mutex> lock_;
};

// Pure Table-1 lookup, extended with NoAccess (deny all but Root).
Verdict pas_permits(SecurityState accessor, Pas pas) noexcept;

class GptSet {
 public:
  explicit GptSet(std::uint64_t granule_count);

  std::uint64_t granule_count() const noexcept { return system_.size(); }
  bool has_table(const GptSelector& sel) const;
  Pas entry(const GptSelector& sel, GranuleNum g) const;
  std::vector<EnclaveId> enclave_ids() const;

  // New enclave tables start as a copy of the system table, so foreign
  // enclave memory is already NoAccess in them.
  void create_enclave_table(EnclaveId eid);
  void destroy_enclave_table(EnclaveId eid);

  void assign(EnclaveId eid, GranuleNum g);
  void reserve(GranuleNum g);
  void release(GranuleNum g);
  // Same entry in every table.
  void set_uniform(GranuleNum g, Pas pas);

  // Which enclave table (if any) holds g as Realm.
  std::optional<EnclaveId> realm_owner(GranuleNum g) const;

  // Cross-table invariant: every granule is either identical in all tables,
  // Realm in exactly one enclave table and NoAccess elsewhere, or NoAccess
  // everywhere.
  std::optional<std::string> audit() const;

  friend bool operator==(const GptSet&, const GptSet&) = default;

  const std::vector<Pas>& table(const GptSelector& sel) const;

 private:

  std::vector<Pas> system_;
  std::map<EnclaveId, std::vector<Pas>> enclaves_;
};

struct EpcmEntry {
  bool valid = false;
  PageType type = PageType::kSecs;
  EnclaveId owner{0};
  VirtAddr vaddr = 0;
  Perms perms{};
  bool blocked = false;
  bool pending = false;
  bool modified = false;
  // Tracking epoch of the owning enclave when the page was blocked.
  std::uint64_t blocked_epoch = 0;

  friend bool operator==(const EpcmEntry&, const EpcmEntry&) = default;
};

// Physical memory, the GPT set and the EPCM. All loads and stores issued by
// simulated software go through check_access().
class MachineMemory {
 public:
  MachineMemory(std::uint64_t granule_count, MemoryMode mode);

  std::uint64_t granule_count() const noexcept { return gpts_.granule_count(); }
  const MemoryMode& mode() const noexcept { return mode_; }
  bool in_range(GranuleNum g) const noexcept { return g < granule_count(); }
  // In CcaDynamic every granule is EPC-admissible.
  bool epc_admissible(GranuleNum g) const noexcept;

  // Throws ModelError for an out-of-range granule or an unknown table.
  Verdict check_access(SecurityState accessor, GranuleNum g, const GptSelector& gpt) const;

  Expected<Bytes, Gpf> read_granule(const AccessContext& ctx, GranuleNum g, std::size_t offset,
                                    std::size_t len) const;
  Expected<std::monostate, Gpf> write_granule(const ExecutionToken& tok, const AccessContext& ctx,
                                              GranuleNum g, std::size_t offset,
                                              std::span<const std::uint8_t> data);

  // Root-privileged views used by microprograms.
  std::span<const std::uint8_t> raw(GranuleNum g) const;
  std::span<std::uint8_t> raw_mut(const ExecutionToken& tok, GranuleNum g);
  void scrub(const ExecutionToken& tok, GranuleNum g);

  // Enclave table lifecycle. The SECS granule is remembered so the EPCM
  // invariant "SECS owner refers to itself" can be checked.
  void create_enclave_gpt(const ExecutionToken& tok, EnclaveId eid, GranuleNum secs_granule);
  void destroy_enclave_gpt(const ExecutionToken& tok, EnclaveId eid);
  std::optional<GranuleNum> secs_granule_of(EnclaveId eid) const;

  Status assign_granule(const ExecutionToken& tok, EnclaveId eid, GranuleNum g);
  Status unassign_granule(const ExecutionToken& tok, EnclaveId eid, GranuleNum g);
  // Monitor-owned EPC pages (version arrays): NoAccess in every table.
  Status reserve_granule(const ExecutionToken& tok, GranuleNum g);
  Status release_reserved(const ExecutionToken& tok, GranuleNum g);
  // Firmware carve-out: moves a non-enclave granule between the Normal,
  // Secure and Root worlds.
  Status set_world(const ExecutionToken& tok, GranuleNum g, Pas pas);

  const EpcmEntry& epcm_lookup(GranuleNum g) const;
  void epcm_update(const ExecutionToken& tok, GranuleNum g, const EpcmEntry& e);

  const GptSet& gpts() const noexcept { return gpts_; }

  // Full audit of the GPT exclusivity invariant, EPCM invariants and mode
  // confinement. Returns a description of the first violation.
  std::optional<std::string> audit() const;

 private:
  using Page = std::array<std::uint8_t, kGranuleSize>;

  void require_range(GranuleNum g) const;
  std::optional<std::string> epcm_violation(GranuleNum g, const EpcmEntry& e) const;

  MemoryMode mode_;
  GptSet gpts_;
  std::vector<EpcmEntry> epcm_;
  std::map<EnclaveId, GranuleNum> secs_granules_;
  // Sparse backing store; an absent granule reads as zeros.
  std::unordered_map<GranuleNum, std::unique_ptr<Page>> pages_;
};

}  // namespace ccx
