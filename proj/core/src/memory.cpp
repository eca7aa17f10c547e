#include "ccx/memory.hpp"

#include <algorithm>
#include <sstream>

namespace ccx {
namespace {

const std::array<std::uint8_t, kGranuleSize>& zero_page() {
  static const std::array<std::uint8_t, kGranuleSize> zeros{};
  return zeros;
}

}  // namespace

std::string to_string(const GptSelector& sel) {
  if (sel.is_system()) return "sys";
  return "encl:" + std::to_string(to_underlying(*sel.enclave));
}

Verdict pas_permits(SecurityState accessor, Pas pas) noexcept {
  if (accessor == SecurityState::kRoot) return Verdict::kAllow;
  switch (pas) {
    case Pas::kNormal:
      return Verdict::kAllow;
    case Pas::kSecure:
      return accessor == SecurityState::kSecure ? Verdict::kAllow : Verdict::kDeny;
    case Pas::kRealm:
      return accessor == SecurityState::kRealm ? Verdict::kAllow : Verdict::kDeny;
    case Pas::kRoot:
    case Pas::kNoAccess:
      return Verdict::kDeny;
  }
  return Verdict::kDeny;
}

// --- GptSet ---------------------------------------------------------------

GptSet::GptSet(std::uint64_t granule_count) : system_(granule_count, Pas::kNormal) {}

bool GptSet::has_table(const GptSelector& sel) const {
  return sel.is_system() || enclaves_.count(*sel.enclave) != 0;
}

const std::vector<Pas>& GptSet::table(const GptSelector& sel) const {
  if (sel.is_system()) return system_;
  auto it = enclaves_.find(*sel.enclave);
  if (it == enclaves_.end()) throw ModelError("unknown GPT " + to_string(sel));
  return it->second;
}

Pas GptSet::entry(const GptSelector& sel, GranuleNum g) const {
  const auto& t = table(sel);
  if (g >= t.size()) throw ModelError("granule " + std::to_string(g) + " out of range");
  return t[g];
}

std::vector<EnclaveId> GptSet::enclave_ids() const {
  std::vector<EnclaveId> ids;
  ids.reserve(enclaves_.size());
  for (const auto& [eid, _] : enclaves_) ids.push_back(eid);
  return ids;
}

void GptSet::create_enclave_table(EnclaveId eid) {
  if (enclaves_.count(eid) != 0) throw ModelError("GPT already exists for enclave");
  // Built entry by entry from the system table rather than cloned wholesale;
  // this is the per-granule population the cost model charges ECREATE for.
  std::vector<Pas> t(system_.size());
  for (std::size_t g = 0; g < system_.size(); ++g) t[g] = system_[g];
  enclaves_.emplace(eid, std::move(t));
}

void GptSet::destroy_enclave_table(EnclaveId eid) {
  if (enclaves_.erase(eid) == 0) throw ModelError("no GPT for enclave");
}

void GptSet::assign(EnclaveId eid, GranuleNum g) {
  auto it = enclaves_.find(eid);
  if (it == enclaves_.end()) throw ModelError("assign into unknown GPT");
  system_.at(g) = Pas::kNoAccess;
  for (auto& [other, t] : enclaves_) t.at(g) = (other == eid) ? Pas::kRealm : Pas::kNoAccess;
}

void GptSet::reserve(GranuleNum g) {
  system_.at(g) = Pas::kNoAccess;
  for (auto& [_, t] : enclaves_) t.at(g) = Pas::kNoAccess;
}

void GptSet::release(GranuleNum g) {
  system_.at(g) = Pas::kNormal;
  for (auto& [_, t] : enclaves_) t.at(g) = Pas::kNormal;
}

void GptSet::set_uniform(GranuleNum g, Pas pas) {
  system_.at(g) = pas;
  for (auto& [_, t] : enclaves_) t.at(g) = pas;
}

std::optional<EnclaveId> GptSet::realm_owner(GranuleNum g) const {
  for (const auto& [eid, t] : enclaves_) {
    if (t.at(g) == Pas::kRealm) return eid;
  }
  return std::nullopt;
}

std::optional<std::string> GptSet::audit() const {
  for (GranuleNum g = 0; g < system_.size(); ++g) {
    const Pas sys = system_[g];
    int realm = 0;
    bool uniform = true;
    bool rest_no_access = sys == Pas::kNoAccess;
    for (const auto& [_, t] : enclaves_) {
      if (t[g] == Pas::kRealm) {
        ++realm;
      } else if (t[g] != Pas::kNoAccess) {
        rest_no_access = false;
      }
      if (t[g] != sys) uniform = false;
    }
    if (realm > 1) return "granule " + std::to_string(g) + " is Realm in several GPTs";
    if (realm == 1 && !rest_no_access) {
      return "granule " + std::to_string(g) + " is Realm in one GPT but reachable elsewhere";
    }
    if (realm == 0 && !uniform) {
      return "granule " + std::to_string(g) + " differs between GPTs without an owner";
    }
  }
  return std::nullopt;
}

// --- MachineMemory --------------------------------------------------------

MachineMemory::MachineMemory(std::uint64_t granule_count, MemoryMode mode)
    : mode_(mode), gpts_(granule_count), epcm_(granule_count) {
  if (granule_count == 0) throw ModelError("granule count must be positive");
  if (const auto* fixed = std::get_if<SgxFixed>(&mode_)) {
    if (fixed->epc_size == 0 || fixed->epc_base + fixed->epc_size > granule_count) {
      throw ModelError("EPC range exceeds physical memory");
    }
  }
}

bool MachineMemory::epc_admissible(GranuleNum g) const noexcept {
  if (!in_range(g)) return false;
  if (const auto* fixed = std::get_if<SgxFixed>(&mode_)) {
    return g >= fixed->epc_base && g < fixed->epc_base + fixed->epc_size;
  }
  return true;
}

void MachineMemory::require_range(GranuleNum g) const {
  if (!in_range(g)) {
    throw ModelError("granule " + std::to_string(g) + " out of range (" +
                     std::to_string(granule_count()) + " granules)");
  }
}

Verdict MachineMemory::check_access(SecurityState accessor, GranuleNum g,
                                    const GptSelector& gpt) const {
  require_range(g);
  return pas_permits(accessor, gpts_.entry(gpt, g));
}

Expected<Bytes, Gpf> MachineMemory::read_granule(const AccessContext& ctx, GranuleNum g,
                                                 std::size_t offset, std::size_t len) const {
  if (offset > kGranuleSize || len > kGranuleSize - offset) {
    throw ModelError("granule read crosses the granule boundary");
  }
  if (check_access(ctx.state, g, ctx.gpt) == Verdict::kDeny) {
    return Unexpected(Gpf{g, ctx.state, gpts_.entry(ctx.gpt, g), ctx.gpt});
  }
  auto src = raw(g).subspan(offset, len);
  return Bytes(src.begin(), src.end());
}

Expected<std::monostate, Gpf> MachineMemory::write_granule(const ExecutionToken& tok,
                                                           const AccessContext& ctx, GranuleNum g,
                                                           std::size_t offset,
                                                           std::span<const std::uint8_t> data) {
  if (offset > kGranuleSize || data.size() > kGranuleSize - offset) {
    throw ModelError("granule write crosses the granule boundary");
  }
  if (check_access(ctx.state, g, ctx.gpt) == Verdict::kDeny) {
    return Unexpected(Gpf{g, ctx.state, gpts_.entry(ctx.gpt, g), ctx.gpt});
  }
  auto dst = raw_mut(tok, g);
  std::copy(data.begin(), data.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
  return std::monostate{};
}

std::span<const std::uint8_t> MachineMemory::raw(GranuleNum g) const {
  require_range(g);
  auto it = pages_.find(g);
  if (it == pages_.end()) return zero_page();
  return *it->second;
}

std::span<std::uint8_t> MachineMemory::raw_mut(const ExecutionToken&, GranuleNum g) {
  require_range(g);
  auto& slot = pages_[g];
  if (!slot) slot = std::make_unique<Page>();
  return *slot;
}

void MachineMemory::scrub(const ExecutionToken&, GranuleNum g) {
  require_range(g);
  pages_.erase(g);
}

void MachineMemory::create_enclave_gpt(const ExecutionToken&, EnclaveId eid,
                                       GranuleNum secs_granule) {
  require_range(secs_granule);
  gpts_.create_enclave_table(eid);
  secs_granules_[eid] = secs_granule;
}

void MachineMemory::destroy_enclave_gpt(const ExecutionToken&, EnclaveId eid) {
  gpts_.destroy_enclave_table(eid);
  secs_granules_.erase(eid);
}

std::optional<GranuleNum> MachineMemory::secs_granule_of(EnclaveId eid) const {
  auto it = secs_granules_.find(eid);
  if (it == secs_granules_.end()) return std::nullopt;
  return it->second;
}

Status MachineMemory::assign_granule(const ExecutionToken&, EnclaveId eid, GranuleNum g) {
  require_range(g);
  if (!gpts_.has_table(GptSelector::of(eid))) throw ModelError("assign to unknown enclave");
  if (!epc_admissible(g)) return Status::kOutsideEpc;
  if (gpts_.entry(GptSelector::system(), g) != Pas::kNormal || epcm_[g].valid) {
    return Status::kPageOccupied;
  }
  gpts_.assign(eid, g);
  return Status::kSuccess;
}

Status MachineMemory::unassign_granule(const ExecutionToken& tok, EnclaveId eid, GranuleNum g) {
  require_range(g);
  if (!gpts_.has_table(GptSelector::of(eid)) ||
      gpts_.entry(GptSelector::of(eid), g) != Pas::kRealm) {
    return Status::kNotOwner;
  }
  scrub(tok, g);
  gpts_.release(g);
  return Status::kSuccess;
}

Status MachineMemory::reserve_granule(const ExecutionToken&, GranuleNum g) {
  require_range(g);
  if (!epc_admissible(g)) return Status::kOutsideEpc;
  if (gpts_.entry(GptSelector::system(), g) != Pas::kNormal || epcm_[g].valid) {
    return Status::kPageOccupied;
  }
  gpts_.reserve(g);
  return Status::kSuccess;
}

Status MachineMemory::release_reserved(const ExecutionToken& tok, GranuleNum g) {
  require_range(g);
  if (gpts_.entry(GptSelector::system(), g) != Pas::kNoAccess || gpts_.realm_owner(g)) {
    return Status::kNotOwner;
  }
  scrub(tok, g);
  gpts_.release(g);
  return Status::kSuccess;
}

Status MachineMemory::set_world(const ExecutionToken& tok, GranuleNum g, Pas pas) {
  require_range(g);
  auto world = [](Pas p) { return p == Pas::kNormal || p == Pas::kSecure || p == Pas::kRoot; };
  if (!world(pas)) return Status::kInvalidParameter;
  if (!world(gpts_.entry(GptSelector::system(), g)) || epcm_[g].valid) return Status::kPageOccupied;
  if (is_sgx_fixed(mode_) && epc_admissible(g)) return Status::kPageOccupied;
  scrub(tok, g);
  gpts_.set_uniform(g, pas);
  return Status::kSuccess;
}

const EpcmEntry& MachineMemory::epcm_lookup(GranuleNum g) const {
  require_range(g);
  return epcm_[g];
}

std::optional<std::string> MachineMemory::epcm_violation(GranuleNum g, const EpcmEntry& e) const {
  if (!e.valid) {
    if (!(e == EpcmEntry{})) return "invalid EPCM entry is not cleared";
    return std::nullopt;
  }
  if (e.pending && e.modified) return "EPCM entry both pending and modified";
  if (e.type == PageType::kSecs) {
    auto secs = secs_granule_of(e.owner);
    if (!secs || *secs != g) return "SECS entry does not refer to itself";
  }
  return std::nullopt;
}

void MachineMemory::epcm_update(const ExecutionToken&, GranuleNum g, const EpcmEntry& e) {
  require_range(g);
  if (auto why = epcm_violation(g, e)) {
    throw ModelError("EPCM update rejected at granule " + std::to_string(g) + ": " + *why);
  }
  epcm_[g] = e;
}

std::optional<std::string> MachineMemory::audit() const {
  if (auto why = gpts_.audit()) return why;
  const auto ids = gpts_.enclave_ids();
  for (GranuleNum g = 0; g < granule_count(); ++g) {
    const EpcmEntry& e = epcm_[g];
    const Pas sys = gpts_.entry(GptSelector::system(), g);
    auto fail_at = [g](const std::string& what) {
      std::ostringstream os;
      os << "granule " << g << ": " << what;
      return os.str();
    };
    if (auto why = epcm_violation(g, e)) return fail_at(*why);
    if (e.valid && !epc_admissible(g)) return fail_at("EPCM-valid granule outside the EPC");

    if (e.valid && e.type == PageType::kVa) {
      if (sys != Pas::kNoAccess) return fail_at("VA page reachable from system GPT");
      for (auto eid : ids) {
        if (gpts_.entry(GptSelector::of(eid), g) != Pas::kNoAccess) {
          return fail_at("VA page reachable from an enclave GPT");
        }
      }
      continue;
    }
    if (e.valid) {
      if (sys != Pas::kNoAccess) return fail_at("enclave page not NoAccess in system GPT");
      if (!gpts_.has_table(GptSelector::of(e.owner))) return fail_at("owner has no GPT");
      for (auto eid : ids) {
        const Pas want = (eid == e.owner) ? Pas::kRealm : Pas::kNoAccess;
        if (gpts_.entry(GptSelector::of(eid), g) != want) {
          return fail_at("enclave page not exclusive to its owner");
        }
      }
      continue;
    }
    if (sys != Pas::kNormal && sys != Pas::kSecure && sys != Pas::kRoot) {
      return fail_at("free granule is not in a world in the system GPT");
    }
    for (auto eid : ids) {
      if (gpts_.entry(GptSelector::of(eid), g) != sys) {
        return fail_at("free granule differs between GPTs");
      }
    }
  }
  return std::nullopt;
}

}  // namespace ccx
