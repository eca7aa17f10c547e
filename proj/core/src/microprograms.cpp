#include "ccx/microprograms.hpp"

#include <algorithm>
#include <bit>

#include "ccx/bytes.hpp"
#include "ccx/measurement.hpp"

namespace ccx {
namespace {

constexpr AccessContext kHostView{SecurityState::kNormal, GptSelector{}};

// PCMD keeps the EPCM state bits next to the SECINFO fields.
constexpr std::uint64_t kPcmdPending = 1u << 3;
constexpr std::uint64_t kPcmdModified = 1u << 4;

bool page_aligned(std::uint64_t a) { return a % kGranuleSize == 0; }

bool fits_in_granule(PhysAddr pa, std::size_t len) {
  return len <= kGranuleSize && page_offset(pa) + len <= kGranuleSize;
}

}  // namespace

std::string_view to_string(MemFault::Kind k) noexcept {
  switch (k) {
    case MemFault::Kind::kUnmapped: return "unmapped";
    case MemFault::Kind::kGpf: return "gpf";
    case MemFault::Kind::kEpcm: return "epcm";
  }
  return "?";
}

bool tcs_well_formed(const Tcs& tcs, std::uint64_t enclave_size, std::uint32_t ssa_frame_size) {
  if (tcs.busy != 0 || tcs.cssa != 0 || tcs.nssa == 0) return false;
  if ((tcs.flags & ~(kTcsDbgOptIn | kTcsAexNotify)) != 0) return false;
  if (tcs.oentry >= enclave_size || tcs.tls_base >= enclave_size) return false;
  if (!page_aligned(tcs.ossa)) return false;
  const std::uint64_t ssa_bytes = std::uint64_t{tcs.nssa} * ssa_frame_size * kGranuleSize;
  return tcs.ossa < enclave_size && ssa_bytes <= enclave_size - tcs.ossa;
}

Microprograms::Microprograms(MachineMemory& mem, const CryptoEngine& crypto,
                             EnclaveRegistry& enclaves, const AddressSpace& as, CostLedger& costs)
    : mem_(mem), crypto_(crypto), enclaves_(enclaves), as_(as), costs_(costs) {}

// --- plumbing --------------------------------------------------------------

Result<Bytes> Microprograms::read_normal(PhysAddr pa, std::size_t len) const {
  if (!fits_in_granule(pa, len)) return fail(Status::kMisaligned);
  if (!mem_.in_range(granule_of(pa))) return fail(Status::kInvalidParameter);
  auto r = mem_.read_granule(kHostView, granule_of(pa), page_offset(pa), len);
  if (!r) return fail(Status::kGpf);
  return std::move(*r);
}

Status Microprograms::write_normal(const ExecutionToken& tok, PhysAddr pa,
                                   std::span<const std::uint8_t> data) {
  if (!fits_in_granule(pa, data.size())) return Status::kMisaligned;
  if (!mem_.in_range(granule_of(pa))) return Status::kInvalidParameter;
  auto r = mem_.write_granule(tok, kHostView, granule_of(pa), page_offset(pa), data);
  return r ? Status::kSuccess : Status::kGpf;
}

Tcs Microprograms::load_tcs(GranuleNum g) const { return Tcs::load(mem_.raw(g)); }

void Microprograms::store_tcs(const ExecutionToken& tok, GranuleNum g, const Tcs& tcs) {
  tcs.store(mem_.raw_mut(tok, g));
}

Expected<GranuleNum, MemFault> Microprograms::resolve_host(VirtAddr va) const {
  auto g = as_.lookup(va);
  if (!g || !mem_.in_range(*g)) return Unexpected(MemFault{MemFault::Kind::kUnmapped, va, {}});
  const auto sel = GptSelector::system();
  if (mem_.check_access(SecurityState::kNormal, *g, sel) == Verdict::kDeny) {
    Gpf gpf{*g, SecurityState::kNormal, mem_.gpts().entry(sel, *g), sel};
    return Unexpected(MemFault{MemFault::Kind::kGpf, va, gpf});
  }
  return *g;
}

Expected<GranuleNum, MemFault> Microprograms::resolve_enclave(EnclaveId eid, VirtAddr va,
                                                              AccessKind k) const {
  const Secs* secs = enclaves_.find(eid);
  if (!secs) throw ModelError("enclave-mode access for unknown enclave");
  auto g = as_.lookup(va);
  if (!g || !mem_.in_range(*g)) return Unexpected(MemFault{MemFault::Kind::kUnmapped, va, {}});
  const auto sel = GptSelector::of(eid);
  if (mem_.check_access(SecurityState::kRealm, *g, sel) == Verdict::kDeny) {
    Gpf gpf{*g, SecurityState::kRealm, mem_.gpts().entry(sel, *g), sel};
    return Unexpected(MemFault{MemFault::Kind::kGpf, va, gpf});
  }
  const EpcmEntry& e = mem_.epcm_lookup(*g);
  const MemFault epcm_fault{MemFault::Kind::kEpcm, va, {}};
  if (secs->contains(va)) {
    if (!e.valid || e.owner != eid || e.vaddr != page_floor(va) || e.type != PageType::kReg ||
        e.blocked || e.pending) {
      return Unexpected(epcm_fault);
    }
    const bool allowed = (k == AccessKind::kRead && e.perms.r) ||
                         (k == AccessKind::kWrite && e.perms.w) ||
                         (k == AccessKind::kExecute && e.perms.x);
    if (!allowed) return Unexpected(epcm_fault);
  } else {
    // Outside ELRANGE: ordinary memory only, and never executable.
    if (e.valid || k == AccessKind::kExecute) return Unexpected(epcm_fault);
  }
  return *g;
}

Expected<Bytes, MemFault> Microprograms::enclave_read(EnclaveId eid, VirtAddr va, std::size_t len,
                                                      AccessKind k) const {
  Bytes out;
  out.reserve(len);
  while (len > 0) {
    auto g = resolve_enclave(eid, va, k);
    if (!g) return Unexpected(g.error());
    const std::size_t off = page_offset(va);
    const std::size_t n = std::min(len, kGranuleSize - off);
    auto src = mem_.raw(*g).subspan(off, n);
    out.insert(out.end(), src.begin(), src.end());
    va += n;
    len -= n;
  }
  return out;
}

Expected<std::monostate, MemFault> Microprograms::enclave_write(const ExecutionToken& tok,
                                                                EnclaveId eid, VirtAddr va,
                                                                std::span<const std::uint8_t> data) {
  // Resolve every page first so a fault leaves memory untouched.
  std::vector<std::pair<GranuleNum, std::size_t>> spans;
  for (VirtAddr cur = va, end = va + data.size(); cur < end;) {
    auto g = resolve_enclave(eid, cur, AccessKind::kWrite);
    if (!g) return Unexpected(g.error());
    const std::size_t n = std::min<std::uint64_t>(end - cur, kGranuleSize - page_offset(cur));
    spans.emplace_back(*g, n);
    cur += n;
  }
  std::size_t done = 0;
  VirtAddr cur = va;
  for (auto [g, n] : spans) {
    auto dst = mem_.raw_mut(tok, g);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(done), n,
                dst.begin() + static_cast<std::ptrdiff_t>(page_offset(cur)));
    done += n;
    cur += n;
  }
  return std::monostate{};
}

Expected<GranuleNum, MemFault> Microprograms::own_page(EnclaveId eid, VirtAddr va) const {
  auto g = as_.lookup(va);
  if (!g || !mem_.in_range(*g)) return Unexpected(MemFault{MemFault::Kind::kUnmapped, va, {}});
  const EpcmEntry& e = mem_.epcm_lookup(*g);
  if (!e.valid || e.owner != eid || e.vaddr != page_floor(va) || e.type == PageType::kSecs) {
    return Unexpected(MemFault{MemFault::Kind::kEpcm, va, {}});
  }
  return *g;
}

std::optional<std::pair<GranuleNum, std::size_t>> Microprograms::va_slot(PhysAddr slot_pa) const {
  if (slot_pa % kVaSlotBytes != 0) return std::nullopt;
  const GranuleNum g = granule_of(slot_pa);
  if (!mem_.in_range(g)) return std::nullopt;
  const EpcmEntry& e = mem_.epcm_lookup(g);
  if (!e.valid || e.type != PageType::kVa) return std::nullopt;
  return std::make_pair(g, page_offset(slot_pa));
}

// --- dispatch --------------------------------------------------------------

LeafResult Microprograms::encls(const ExecutionToken& tok, std::uint64_t leaf_number,
                                std::uint64_t a1, std::uint64_t a2, std::uint64_t a3) {
  auto leaf = decode_leaf(LeafClass::kEncls, leaf_number);
  if (!leaf) return LeafResult::error(Status::kInvalidLeaf);
  costs_.begin(*leaf);
  switch (*leaf) {
    case Leaf::kEcreate: return ecreate(tok, a1, a2);
    case Leaf::kEadd: return eadd(tok, a1, a2);
    case Leaf::kEinit: return einit(tok, a1, a2);
    case Leaf::kEremove: return eremove(tok, a1);
    case Leaf::kEdbgrd: return edbgrd(a1);
    case Leaf::kEdbgwr: return edbgwr(tok, a1, a2);
    case Leaf::kEextend: return eextend(tok, a1, a2);
    case Leaf::kEldb:
    case Leaf::kEldu: return eld(tok, *leaf, a1, a2, a3);
    case Leaf::kEblock: return eblock(tok, a1);
    case Leaf::kEpa: return epa(tok, a1);
    case Leaf::kEwb: return ewb(tok, a1, a2, a3);
    case Leaf::kEtrack: return etrack(a1);
    case Leaf::kEaug: return eaug(tok, a1, a2);
    case Leaf::kEmodpr: return emodpr(tok, a1, a2);
    case Leaf::kEmodt: return emodt(tok, a1, a2);
    default: break;
  }
  return LeafResult::error(Status::kInvalidLeaf);
}

LeafResult Microprograms::enclu(const ExecutionToken& tok, const EnclaveCaller& caller, Leaf leaf,
                                std::uint64_t a1, std::uint64_t a2, std::uint64_t a3) {
  Secs* secs = enclaves_.find(caller.eid);
  if (!secs) throw ModelError("ENCLU from unknown enclave");
  costs_.begin(leaf);
  LeafResult r;
  switch (leaf) {
    case Leaf::kEreport: r = ereport(tok, *secs, a1, a2, a3); break;
    case Leaf::kEgetkey: r = egetkey(tok, *secs, a1, a2); break;
    case Leaf::kEaccept: r = eaccept(tok, *secs, a1, a2); break;
    case Leaf::kEmodpe: r = emodpe(tok, *secs, a1, a2); break;
    case Leaf::kEacceptcopy: r = eacceptcopy(tok, *secs, a1, a2, a3); break;
    case Leaf::kEdeccssa: r = edeccssa(tok, caller); break;
    default: return LeafResult::error(Status::kInvalidLeaf);
  }
  return r;
}

// --- ENCLS -----------------------------------------------------------------

LeafResult Microprograms::ecreate(const ExecutionToken& tok, PhysAddr secs_pa, PhysAddr target) {
  auto raw = read_normal(secs_pa, SecsTemplate::kBytes);
  if (!raw) return LeafResult::error(raw.error());
  const SecsTemplate t = SecsTemplate::load(*raw);

  if (!page_aligned(target)) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(target);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);

  if (t.size < 2 * kGranuleSize || !std::has_single_bit(t.size) || t.base % t.size != 0 ||
      t.base + t.size < t.base || t.ssa_frame_size == 0 ||
      std::uint64_t{t.ssa_frame_size} * kGranuleSize > t.size) {
    return LeafResult::error(Status::kGeometry);
  }
  if ((t.attributes & ~kAttrRequestable) != 0) return LeafResult::error(Status::kInvalidParameter);
  if (!mem_.epc_admissible(g)) return LeafResult::error(Status::kOutsideEpc);
  if (mem_.epcm_lookup(g).valid || mem_.gpts().entry(GptSelector::system(), g) != Pas::kNormal) {
    return LeafResult::error(Status::kPageOccupied);
  }

  Secs& secs = enclaves_.create(g);
  secs.size = t.size;
  secs.base = t.base;
  secs.ssa_frame_size = t.ssa_frame_size;
  secs.attributes = t.attributes;

  // The new table is populated entry by entry from the system table.
  mem_.create_enclave_gpt(tok, secs.eid, g);
  costs_.charge_gpt_entries(Leaf::kEcreate, mem_.granule_count());

  const Status st = mem_.assign_granule(tok, secs.eid, g);
  if (st != Status::kSuccess) throw ModelError("ECREATE could not assign a checked granule");
  mem_.scrub(tok, g);
  EpcmEntry e;
  e.valid = true;
  e.type = PageType::kSecs;
  e.owner = secs.eid;
  mem_.epcm_update(tok, g, e);

  secs.measurement.absorb(ecreate_record(t.size, t.ssa_frame_size));
  costs_.charge_hash_blocks(Leaf::kEcreate, 1);
  return LeafResult::ok(to_underlying(secs.eid));
}

LeafResult Microprograms::eadd(const ExecutionToken& tok, PhysAddr pageinfo_pa, PhysAddr target) {
  auto raw = read_normal(pageinfo_pa, PageInfo::kBytes);
  if (!raw) return LeafResult::error(raw.error());
  const PageInfo pi = PageInfo::load(*raw);

  Secs* secs = enclaves_.find(EnclaveId{static_cast<std::uint32_t>(pi.eid)});
  if (!secs || pi.eid > UINT32_MAX) return LeafResult::error(Status::kInvalidParameter);
  if (secs->initialized()) return LeafResult::error(Status::kAlreadyInitialized);

  auto si = SecInfo::unpack(pi.secinfo);
  if (!si || (si->type != PageType::kReg && si->type != PageType::kTcs)) {
    return LeafResult::error(Status::kInvalidParameter);
  }
  const SecInfo norm = si->normalized();
  if (!page_aligned(pi.vaddr) || !page_aligned(target) || !page_aligned(pi.src)) {
    return LeafResult::error(Status::kMisaligned);
  }
  if (!secs->contains(pi.vaddr)) return LeafResult::error(Status::kInvalidParameter);
  if (secs->pages.count(pi.vaddr) != 0) return LeafResult::error(Status::kVaddrCollision);

  const GranuleNum g = granule_of(target);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  if (!mem_.epc_admissible(g)) return LeafResult::error(Status::kOutsideEpc);

  const bool in_place = !is_sgx_fixed(mem_.mode());
  if (in_place && granule_of(pi.src) != g) {
    // Dynamic EPC assigns the source granule itself; there is nothing to copy into.
    return LeafResult::error(Status::kInvalidParameter);
  }
  auto content = read_normal(pi.src, kGranuleSize);
  if (!content) return LeafResult::error(content.error());

  if (norm.type == PageType::kTcs && !tcs_well_formed(Tcs::load(*content), secs->size,
                                                       secs->ssa_frame_size)) {
    return LeafResult::error(Status::kBadTcs);
  }

  const Status st = mem_.assign_granule(tok, secs->eid, g);
  if (st != Status::kSuccess) return LeafResult::error(st);
  if (!in_place) {
    auto dst = mem_.raw_mut(tok, g);
    std::copy(content->begin(), content->end(), dst.begin());
  }

  EpcmEntry e;
  e.valid = true;
  e.type = norm.type;
  e.owner = secs->eid;
  e.vaddr = pi.vaddr;
  e.perms = norm.perms;
  mem_.epcm_update(tok, g, e);
  secs->pages[pi.vaddr] = g;

  secs->measurement.absorb(eadd_record(pi.vaddr - secs->base, norm.pack()));
  costs_.charge_hash_blocks(Leaf::kEadd, 1);
  return LeafResult::ok();
}

LeafResult Microprograms::eextend(const ExecutionToken&, std::uint64_t eid, VirtAddr va) {
  Secs* secs = eid <= UINT32_MAX ? enclaves_.find(EnclaveId{static_cast<std::uint32_t>(eid)})
                                 : nullptr;
  if (!secs) return LeafResult::error(Status::kInvalidParameter);
  if (secs->initialized()) return LeafResult::error(Status::kAlreadyInitialized);
  if (va % kExtendChunk != 0) return LeafResult::error(Status::kMisaligned);
  auto it = secs->pages.find(page_floor(va));
  if (it == secs->pages.end()) return LeafResult::error(Status::kUnmeasurable);
  const EpcmEntry& e = mem_.epcm_lookup(it->second);
  if (!e.valid || e.owner != secs->eid || e.vaddr != page_floor(va)) {
    return LeafResult::error(Status::kUnmeasurable);
  }
  secs->measurement.absorb(eextend_record(va - secs->base));
  absorb_chunk(secs->measurement,
               mem_.raw(it->second).subspan(page_offset(va)).first<kExtendChunk>());
  costs_.charge_hash_blocks(Leaf::kEextend, 5);
  return LeafResult::ok();
}

LeafResult Microprograms::einit(const ExecutionToken&, PhysAddr sigstruct_pa, std::uint64_t eid) {
  auto raw = read_normal(sigstruct_pa, SigStruct::kBytes);
  if (!raw) return LeafResult::error(raw.error());
  Secs* secs = eid <= UINT32_MAX ? enclaves_.find(EnclaveId{static_cast<std::uint32_t>(eid)})
                                 : nullptr;
  if (!secs) return LeafResult::error(Status::kInvalidParameter);
  if (secs->initialized()) return LeafResult::error(Status::kAlreadyInitialized);

  const SigStruct sig = SigStruct::deserialize(*raw);
  const Digest measured = secs->measurement.finalize();
  costs_.charge_hash_blocks(Leaf::kEinit, 1);
  costs_.charge_sig_verify(Leaf::kEinit);

  auto signer = verify_sigstruct(sig);
  if (!signer) return LeafResult::error(Status::kSigInvalid);
  if (sig.body.enclavehash != measured) return LeafResult::error(Status::kMeasurementMismatch);
  const std::uint64_t mask = sig.body.attribute_mask;
  if ((secs->attributes & mask) != (sig.body.attributes & mask)) {
    return LeafResult::error(Status::kAttributeMismatch);
  }

  secs->mrenclave = measured;
  secs->mrsigner = *signer;
  secs->isv_prod_id = sig.body.isv_prod_id;
  secs->isv_svn = sig.body.isv_svn;
  secs->max_page_perms = sig.body.max_page_perms;
  secs->attributes |= kAttrInit;
  return LeafResult::ok();
}

LeafResult Microprograms::eremove(const ExecutionToken& tok, PhysAddr page) {
  if (!page_aligned(page)) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(page);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  const EpcmEntry e = mem_.epcm_lookup(g);
  if (!e.valid) return LeafResult::error(Status::kInvalidPage);

  if (e.type == PageType::kVa) {
    mem_.epcm_update(tok, g, EpcmEntry{});
    mem_.release_reserved(tok, g);
    return LeafResult::ok();
  }

  Secs* secs = enclaves_.find(e.owner);
  if (!secs) throw ModelError("EPCM page owned by a missing enclave");

  if (e.type == PageType::kSecs) {
    if (!secs->pages.empty()) return LeafResult::error(Status::kChildPresent);
    if (secs->threads_inside() != 0) return LeafResult::error(Status::kPageInUse);
    mem_.epcm_update(tok, g, EpcmEntry{});
    mem_.unassign_granule(tok, secs->eid, g);
    mem_.destroy_enclave_gpt(tok, secs->eid);
    enclaves_.erase(secs->eid);
    return LeafResult::ok();
  }

  if (e.type == PageType::kTcs && load_tcs(g).busy != 0) {
    return LeafResult::error(Status::kPageInUse);
  }
  mem_.epcm_update(tok, g, EpcmEntry{});
  mem_.unassign_granule(tok, secs->eid, g);
  secs->pages.erase(e.vaddr);
  return LeafResult::ok();
}

LeafResult Microprograms::edbgrd(PhysAddr pa) const {
  if (pa % 8 != 0) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(pa);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  const EpcmEntry& e = mem_.epcm_lookup(g);
  if (!e.valid || e.type == PageType::kVa) return LeafResult::error(Status::kInvalidPage);
  const Secs* secs = enclaves_.find(e.owner);
  if (!secs || (secs->attributes & kAttrDebug) == 0) {
    return LeafResult::error(Status::kNonDebugEnclave);
  }
  return LeafResult::ok(load_u64(mem_.raw(g), page_offset(pa)));
}

LeafResult Microprograms::edbgwr(const ExecutionToken& tok, PhysAddr pa, std::uint64_t value) {
  if (pa % 8 != 0) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(pa);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  const EpcmEntry& e = mem_.epcm_lookup(g);
  if (!e.valid || e.type == PageType::kVa) return LeafResult::error(Status::kInvalidPage);
  const Secs* secs = enclaves_.find(e.owner);
  if (!secs || (secs->attributes & kAttrDebug) == 0) {
    return LeafResult::error(Status::kNonDebugEnclave);
  }
  if (e.type != PageType::kReg) return LeafResult::error(Status::kInvalidPage);
  store_u64(mem_.raw_mut(tok, g), page_offset(pa), value);
  return LeafResult::ok();
}

LeafResult Microprograms::eblock(const ExecutionToken& tok, PhysAddr page) {
  if (!page_aligned(page)) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(page);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  EpcmEntry e = mem_.epcm_lookup(g);
  if (!e.valid || e.type == PageType::kSecs) return LeafResult::error(Status::kInvalidPage);
  if (e.blocked) return LeafResult::error(Status::kAlreadyBlocked);
  e.blocked = true;
  if (const Secs* secs = enclaves_.find(e.owner)) e.blocked_epoch = secs->track_epoch;
  mem_.epcm_update(tok, g, e);
  return LeafResult::ok();
}

LeafResult Microprograms::etrack(std::uint64_t eid) {
  Secs* secs = eid <= UINT32_MAX ? enclaves_.find(EnclaveId{static_cast<std::uint32_t>(eid)})
                                 : nullptr;
  if (!secs) return LeafResult::error(Status::kInvalidParameter);
  if (!secs->initialized()) return LeafResult::error(Status::kNotInitialized);
  if (secs->track_epoch > 0 && secs->threads_inside_upto(secs->track_epoch - 1) > 0) {
    return LeafResult::error(Status::kPrevTrackIncomplete);
  }
  ++secs->track_epoch;
  return LeafResult::ok(secs->track_epoch);
}

LeafResult Microprograms::epa(const ExecutionToken& tok, PhysAddr page) {
  if (!page_aligned(page)) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(page);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  const Status st = mem_.reserve_granule(tok, g);
  if (st != Status::kSuccess) return LeafResult::error(st);
  mem_.scrub(tok, g);
  EpcmEntry e;
  e.valid = true;
  e.type = PageType::kVa;
  mem_.epcm_update(tok, g, e);
  return LeafResult::ok();
}

LeafResult Microprograms::ewb(const ExecutionToken& tok, PhysAddr pageinfo_pa, PhysAddr page,
                              PhysAddr slot_pa) {
  auto raw = read_normal(pageinfo_pa, PageInfo::kBytes);
  if (!raw) return LeafResult::error(raw.error());
  const PageInfo pi = PageInfo::load(*raw);

  if (!page_aligned(page) || !page_aligned(pi.src)) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(page);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  const EpcmEntry e = mem_.epcm_lookup(g);
  if (!e.valid || e.type == PageType::kSecs || e.type == PageType::kVa) {
    return LeafResult::error(Status::kInvalidPage);
  }
  if (!e.blocked) return LeafResult::error(Status::kNotBlocked);
  Secs* secs = enclaves_.find(e.owner);
  if (!secs) throw ModelError("EPCM page owned by a missing enclave");
  if (secs->track_epoch <= e.blocked_epoch || secs->threads_inside_upto(e.blocked_epoch) > 0) {
    return LeafResult::error(Status::kNotTracked);
  }
  if (e.type == PageType::kTcs && load_tcs(g).busy != 0) {
    return LeafResult::error(Status::kPageInUse);
  }
  auto slot = va_slot(slot_pa);
  if (!slot) return LeafResult::error(Status::kInvalidParameter);
  if (load_u64(mem_.raw(slot->first), slot->second) != 0) {
    return LeafResult::error(Status::kVaSlotOccupied);
  }
  // Both output buffers must be writable before anything changes.
  for (PhysAddr out : {pi.src, pi.aux}) {
    if (!mem_.in_range(granule_of(out)) ||
        mem_.check_access(SecurityState::kNormal, granule_of(out), GptSelector::system()) ==
            Verdict::kDeny) {
      return LeafResult::error(Status::kGpf);
    }
  }
  if (!fits_in_granule(pi.aux, Pcmd::kBytes)) return LeafResult::error(Status::kMisaligned);

  const std::uint64_t version = ++version_counter_;
  Pcmd pcmd;
  pcmd.secinfo = SecInfo{e.type, e.perms}.pack() | (e.pending ? kPcmdPending : 0) |
                 (e.modified ? kPcmdModified : 0);
  pcmd.eid = to_underlying(e.owner);
  pcmd.vaddr = e.vaddr;
  const Bytes aad = pcmd.aad(version);
  Sealed sealed = crypto_.page_seal(mem_.raw(g), aad, version);
  pcmd.mac = sealed.tag;
  costs_.charge_aead(Leaf::kEwb, kGranuleSize + aad.size());

  std::array<std::uint8_t, Pcmd::kBytes> pcmd_bytes{};
  pcmd.store(pcmd_bytes);
  write_normal(tok, pi.src, sealed.ciphertext);
  write_normal(tok, pi.aux, pcmd_bytes);
  store_u64(mem_.raw_mut(tok, slot->first), slot->second, version);
  issued_[pcmd.mac] = version;

  mem_.epcm_update(tok, g, EpcmEntry{});
  mem_.unassign_granule(tok, secs->eid, g);
  secs->pages.erase(e.vaddr);
  return LeafResult::ok(version);
}

LeafResult Microprograms::eld(const ExecutionToken& tok, Leaf leaf, PhysAddr pageinfo_pa,
                              PhysAddr target, PhysAddr slot_pa) {
  auto raw = read_normal(pageinfo_pa, PageInfo::kBytes);
  if (!raw) return LeafResult::error(raw.error());
  const PageInfo pi = PageInfo::load(*raw);
  if (!page_aligned(pi.src) || !page_aligned(target)) return LeafResult::error(Status::kMisaligned);

  auto pcmd_raw = read_normal(pi.aux, Pcmd::kBytes);
  if (!pcmd_raw) return LeafResult::error(pcmd_raw.error());
  const Pcmd pcmd = Pcmd::load(*pcmd_raw);
  auto ciphertext = read_normal(pi.src, kGranuleSize);
  if (!ciphertext) return LeafResult::error(ciphertext.error());

  auto slot = va_slot(slot_pa);
  if (!slot) return LeafResult::error(Status::kInvalidParameter);
  const std::uint64_t version = load_u64(mem_.raw(slot->first), slot->second);

  // A blob whose MAC we issued under a version other than the one in the
  // slot is a replay; anything else that fails to open was tampered with.
  if (version == 0) return LeafResult::error(Status::kVersionMismatch);
  if (auto it = issued_.find(pcmd.mac); it != issued_.end() && it->second != version) {
    return LeafResult::error(Status::kVersionMismatch);
  }
  costs_.charge_aead(leaf, kGranuleSize + 32);
  auto plain = crypto_.page_unseal(*ciphertext, pcmd.aad(version), pcmd.mac, version);
  if (!plain) return LeafResult::error(Status::kMacCompareFail);

  Secs* secs = enclaves_.find(EnclaveId{pcmd.eid});
  if (!secs) return LeafResult::error(Status::kInvalidParameter);

  auto si = SecInfo::unpack(pcmd.secinfo & ~(kPcmdPending | kPcmdModified));
  if (!si) throw ModelError("authenticated PCMD carries malformed SECINFO");
  if (secs->pages.count(pcmd.vaddr) != 0) return LeafResult::error(Status::kVaddrCollision);

  const GranuleNum g = granule_of(target);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  const Status st = mem_.assign_granule(tok, secs->eid, g);
  if (st != Status::kSuccess) return LeafResult::error(st);
  auto dst = mem_.raw_mut(tok, g);
  std::copy(plain->begin(), plain->end(), dst.begin());

  EpcmEntry e;
  e.valid = true;
  e.type = si->type;
  e.owner = secs->eid;
  e.vaddr = pcmd.vaddr;
  e.perms = si->perms;
  e.pending = (pcmd.secinfo & kPcmdPending) != 0;
  e.modified = (pcmd.secinfo & kPcmdModified) != 0;
  e.blocked = leaf == Leaf::kEldb;
  if (e.blocked) e.blocked_epoch = secs->track_epoch;
  mem_.epcm_update(tok, g, e);
  secs->pages[pcmd.vaddr] = g;
  store_u64(mem_.raw_mut(tok, slot->first), slot->second, 0);
  return LeafResult::ok();
}

LeafResult Microprograms::eaug(const ExecutionToken& tok, PhysAddr pageinfo_pa, PhysAddr target) {
  auto raw = read_normal(pageinfo_pa, PageInfo::kBytes);
  if (!raw) return LeafResult::error(raw.error());
  const PageInfo pi = PageInfo::load(*raw);
  Secs* secs = pi.eid <= UINT32_MAX ? enclaves_.find(EnclaveId{static_cast<std::uint32_t>(pi.eid)})
                                    : nullptr;
  if (!secs) return LeafResult::error(Status::kInvalidParameter);
  if (!secs->initialized()) return LeafResult::error(Status::kNotInitialized);
  if (!page_aligned(pi.vaddr) || !page_aligned(target)) return LeafResult::error(Status::kMisaligned);
  if (!secs->contains(pi.vaddr)) return LeafResult::error(Status::kInvalidParameter);
  if (secs->pages.count(pi.vaddr) != 0) return LeafResult::error(Status::kVaddrCollision);

  const GranuleNum g = granule_of(target);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  const Status st = mem_.assign_granule(tok, secs->eid, g);
  if (st != Status::kSuccess) return LeafResult::error(st);
  mem_.scrub(tok, g);

  EpcmEntry e;
  e.valid = true;
  e.type = PageType::kReg;
  e.owner = secs->eid;
  e.vaddr = pi.vaddr;
  e.perms = Perms{true, true, false};
  e.pending = true;
  mem_.epcm_update(tok, g, e);
  secs->pages[pi.vaddr] = g;
  return LeafResult::ok();
}

LeafResult Microprograms::emodpr(const ExecutionToken& tok, PhysAddr secinfo_pa, PhysAddr page) {
  auto raw = read_normal(secinfo_pa, 8);
  if (!raw) return LeafResult::error(raw.error());
  auto si = SecInfo::unpack(load_u64(*raw, 0));
  if (!si) return LeafResult::error(Status::kInvalidParameter);
  if (!page_aligned(page)) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(page);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  EpcmEntry e = mem_.epcm_lookup(g);
  if (!e.valid || e.type != PageType::kReg || e.pending || e.modified) {
    return LeafResult::error(Status::kInvalidPage);
  }
  const Secs* secs = enclaves_.find(e.owner);
  if (!secs || !secs->initialized()) return LeafResult::error(Status::kNotInitialized);
  if (!si->perms.subset_of(e.perms)) return LeafResult::error(Status::kPermExpansion);
  e.perms = si->perms;
  e.modified = true;
  mem_.epcm_update(tok, g, e);
  return LeafResult::ok();
}

LeafResult Microprograms::emodt(const ExecutionToken& tok, PhysAddr secinfo_pa, PhysAddr page) {
  auto raw = read_normal(secinfo_pa, 8);
  if (!raw) return LeafResult::error(raw.error());
  auto si = SecInfo::unpack(load_u64(*raw, 0));
  if (!si) return LeafResult::error(Status::kInvalidParameter);
  if (!page_aligned(page)) return LeafResult::error(Status::kMisaligned);
  const GranuleNum g = granule_of(page);
  if (!mem_.in_range(g)) return LeafResult::error(Status::kInvalidParameter);
  EpcmEntry e = mem_.epcm_lookup(g);
  if (!e.valid) return LeafResult::error(Status::kInvalidPage);
  const Secs* secs = enclaves_.find(e.owner);
  if (!secs || !secs->initialized()) return LeafResult::error(Status::kNotInitialized);
  if (e.type != PageType::kReg || (si->type != PageType::kTcs && si->type != PageType::kTrim)) {
    return LeafResult::error(Status::kIllegalTypeTransition);
  }
  if (e.pending || e.modified) return LeafResult::error(Status::kInvalidPage);
  e.type = si->type;
  e.perms = Perms{};
  e.modified = true;
  mem_.epcm_update(tok, g, e);
  return LeafResult::ok();
}

// --- ENCLU -----------------------------------------------------------------

namespace {

LeafResult fault_result(const MemFault& f) {
  LeafResult r = LeafResult::error(f.status());
  r.fault = f.va;
  return r;
}

}  // namespace

LeafResult Microprograms::ereport(const ExecutionToken& tok, const Secs& secs, VirtAddr ti_va,
                                  VirtAddr rd_va, VirtAddr out_va) {
  for (VirtAddr va : {ti_va, rd_va, out_va}) {
    if (!secs.contains(va)) return LeafResult::error(Status::kInvalidParameter);
  }
  auto ti_raw = enclave_read(secs.eid, ti_va, TargetInfo::kBytes);
  if (!ti_raw) return fault_result(ti_raw.error());
  auto rd_raw = enclave_read(secs.eid, rd_va, 64);
  if (!rd_raw) return fault_result(rd_raw.error());
  const TargetInfo ti = TargetInfo::load(*ti_raw);

  Report rep;
  rep.body.attributes = secs.attributes;
  rep.body.mrenclave = secs.mrenclave;
  rep.body.mrsigner = secs.mrsigner;
  rep.body.isv_prod_id = secs.isv_prod_id;
  rep.body.isv_svn = secs.isv_svn;
  std::copy(rd_raw->begin(), rd_raw->end(), rep.body.reportdata.begin());
  rep.keyid = crypto_.report_keyid();
  const Key128 key = crypto_.derive_key(static_cast<std::uint16_t>(KeyName::kReport), ti.mrenclave,
                                        0, rep.keyid);
  rep.mac = crypto_.report_mac(key, rep.body);
  costs_.charge_kdf(Leaf::kEreport);
  costs_.charge_mac(Leaf::kEreport);

  std::array<std::uint8_t, Report::kBytes> out{};
  rep.store(out);
  auto w = enclave_write(tok, secs.eid, out_va, out);
  if (!w) return fault_result(w.error());
  return LeafResult::ok();
}

LeafResult Microprograms::egetkey(const ExecutionToken& tok, const Secs& secs, VirtAddr req_va,
                                  VirtAddr out_va) {
  if (!secs.contains(req_va) || !secs.contains(out_va)) {
    return LeafResult::error(Status::kInvalidParameter);
  }
  auto raw = enclave_read(secs.eid, req_va, KeyRequest::kBytes);
  if (!raw) return fault_result(raw.error());
  const KeyRequest req = KeyRequest::load(*raw);

  Digest identity{};
  std::uint16_t svn = 0;
  switch (req.name) {
    case KeyName::kReport:
      identity = secs.mrenclave;
      break;
    case KeyName::kSeal:
    case KeyName::kProvision:
    case KeyName::kProvisionSeal: {
      if (req.name != KeyName::kSeal && (secs.attributes & kAttrProvisionKey) == 0) {
        return LeafResult::error(Status::kPolicyDenied);
      }
      if (req.isv_svn > secs.isv_svn) return LeafResult::error(Status::kPolicyDenied);
      svn = req.isv_svn;
      const bool by_enclave = (req.policy & kPolicyMrEnclave) != 0;
      const bool by_signer = (req.policy & kPolicyMrSigner) != 0;
      if (req.name == KeyName::kProvision) {
        identity = secs.mrsigner;
      } else if (by_enclave == by_signer) {
        return LeafResult::error(Status::kInvalidParameter);
      } else {
        identity = by_enclave ? secs.mrenclave : secs.mrsigner;
      }
      break;
    }
    default:
      // Launch tokens are not modeled.
      return LeafResult::error(Status::kInvalidParameter);
  }
  const Key128 key =
      crypto_.derive_key(static_cast<std::uint16_t>(req.name), identity, svn, req.keyid);
  costs_.charge_kdf(Leaf::kEgetkey);
  auto w = enclave_write(tok, secs.eid, out_va, key);
  if (!w) return fault_result(w.error());
  return LeafResult::ok();
}

LeafResult Microprograms::eaccept(const ExecutionToken& tok, Secs& secs, VirtAddr secinfo_va,
                                  VirtAddr target) {
  auto raw = enclave_read(secs.eid, secinfo_va, 8);
  if (!raw) return fault_result(raw.error());
  auto si = SecInfo::unpack(load_u64(*raw, 0));
  if (!si) return LeafResult::error(Status::kInvalidParameter);
  if (!page_aligned(target)) return LeafResult::error(Status::kMisaligned);
  if (!secs.contains(target)) return LeafResult::error(Status::kInvalidParameter);
  auto g = own_page(secs.eid, target);
  if (!g) return fault_result(g.error());
  EpcmEntry e = mem_.epcm_lookup(*g);
  if (e.blocked) return fault_result(MemFault{MemFault::Kind::kEpcm, target, {}});

  const SecInfo staged{e.type, e.perms};
  if (e.pending) {
    if (si->normalized() != staged) return LeafResult::error(Status::kSecinfoMismatch);
    e.pending = false;
  } else if (e.modified) {
    if (si->normalized() != staged) return LeafResult::error(Status::kSecinfoMismatch);
    if (e.type == PageType::kTcs &&
        !tcs_well_formed(load_tcs(*g), secs.size, secs.ssa_frame_size)) {
      return LeafResult::error(Status::kBadTcs);
    }
    e.modified = false;
  } else {
    return LeafResult::error(Status::kNotPending);
  }
  mem_.epcm_update(tok, *g, e);
  return LeafResult::ok();
}

LeafResult Microprograms::emodpe(const ExecutionToken& tok, Secs& secs, VirtAddr secinfo_va,
                                 VirtAddr target) {
  auto raw = enclave_read(secs.eid, secinfo_va, 8);
  if (!raw) return fault_result(raw.error());
  auto si = SecInfo::unpack(load_u64(*raw, 0));
  if (!si) return LeafResult::error(Status::kInvalidParameter);
  if (!page_aligned(target)) return LeafResult::error(Status::kMisaligned);
  if (!secs.contains(target)) return LeafResult::error(Status::kInvalidParameter);
  auto g = own_page(secs.eid, target);
  if (!g) return fault_result(g.error());
  EpcmEntry e = mem_.epcm_lookup(*g);
  if (e.type != PageType::kReg || e.pending || e.modified || e.blocked) {
    return LeafResult::error(Status::kInvalidPage);
  }
  const Perms wanted = e.perms | si->perms;
  if (!wanted.subset_of(secs.max_page_perms)) return LeafResult::error(Status::kPermExpansion);
  e.perms = wanted;
  mem_.epcm_update(tok, *g, e);
  return LeafResult::ok();
}

LeafResult Microprograms::eacceptcopy(const ExecutionToken& tok, Secs& secs, VirtAddr secinfo_va,
                                      VirtAddr dest, VirtAddr src) {
  auto raw = enclave_read(secs.eid, secinfo_va, 8);
  if (!raw) return fault_result(raw.error());
  auto si = SecInfo::unpack(load_u64(*raw, 0));
  if (!si || si->type != PageType::kReg) return LeafResult::error(Status::kInvalidParameter);
  if (!page_aligned(dest) || !page_aligned(src)) return LeafResult::error(Status::kMisaligned);
  if (!secs.contains(dest)) return LeafResult::error(Status::kInvalidParameter);
  if (!secs.contains(src)) return fault_result(MemFault{MemFault::Kind::kEpcm, src, {}});
  auto g = own_page(secs.eid, dest);
  if (!g) return fault_result(g.error());
  EpcmEntry e = mem_.epcm_lookup(*g);
  if (!e.pending || e.type != PageType::kReg) return LeafResult::error(Status::kNotPending);
  auto content = enclave_read(secs.eid, src, kGranuleSize);
  if (!content) return fault_result(content.error());
  auto dst = mem_.raw_mut(tok, *g);
  std::copy(content->begin(), content->end(), dst.begin());
  e.perms = si->perms;
  e.pending = false;
  mem_.epcm_update(tok, *g, e);
  return LeafResult::ok();
}

LeafResult Microprograms::edeccssa(const ExecutionToken& tok, const EnclaveCaller& caller) {
  Tcs tcs = load_tcs(caller.tcs);
  if (tcs.cssa == 0) return LeafResult::error(Status::kNoSavedState);
  --tcs.cssa;
  store_tcs(tok, caller.tcs, tcs);
  return LeafResult::ok(tcs.cssa);
}

}  // namespace ccx
