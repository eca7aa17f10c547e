#include "ccx/host/driver.hpp"

#include "ccx/bytes.hpp"

namespace ccx::host {

Driver::Driver(Machine& m) : m_(m), fixed_(is_sgx_fixed(m.memory().mode())) {
  const std::uint64_t n = m.memory().granule_count();
  GranuleNum epc_lo = 0, epc_hi = 0;
  if (const auto* f = std::get_if<SgxFixed>(&m.memory().mode())) {
    epc_lo = f->epc_base;
    epc_hi = f->epc_base + f->epc_size;
  }
  // Granule 0 stays unused so a zero address never resolves.
  for (GranuleNum g = 1; g < n; ++g) {
    if (fixed_ && (g < epc_lo || g >= epc_hi)) {
      host_pool_.insert(g);
    } else {
      epc_pool_.insert(g);
    }
  }
  auto take = [&]() {
    auto g = alloc_host();
    if (!g) throw ModelError("no host memory for the driver");
    return *g;
  };
  staging_ = take();
  bounce_ = take();
}

std::optional<GranuleNum> Driver::alloc_epc_no_reclaim() {
  if (epc_pool_.empty()) return std::nullopt;
  const GranuleNum g = *epc_pool_.begin();
  epc_pool_.erase(epc_pool_.begin());
  return g;
}

std::optional<GranuleNum> Driver::alloc_epc() {
  if (epc_pool_.empty() && reclaim_) reclaim_();
  return alloc_epc_no_reclaim();
}

void Driver::free_epc(GranuleNum g) { epc_pool_.insert(g); }

std::optional<GranuleNum> Driver::alloc_host() {
  auto& pool = fixed_ ? host_pool_ : epc_pool_;
  if (pool.empty()) return std::nullopt;
  const GranuleNum g = *pool.begin();
  pool.erase(pool.begin());
  return g;
}

void Driver::free_host(GranuleNum g) { (fixed_ ? host_pool_ : epc_pool_).insert(g); }

std::size_t Driver::host_free() const noexcept {
  return fixed_ ? host_pool_.size() : epc_pool_.size();
}

VirtAddr Driver::reserve_range(std::uint64_t size) {
  const VirtAddr base = (next_range_ + size - 1) / size * size;
  next_range_ = base + size;
  return base;
}

VirtAddr Driver::map_host_page(GranuleNum g) {
  const VirtAddr va = next_host_va_;
  next_host_va_ += kGranuleSize;
  map(va, g);
  return va;
}

PhysAddr Driver::stage(std::size_t offset, std::span<const std::uint8_t> data) {
  const PhysAddr pa = granule_base(staging_) + offset;
  if (m_.phys_write(pa, data) != Status::kSuccess) throw ModelError("staging write failed");
  return pa;
}

PhysAddr Driver::stage_pageinfo(const PageInfo& pi) {
  std::array<std::uint8_t, PageInfo::kBytes> b{};
  pi.store(b);
  return stage(kArgOffset, b);
}

LeafResult Driver::ecreate(const SecsTemplate& t, GranuleNum target) {
  std::array<std::uint8_t, SecsTemplate::kBytes> b{};
  t.store(b);
  return m_.encls(Leaf::kEcreate, stage(kArgOffset, b), granule_base(target));
}

LeafResult Driver::eadd(const PageInfo& pi, GranuleNum target) {
  return m_.encls(Leaf::kEadd, stage_pageinfo(pi), granule_base(target));
}

LeafResult Driver::eextend(EnclaveId eid, VirtAddr va) {
  return m_.encls(Leaf::kEextend, to_underlying(eid), va);
}

LeafResult Driver::einit(const SigStruct& sig, EnclaveId eid) {
  return m_.encls(Leaf::kEinit, stage(kSigOffset, sig.serialize()), to_underlying(eid));
}

LeafResult Driver::eremove(GranuleNum g) { return m_.encls(Leaf::kEremove, granule_base(g)); }

LeafResult Driver::edbgrd(PhysAddr pa) { return m_.encls(Leaf::kEdbgrd, pa); }

LeafResult Driver::edbgwr(PhysAddr pa, std::uint64_t value) {
  return m_.encls(Leaf::kEdbgwr, pa, value);
}

LeafResult Driver::eblock(GranuleNum g) { return m_.encls(Leaf::kEblock, granule_base(g)); }

LeafResult Driver::etrack(EnclaveId eid) { return m_.encls(Leaf::kEtrack, to_underlying(eid)); }

LeafResult Driver::epa(GranuleNum g) { return m_.encls(Leaf::kEpa, granule_base(g)); }

LeafResult Driver::ewb(GranuleNum g, PhysAddr slot) {
  PageInfo pi;
  pi.src = bounce();
  pi.aux = pcmd_area();
  return m_.encls(Leaf::kEwb, stage_pageinfo(pi), granule_base(g), slot);
}

LeafResult Driver::eld(bool blocked, VirtAddr va, EnclaveId eid, GranuleNum target, PhysAddr slot) {
  PageInfo pi;
  pi.src = bounce();
  pi.aux = pcmd_area();
  pi.vaddr = va;
  pi.eid = to_underlying(eid);
  return m_.encls(blocked ? Leaf::kEldb : Leaf::kEldu, stage_pageinfo(pi), granule_base(target),
                  slot);
}

LeafResult Driver::eaug(EnclaveId eid, VirtAddr va, GranuleNum target) {
  PageInfo pi;
  pi.vaddr = va;
  pi.eid = to_underlying(eid);
  return m_.encls(Leaf::kEaug, stage_pageinfo(pi), granule_base(target));
}

LeafResult Driver::emodpr(const SecInfo& si, GranuleNum g) {
  std::array<std::uint8_t, 8> b{};
  store_u64(b, 0, si.pack());
  return m_.encls(Leaf::kEmodpr, stage(kSecinfoOffset, b), granule_base(g));
}

LeafResult Driver::emodt(const SecInfo& si, GranuleNum g) {
  std::array<std::uint8_t, 8> b{};
  store_u64(b, 0, si.pack());
  return m_.encls(Leaf::kEmodt, stage(kSecinfoOffset, b), granule_base(g));
}

}  // namespace ccx::host
