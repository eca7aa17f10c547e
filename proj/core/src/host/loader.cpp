#include "ccx/host/loader.hpp"

#include <fstream>

#include "ccx/measurement.hpp"

namespace ccx::host {

std::string to_string(const LoadError& e) {
  std::string s = e.step + ": " + std::string(ccx::to_string(e.status));
  if (!e.detail.empty()) s += " (" + e.detail + ")";
  return s;
}

Expected<EnclaveHandle, LoadError> load_enclave(Driver& d, SwapManager& swap, const Manifest& m,
                                                const LoadOptions& opts) {
  Machine& mach = d.machine();
  auto pages = materialize(m);
  if (!pages) {
    return Unexpected(LoadError{"manifest", Status::kInvalidParameter, to_string(pages.error())});
  }
  const Digest mr = expected_mrenclave(m, *pages);

  SigStruct sig;
  if (opts.sigstruct) {
    sig = *opts.sigstruct;
  } else if (m.sig_source == SigSource::kFile) {
    std::ifstream in(m.sig_path, std::ios::binary);
    Bytes raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() != SigStruct::kBytes) {
      return Unexpected(LoadError{"manifest", Status::kInvalidParameter,
                                  "sigstruct file " + m.sig_path.string() + " unreadable or wrong size"});
    }
    sig = SigStruct::deserialize(raw);
  } else {
    sig = sign_manifest(mach.crypto(), m, mr);
  }

  EnclaveHandle h;
  h.name = m.name;
  h.size = m.size;
  h.base = d.reserve_range(m.size);

  auto secs_g = d.alloc_epc();
  if (!secs_g) return Unexpected(LoadError{"ECREATE", Status::kOutOfMemory, {}});
  SecsTemplate t;
  t.size = m.size;
  t.base = h.base;
  t.ssa_frame_size = m.ssa_frame_size;
  t.attributes = m.attributes;
  LeafResult r = d.ecreate(t, *secs_g);
  if (!r.succeeded()) {
    d.free_epc(*secs_g);
    return Unexpected(LoadError{"ECREATE", r.status, {}});
  }
  h.eid = EnclaveId{static_cast<std::uint32_t>(r.value)};

  auto fail = [&](std::string step, Status s, std::string detail = {}) {
    unload_enclave(d, swap, h);
    return Unexpected(LoadError{std::move(step), s, std::move(detail)});
  };

  for (const PageImage& p : *pages) {
    const VirtAddr va = h.base + p.offset;
    auto g = d.alloc_epc();
    if (!g) return fail("EADD", Status::kOutOfMemory);
    PageInfo pi;
    pi.vaddr = va;
    pi.secinfo = p.secinfo.pack();
    pi.eid = to_underlying(h.eid);
    if (d.fixed_epc()) {
      mach.phys_write(d.bounce(), p.content);
      pi.src = d.bounce();
    } else {
      // Dynamic memory: write the page where it will live, then convert it.
      const VirtAddr alias = d.map_host_page(*g);
      if (!mach.host_write(alias, p.content)) throw ModelError("loader alias not writable");
      h.aliases.push_back(DoubleMapping{alias, va, *g});
      pi.src = granule_base(*g);
    }
    r = d.eadd(pi, *g);
    if (!r.succeeded()) {
      d.free_epc(*g);
      return fail("EADD", r.status, "offset " + std::to_string(p.offset));
    }
    d.map(va, *g);
    if (p.measured) {
      for (std::size_t c = 0; c < kGranuleSize; c += kExtendChunk) {
        r = d.eextend(h.eid, va + c);
        if (!r.succeeded()) return fail("EEXTEND", r.status, "offset " + std::to_string(p.offset + c));
      }
    }
    if (p.secinfo.type == PageType::kTcs) h.tcs.push_back(va);
  }

  r = d.einit(sig, h.eid);
  if (!r.succeeded()) return fail("EINIT", r.status);

  const Secs* secs = mach.enclaves().find(h.eid);
  h.mrenclave = secs->mrenclave;
  h.mrsigner = secs->mrsigner;
  h.attributes = secs->attributes;
  for (const PageImage& p : *pages) {
    if (p.evictable) swap.track(h.eid, h.base + p.offset);
  }
  return h;
}

Status unload_enclave(Driver& d, SwapManager& swap, EnclaveHandle& h) {
  Machine& mach = d.machine();
  swap.forget(h.eid);
  const Secs* secs = mach.enclaves().find(h.eid);
  if (!secs) return Status::kInvalidParameter;
  const GranuleNum secs_g = secs->granule;
  const auto pages = secs->pages;
  Status result = Status::kSuccess;
  for (const auto& [va, g] : pages) {
    const LeafResult r = d.eremove(g);
    if (r.succeeded()) {
      d.unmap(va);
      d.free_epc(g);
    } else if (result == Status::kSuccess) {
      result = r.status;
    }
  }
  for (const auto& a : h.aliases) d.unmap(a.host_va);
  h.aliases.clear();
  if (result != Status::kSuccess) return result;
  const LeafResult r = d.eremove(secs_g);
  if (!r.succeeded()) return r.status;
  d.free_epc(secs_g);
  mach.clear_crashed(h.eid);
  return Status::kSuccess;
}

}  // namespace ccx::host
