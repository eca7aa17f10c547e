#include "support/criteria.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "ccx/bytes.hpp"
#include "ccx/host/bench.hpp"
#include "ccx/host/scenario.hpp"
#include "ccx/memory.hpp"
#include "support/fixtures.hpp"
#include "support/lab.hpp"
#include "support/leaf_examples.hpp"
#include "support/ref_measure.hpp"

namespace testutil {

using namespace ccx;
using namespace ccx::host;

namespace {

constexpr SimMode kModes[] = {SimMode::kSgx, SimMode::kCcx};

std::string name_of(SimMode m) { return std::string(to_string(m)); }

Config roomy(SimMode mode) {
  Config c = small_config(mode);
  c.granule_count = 8192;
  c.epc_size = 2048;
  return c;
}

std::uint64_t sel(Selector s) { return static_cast<std::uint64_t>(s); }

Perms random_perm_bit(std::mt19937_64& rng) {
  return Perms::from_bits(static_cast<unsigned>(1u << (rng() % 3)));
}

// Counts "gpf" records added since `from` and moves `from` to the end.
std::size_t new_gpfs(const Trace& t, std::size_t& from) {
  const auto& recs = t.records();
  std::size_t n = 0;
  for (; from < recs.size(); ++from) {
    if (recs[from].kind == "gpf") ++n;
  }
  return n;
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

}  // namespace

// --- 1 ---------------------------------------------------------------------

std::string check_leaf_coverage(std::string& detail) {
  std::array<bool, kLeafCount> covered{};
  std::size_t runs = 0;
  for (SimMode mode : kModes) {
    for (const LeafExample& ex : leaf_examples()) {
      if (ex.sgx_only && mode == SimMode::kCcx) continue;
      if (auto f = run_example(ex, mode)) {
        return name_of(mode) + " " + std::string(to_string(ex.leaf)) + " \"" + ex.name + "\": " + *f;
      }
      covered[static_cast<std::size_t>(ex.leaf)] = true;
      ++runs;
    }
    if (auto f = check_undefined_leaves(mode)) return name_of(mode) + " undefined leaves: " + *f;
  }
  std::string missing;
  for (std::size_t i = 0; i < kLeafCount; ++i) {
    if (!covered[i]) missing += std::string(to_string(static_cast<Leaf>(i))) + " ";
  }
  if (!missing.empty()) return "leaves without examples: " + missing;
  detail = std::to_string(kLeafCount) + "/" + std::to_string(kLeafCount) + " leaves, " +
           std::to_string(runs) + " example runs over sgx+ccx, undefined leaves refused";
  return {};
}

// --- 2 ---------------------------------------------------------------------

std::string check_access_matrix(std::string& detail) {
  constexpr SecurityState states[] = {SecurityState::kNormal, SecurityState::kSecure,
                                      SecurityState::kRealm, SecurityState::kRoot};
  constexpr Pas columns[] = {Pas::kNormal, Pas::kSecure, Pas::kRealm, Pas::kRoot, Pas::kNoAccess};
  // Rows accessor Normal/Secure/Realm/Root; columns as above.
  constexpr bool want[4][5] = {
      {true, false, false, false, false},
      {true, true, false, false, false},
      {true, false, true, false, false},
      {true, true, true, true, true},
  };

  std::mutex mu;
  ExecutionToken tok(mu);
  MachineMemory mem(16, CcaDynamic{});
  const EnclaveId eid{1};
  mem.create_enclave_gpt(tok, eid, 8);
  expect_status(mem.set_world(tok, 1, Pas::kSecure), Status::kSuccess, "Secure carve-out");
  expect_status(mem.set_world(tok, 2, Pas::kRoot), Status::kSuccess, "Root carve-out");
  expect_status(mem.assign_granule(tok, eid, 3), Status::kSuccess, "Realm assignment");
  expect_status(mem.reserve_granule(tok, 4), Status::kSuccess, "NoAccess reservation");

  struct Cell {
    GranuleNum g;
    GptSelector gpt;
  };
  const Cell cells[5] = {{0, GptSelector::system()},
                         {1, GptSelector::system()},
                         {3, GptSelector::of(eid)},
                         {2, GptSelector::system()},
                         {4, GptSelector::system()}};
  int agree = 0;
  std::string wrong;
  for (int s = 0; s < 4; ++s) {
    for (int p = 0; p < 5; ++p) {
      expect(mem.gpts().entry(cells[p].gpt, cells[p].g) == columns[p],
             "granule for " + std::string(to_string(columns[p])) + " has the wrong PAS");
      const bool allowed =
          mem.check_access(states[s], cells[p].g, cells[p].gpt) == Verdict::kAllow;
      if (allowed == want[s][p]) {
        ++agree;
      } else {
        wrong += std::string(to_string(states[s])) + "/" + std::string(to_string(columns[p])) + " ";
      }
    }
  }
  detail = std::to_string(agree) + "/20 cells";
  if (agree != 20) return "cells disagree: " + wrong;
  return {};
}

// --- 3 ---------------------------------------------------------------------

namespace {

struct FuzzTally {
  std::size_t accesses = 0;
  std::size_t cross = 0;  // attempts on memory the accessor does not own
  std::size_t denied = 0;
  std::size_t allowed = 0;
  std::uint64_t audits = 0;
};

struct FuzzTarget {
  int owner = 0;  // 0 host, 1..3 enclaves, 4 monitor (VA pages)
  VirtAddr va = 0;
  GranuleNum g = 0;
  bool owner_reads = true;  // readable by its owner
  bool stable = true;       // not written by the probe itself
};

std::string fuzz_mode(SimMode mode, std::size_t accesses, std::uint64_t seed, FuzzTally& t) {
  Config cfg = small_config(mode);
  Lab lab(cfg);
  lab.m.set_audit_each_leaf(true);
  std::mt19937_64 rng(seed);

  const char* rels[3] = {"enclave/basic.manifest", "enclave/sibling.manifest",
                         "enclave/notify.manifest"};
  EnclaveId enc[3];
  for (int k = 0; k < 3; ++k) enc[k] = lab.load(rels[k]);

  for (int k = 0; k < 3; ++k) {
    for (int p = 0; p < 4; ++p) {
      for (int w = 0; w < 8; ++w) {
        write_word(lab, enc[k], lab.base(enc[k]) + kData + p * kGranuleSize + 8 * (rng() % 512),
                   rng());
      }
    }
  }
  const VirtAddr shared = lab.rt.shared();
  for (std::size_t i = 0; i < Runtime::kSharedBytes / 8; i += 7) {
    expect(lab.m.host_write64(shared + 8 * i, rng()).has_value(), "host write to shared buffer");
  }
  std::vector<VirtAddr> va_aliases;
  for (int i = 0; i < 2; ++i) va_aliases.push_back(lab.driver().map_host_page(lab.new_va_page()));

  std::vector<FuzzTarget> targets;
  auto rebuild = [&] {
    targets.clear();
    for (int k = 0; k < 3; ++k) {
      const Secs* s = lab.m.enclaves().find(enc[k]);
      std::set<VirtAddr> busy;  // thread 0's SSA frames and TLS page
      const Tcs tcs = lab.tcs(enc[k], lab.rt.handle(enc[k])->tcs[0]);
      for (std::uint64_t f = 0; f < std::uint64_t{tcs.nssa} * s->ssa_frame_size; ++f) {
        busy.insert(s->base + tcs.ossa + f * kGranuleSize);
      }
      busy.insert(s->base + tcs.tls_base);
      for (const auto& [va, g] : s->pages) {
        const EpcmEntry& e = lab.m.memory().epcm_lookup(g);
        const bool reads = e.type == PageType::kReg && e.perms.r && !e.pending && !e.blocked;
        targets.push_back({k + 1, va, g, reads, busy.count(va) == 0});
      }
    }
    for (std::size_t i = 0; i < Runtime::kSharedBytes / kGranuleSize; ++i) {
      const VirtAddr va = shared + i * kGranuleSize;
      targets.push_back({0, va, *lab.m.address_space().lookup(va), true, true});
    }
    for (VirtAddr va : va_aliases) {
      targets.push_back({4, va, *lab.m.address_space().lookup(va), false, true});
    }
  };
  rebuild();

  std::size_t trace_pos = lab.m.trace().records().size();
  const std::uint64_t audits0 = lab.m.audits_run();
  std::size_t grown[3] = {0, 0, 0};
  std::size_t done = 0;
  while (done < accesses) {
    if (done % 1000 == 999) {
      // Churn between batches so the audits see more than entry and exit.
      const int k = static_cast<int>(rng() % 3);
      const VirtAddr va = lab.base(enc[k]) + kSpare + grown[k]++ * kGranuleSize;
      expect_status(lab.rt.alloc_pages(enc[k], va, 1), Status::kSuccess, "alloc during fuzz");
      write_word(lab, enc[k], va + 8 * (rng() % 512), rng());
      if (lab.sgx()) {
        const VirtAddr victim = lab.base(enc[k]) + kData + (rng() % 4) * kGranuleSize;
        expect_status(lab.rt.swap().swap_out(enc[k], victim), Status::kSuccess, "swap out");
        expect_status(lab.rt.swap().swap_in(enc[k], victim), Status::kSuccess, "swap in");
      }
      rebuild();
      new_gpfs(lab.m.trace(), trace_pos);
    }

    const int accessor = static_cast<int>(rng() % 4);
    const FuzzTarget& tg = targets[rng() % targets.size()];
    if (accessor == tg.owner && !tg.owner_reads) continue;
    const std::uint64_t off = 8 * (rng() % 512);
    const bool may = tg.owner == 0 || tg.owner == accessor;

    std::optional<std::uint64_t> got;
    if (accessor == 0) {
      VirtAddr addr = tg.va + off;
      VirtAddr alias = 0;
      if (tg.owner >= 1 && tg.owner <= 3 && rng() % 2) {
        alias = lab.driver().map_host_page(tg.g);
        addr = alias + off;
      }
      auto r = lab.m.host_read64(addr);
      if (r) got = *r;
      if (alias) lab.driver().unmap(alias);
    } else {
      auto r = lab.rt.ecall(enc[accessor - 1], 0, sel(Selector::kProbe), {tg.va + off});
      if (!r.ok() || r.fault) {
        return "probe ecall failed: " + std::string(to_string(r.status));
      }
      if (r.value2 == 1) got = r.value;
    }
    const std::size_t gpfs = new_gpfs(lab.m.trace(), trace_pos);
    const std::string where = name_of(mode) + " access " + std::to_string(done) + " (accessor " +
                              std::to_string(accessor) + ", owner " + std::to_string(tg.owner) + ")";
    if (tg.owner != accessor && tg.owner != 0) ++t.cross;
    if (may) {
      if (!got) return where + ": permitted read denied";
      if (gpfs != 0) return where + ": GPF recorded for a permitted read";
      if (tg.stable && *got != load_u64(lab.m.memory().raw(tg.g), off)) {
        return where + ": read returned the wrong value";
      }
      ++t.allowed;
    } else {
      if (got) return where + ": cross-boundary read succeeded";
      if (gpfs != 1) return where + ": denial recorded " + std::to_string(gpfs) + " GPFs";
      ++t.denied;
    }
    ++done;
  }
  t.accesses += done;
  t.audits += lab.m.audits_run() - audits0;
  if (!lab.m.audit_failures().empty()) return "audit: " + lab.m.audit_failures().front();
  if (lab.m.audits_run() == 0) return "no audits ran";
  if (auto why = lab.m.memory().audit()) return "final audit: " + *why;
  return {};
}

}  // namespace

std::string check_isolation_fuzz(std::size_t accesses, std::uint64_t seed, std::string& detail) {
  FuzzTally t;
  for (SimMode mode : kModes) {
    if (auto f = fuzz_mode(mode, accesses, seed, t); !f.empty()) return f;
  }
  detail = std::to_string(t.accesses) + " accesses over sgx+ccx, " + std::to_string(t.cross) +
           " cross-boundary, " + std::to_string(t.denied) + " denied as GPF, " +
           std::to_string(t.allowed) + " permitted, " + std::to_string(t.audits) + " audits";
  return {};
}

// --- 4 ---------------------------------------------------------------------

std::string check_measurement(std::size_t flips, std::uint64_t seed, std::string& detail) {
  const char* rels[] = {"manifests/m1_minimal.manifest", "manifests/m2_files.manifest",
                        "manifests/m3_unmeasured.manifest", "manifests/m4_threads.manifest",
                        "manifests/m5_large.manifest"};
  Lab lab(roomy(SimMode::kCcx));
  std::vector<Manifest> mans;
  std::vector<std::vector<PageImage>> images;
  for (const char* rel : rels) {
    Manifest man = manifest(rel);
    auto pages = materialize(man);
    expect(pages.has_value(), std::string(rel) + ": materialize failed");
    auto e = lab.rt.create(man);
    if (!e) return std::string(rel) + ": " + to_string(e.error());
    const auto want = ref::mrenclave(man.size, man.ssa_frame_size, ref_pages(*pages));
    if (lab.rt.handle(*e)->mrenclave != want) return std::string(rel) + ": mrenclave differs from the reference";
    expect_status(lab.rt.destroy(*e), Status::kSuccess, "destroy");
    mans.push_back(std::move(man));
    images.push_back(std::move(*pages));
  }

  std::mt19937_64 rng(seed);
  std::size_t changed = 0;
  for (std::size_t t = 0; t < flips; ++t) {
    const std::size_t mi = t % mans.size();
    std::vector<PageImage> pages = images[mi];
    std::vector<std::size_t> measured;
    for (std::size_t i = 0; i < pages.size(); ++i) {
      if (pages[i].measured) measured.push_back(i);
    }
    expect(!measured.empty(), "manifest without measured pages");
    PageImage& p = pages[measured[rng() % measured.size()]];
    p.content[rng() % kGranuleSize] ^= static_cast<std::uint8_t>(1u << (rng() % 8));

    const auto original = ref::mrenclave(mans[mi].size, mans[mi].ssa_frame_size, ref_pages(images[mi]));
    const auto want = ref::mrenclave(mans[mi].size, mans[mi].ssa_frame_size, ref_pages(pages));
    const RawEnclave raw = lab.build_raw(mans[mi], pages);
    const SigStruct sig = sign_manifest(lab.m.crypto(), mans[mi], want);
    expect_status(lab.driver().einit(sig, raw.eid).status, Status::kSuccess,
                  "EINIT of flipped image " + std::to_string(t));
    const Digest got = lab.m.enclaves().find(raw.eid)->mrenclave;
    if (got != want) return "flip " + std::to_string(t) + ": mrenclave differs from the reference";
    if (got != original) ++changed;
  }
  detail = "5/5 manifests match the reference, " + std::to_string(changed) + "/" +
           std::to_string(flips) + " bit flips change mrenclave";
  if (changed != flips) return "a bit flip left mrenclave unchanged";
  return {};
}

// --- 5 ---------------------------------------------------------------------

std::string check_einit(std::size_t mutations, std::uint64_t seed, std::string& detail) {
  Lab lab(roomy(SimMode::kSgx));
  const Manifest man = manifest("enclave/basic.manifest");
  auto pages = materialize(man);
  expect(pages.has_value(), "materialize");
  const RawEnclave raw = lab.build_raw(man, *pages);
  const SigStruct good = sign_manifest(lab.m.crypto(), man, raw.expected);
  std::mt19937_64 rng(seed);
  constexpr std::uint64_t kRequestable[] = {kAttrDebug, kAttrProvisionKey, kAttrAexNotify};
  std::map<std::string, int> by_status;

  for (std::size_t i = 0; i < mutations; ++i) {
    SigStruct s = good;
    Status want = Status::kSigInvalid;
    const auto bit = static_cast<std::uint8_t>(1u << (rng() % 8));
    switch (i % 6) {
      case 0:
        s.signature[rng() % s.signature.size()] ^= bit;
        break;
      case 1:
        s.body.enclavehash[rng() % 32] ^= bit;
        break;
      case 2: {
        Digest other = raw.expected;
        other[rng() % 32] ^= bit;
        s = sign_manifest(lab.m.crypto(), man, other);  // signed by the right key
        want = Status::kMeasurementMismatch;
        break;
      }
      case 3:
        s.body.attributes ^= 1ull << (rng() % 64);
        break;
      case 4: {
        Manifest m2 = man;
        m2.attributes ^= kRequestable[rng() % 3];
        s = sign_manifest(lab.m.crypto(), m2, raw.expected);
        want = Status::kAttributeMismatch;
        break;
      }
      default:
        s.public_key[rng() % s.public_key.size()] ^= bit;
        break;
    }
    const LeafResult r = lab.driver().einit(s, raw.eid);
    if (r.succeeded()) return "mutation " + std::to_string(i) + " accepted";
    if (r.status != want) {
      return "mutation " + std::to_string(i) + ": " + std::string(to_string(r.status)) +
             ", expected " + std::string(to_string(want));
    }
    ++by_status[std::string(to_string(r.status))];
    if (lab.m.enclaves().find(raw.eid)->initialized()) return "rejected EINIT left INIT set";
  }
  expect_status(lab.driver().einit(good, raw.eid).status, Status::kSuccess, "unmutated EINIT");
  detail = std::to_string(mutations) + "/" + std::to_string(mutations) + " rejected (";
  for (const auto& [k, v] : by_status) detail += k + " " + std::to_string(v) + ", ";
  detail += "), original accepted";
  detail.replace(detail.find(", )"), 3, ")");
  return {};
}

// --- 6 ---------------------------------------------------------------------

std::string check_swap(std::size_t cycles, std::uint64_t seed, std::string& detail) {
  Lab lab(roomy(SimMode::kSgx));
  lab.m.set_audit_each_leaf(true);
  const EnclaveId e = lab.load("enclave/dynamic.manifest");
  const VirtAddr first = lab.base(e) + 0x40000;
  constexpr std::size_t kPages = 16;
  expect_status(lab.rt.alloc_pages(e, first, kPages), Status::kSuccess, "alloc_pages");
  std::mt19937_64 rng(seed);

  std::vector<PhysAddr> free_slots;
  for (int v = 0; v < 2; ++v) {
    const PhysAddr base = granule_base(lab.new_va_page());
    for (std::size_t s = 0; s < kVaSlots; ++s) free_slots.push_back(base + s * kVaSlotBytes);
  }
  struct Evicted {
    PhysAddr slot;
    Bytes cipher;
    Bytes pcmd;
    Bytes plain;
  };
  struct Blob {
    VirtAddr va;
    PhysAddr slot;
    Bytes cipher;
    Bytes pcmd;
  };
  std::map<VirtAddr, Evicted> out;
  std::vector<Blob> consumed;
  std::size_t restored = 0, replays = 0, tampers = 0;
  auto stage = [&](const Bytes& c, const Bytes& p) {
    lab.m.phys_write(lab.driver().bounce(), c);
    lab.m.phys_write(lab.driver().pcmd_area(), p);
  };

  while (restored < cycles) {
    std::vector<VirtAddr> resident;
    for (std::size_t i = 0; i < kPages; ++i) {
      if (!out.count(first + i * kGranuleSize)) resident.push_back(first + i * kGranuleSize);
    }
    const bool evict = out.empty() || (!resident.empty() && rng() % 2 == 0);
    if (evict) {
      const VirtAddr va = resident[rng() % resident.size()];
      for (int w = 0; w < 3; ++w) write_word(lab, e, va + 8 * (rng() % 512), rng());
      const GranuleNum g = lab.granule(e, va);
      const auto raw = lab.m.memory().raw(g);
      Evicted ev;
      ev.plain.assign(raw.begin(), raw.end());
      const std::size_t pick = rng() % free_slots.size();
      ev.slot = free_slots[pick];
      free_slots.erase(free_slots.begin() + static_cast<std::ptrdiff_t>(pick));
      expect_status(lab.driver().eblock(g).status, Status::kSuccess, "EBLOCK");
      expect_status(lab.driver().etrack(e).status, Status::kSuccess, "ETRACK");
      expect_status(lab.driver().ewb(g, ev.slot).status, Status::kSuccess, "EWB");
      ev.cipher = *lab.m.phys_read(lab.driver().bounce(), kGranuleSize);
      ev.pcmd = *lab.m.phys_read(lab.driver().pcmd_area(), Pcmd::kBytes);
      lab.driver().unmap(va);
      lab.driver().free_epc(g);
      out[va] = std::move(ev);
      continue;
    }

    auto it = out.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng() % out.size()));
    const VirtAddr va = it->first;
    Evicted& ev = it->second;

    // One flipped byte anywhere in the ciphertext or the PCMD.
    Bytes c = ev.cipher, p = ev.pcmd;
    const std::size_t at = rng() % (c.size() + p.size());
    const auto x = static_cast<std::uint8_t>(1 + rng() % 255);
    (at < c.size() ? c[at] : p[at - c.size()]) ^= x;
    stage(c, p);
    const LeafResult bad = reload(lab, e, va, ev.slot, false);
    if (bad.status != Status::kMacCompareFail) {
      return "tamper at byte " + std::to_string(at) + ": " + std::string(to_string(bad.status));
    }
    ++tampers;

    stage(ev.cipher, ev.pcmd);
    GranuleNum g2 = 0;
    expect_status(reload(lab, e, va, ev.slot, false, &g2).status, Status::kSuccess, "ELDU");
    const auto now = lab.m.memory().raw(g2);
    if (!std::equal(now.begin(), now.end(), ev.plain.begin())) {
      return "cycle " + std::to_string(restored) + ": page not restored bit-exact";
    }
    ++restored;
    consumed.push_back({va, ev.slot, ev.cipher, ev.pcmd});
    free_slots.push_back(ev.slot);
    out.erase(it);

    // Replaying any consumed blob, possibly into a slot that has since been reused.
    const Blob& old = consumed[rng() % consumed.size()];
    stage(old.cipher, old.pcmd);
    const LeafResult rep = reload(lab, e, old.va, old.slot, false);
    if (rep.status != Status::kVersionMismatch) {
      return "replay: " + std::string(to_string(rep.status));
    }
    ++replays;
  }
  for (auto& [va, ev] : out) {
    stage(ev.cipher, ev.pcmd);
    expect_status(reload(lab, e, va, ev.slot, false).status, Status::kSuccess, "final ELDU");
  }
  if (!lab.m.audit_failures().empty()) return "audit: " + lab.m.audit_failures().front();
  detail = std::to_string(restored) + " EWB/ELDU cycles bit-exact, " + std::to_string(replays) +
           " replays VERSION_MISMATCH, " + std::to_string(tampers) + " tampers MAC_COMPARE_FAIL";
  return {};
}

// --- 7 ---------------------------------------------------------------------

std::string check_etrack(std::size_t trials, std::uint64_t seed, std::string& detail) {
  Config cfg = roomy(SimMode::kSgx);
  cfg.vcpus = 4;
  Lab lab(cfg);
  const EnclaveId e = lab.load("manifests/m4_threads.manifest");
  const VirtAddr base = lab.base(e);
  const PhysAddr slot = granule_base(lab.new_va_page());
  std::mt19937_64 rng(seed);
  std::size_t gated = 0;

  for (std::size_t t = 0; t < trials; ++t) {
    const std::string where = "trial " + std::to_string(t);
    const VirtAddr victim = base + 0x44000 + (t % 4) * kGranuleSize;
    const GranuleNum g = lab.granule(e, victim);
    std::vector<unsigned> order = {0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t pre_n = 1 + rng() % 3;

    std::vector<unsigned> running;
    auto start = [&](unsigned v) {
      expect_status(lab.rt.prepare_entry(v, e, v, sel(Selector::kCompute),
                                         {20 + rng() % 200, base + 0x40000 + v * kGranuleSize, rng()}),
                    Status::kSuccess, where + " prepare_entry");
      expect(lab.m.step(v) == StepEvent::kEnter, where + " thread did not enter");
      running.push_back(v);
    };
    auto step_some = [&](std::size_t n) {
      for (std::size_t i = 0; i < n && !running.empty(); ++i) lab.m.step(running[rng() % running.size()]);
    };
    auto inside = [&](unsigned v) { return lab.m.vcpu(v).mode == CpuMode::kEnclave; };

    for (std::size_t i = 0; i < pre_n; ++i) start(order[i]);
    step_some(rng() % 30);
    expect_status(lab.driver().eblock(g).status, Status::kSuccess, where + " EBLOCK");
    step_some(rng() % 20);
    expect_status(lab.driver().etrack(e).status, Status::kSuccess, where + " ETRACK");
    std::vector<unsigned> pre;
    for (unsigned v : running) {
      if (inside(v)) pre.push_back(v);
    }
    expect(pre.size() == pre_n, where + " a thread left before ETRACK");
    for (std::size_t i = pre_n; i < 4; ++i) {
      if (rng() % 2) start(order[i]);  // enters after the epoch moved on
    }

    bool written = false;
    auto try_ewb = [&]() -> std::string {
      const bool any_pre = std::any_of(pre.begin(), pre.end(), inside);
      const Status s = lab.driver().ewb(g, slot).status;
      if (any_pre) {
        if (s != Status::kNotTracked) return where + ": EWB with a pre-epoch thread inside gave " + std::string(to_string(s));
        ++gated;
        return {};
      }
      if (s != Status::kSuccess) return where + ": EWB after the pre-epoch threads left gave " + std::string(to_string(s));
      written = true;
      return {};
    };
    if (auto f = try_ewb(); !f.empty()) return f;
    while (!written && !running.empty()) {
      const std::size_t i = rng() % running.size();
      const StepEvent ev = lab.m.step(running[i]);
      if (ev == StepEvent::kHalt) {
        running.erase(running.begin() + static_cast<std::ptrdiff_t>(i));
      } else if (ev == StepEvent::kHostFault || ev == StepEvent::kAex) {
        return where + ": thread stopped unexpectedly";
      }
      if (ev == StepEvent::kExit || rng() % 40 == 0) {
        if (auto f = try_ewb(); !f.empty()) return f;
      }
    }
    if (!written) {
      if (auto f = try_ewb(); !f.empty()) return f;
      if (!written) return where + ": EWB never went through";
    }
    for (unsigned v : running) finish(lab, v);
    lab.driver().unmap(victim);
    lab.driver().free_epc(g);
    expect_status(reload(lab, e, victim, slot, false).status, Status::kSuccess, where + " ELDU");
  }
  detail = std::to_string(trials) + "/" + std::to_string(trials) + " interleavings: " +
           std::to_string(gated) + " early EWBs NOT_TRACKED, EWB succeeded after exit in all";
  return {};
}

// --- 8 ---------------------------------------------------------------------

namespace {

std::string register_round_trip(SimMode mode, std::size_t states, std::mt19937_64& rng) {
  Lab lab(roomy(mode));
  const EnclaveId e = lab.load("enclave/basic.manifest");
  const VirtAddr spin = lab.inject(e, lab.base(e) + kData2, "spin:\n    b spin\n");
  expect_status(lab.rt.prepare_entry(0, e, 0, sel(Selector::kCall), {spin}), Status::kSuccess,
                "prepare_entry");
  VCpu& cpu = lab.m.vcpu(0);
  for (int i = 0; i < 100 && !(cpu.mode == CpuMode::kEnclave && cpu.regs.pc == spin); ++i) {
    lab.m.step(0);
  }
  expect(cpu.mode == CpuMode::kEnclave && cpu.regs.pc == spin, "thread did not reach the loop");

  for (std::size_t i = 0; i < states; ++i) {
    RegisterFile r;
    for (auto& x : r.x) x = rng();
    r.sp = rng();
    r.pstate = rng();
    r.tpidr = rng();
    r.pc = spin;
    cpu.regs = r;
    lab.m.inject_interrupt(0);
    if (lab.m.step(0) != StepEvent::kAex) return name_of(mode) + " state " + std::to_string(i) + ": no AEX";
    for (std::size_t j = 4; j < r.x.size(); ++j) {
      if (std::find(r.x.begin(), r.x.end(), cpu.regs.x[j]) != r.x.end()) {
        return name_of(mode) + " state " + std::to_string(i) + ": enclave register visible to the host";
      }
    }
    if (lab.m.step(0) != StepEvent::kEnter) return name_of(mode) + " state " + std::to_string(i) + ": no ERESUME";
    if (!(cpu.regs == r)) return name_of(mode) + " state " + std::to_string(i) + ": registers changed";
  }
  return {};
}

struct ProgramRun {
  std::vector<std::uint64_t> out;
  std::uint64_t steps = 0;
  std::uint64_t aex = 0;
};

ProgramRun run_program(Lab& lab, EnclaveId e, int schedule, std::mt19937_64& rng,
                       std::uint64_t known_steps) {
  const VirtAddr buf = lab.base(e) + kData;
  for (int i = 0; i < 8; ++i) write_word(lab, e, buf + 8u * i, 0);
  VCpu& cpu = lab.m.vcpu(0);
  if (schedule == 1) cpu.irq.at.insert(cpu.enclave_steps + 1 + rng() % (known_steps - 1));
  if (schedule == 2) cpu.irq.every_step = true;
  const std::uint64_t before = cpu.enclave_steps;
  auto r = lab.call(e, Selector::kCompute, {84, buf, 0x5eed});
  cpu.irq.every_step = false;
  cpu.irq.at.clear();
  expect(r.ok(), "compute under schedule " + std::to_string(schedule) + ": " +
                     std::string(to_string(r.status)));
  ProgramRun run;
  run.steps = cpu.enclave_steps - before;
  run.aex = r.aex_count;
  run.out.push_back(r.value);
  for (int i = 0; i < 8; ++i) run.out.push_back(read_word(lab, e, buf + 8u * i));
  return run;
}

}  // namespace

std::string check_interrupts(std::size_t states, std::uint64_t seed, std::string& detail) {
  std::mt19937_64 rng(seed);
  std::uint64_t program_steps = 0, every_aex = 0;
  for (SimMode mode : kModes) {
    if (auto f = register_round_trip(mode, states, rng); !f.empty()) return f;

    Lab lab(roomy(mode));
    const EnclaveId e = lab.load("enclave/basic.manifest");
    const ProgramRun quiet = run_program(lab, e, 0, rng, 0);
    if (quiet.steps < 1000) return "program ran only " + std::to_string(quiet.steps) + " steps";
    if (quiet.aex != 0) return "AEX without interrupts";
    const ProgramRun once = run_program(lab, e, 1, rng, quiet.steps);
    const ProgramRun every = run_program(lab, e, 2, rng, quiet.steps);
    if (once.aex != 1) return name_of(mode) + ": one-interrupt schedule gave " + std::to_string(once.aex) + " AEX";
    if (every.aex < quiet.steps) return name_of(mode) + ": every-step schedule gave only " + std::to_string(every.aex) + " AEX";
    if (once.out != quiet.out) return name_of(mode) + ": output changed under one interrupt";
    if (every.out != quiet.out) return name_of(mode) + ": output changed under every-step interrupts";
    program_steps = quiet.steps;
    every_aex = every.aex;
  }
  detail = std::to_string(states) + " register states x2 modes bit-exact; " +
           std::to_string(program_steps) + "-step program identical under 0, 1 and " +
           std::to_string(every_aex) + " interrupts";
  return {};
}

// --- 9 ---------------------------------------------------------------------

namespace {

std::string notify_flow(SimMode mode, bool notify, std::string& seen) {
  Lab lab(roomy(mode));
  const EnclaveId e = lab.load(notify ? "enclave/notify.manifest" : "enclave/basic.manifest");
  const VirtAddr buf = lab.base(e) + kData;
  const auto clean = lab.call(e, Selector::kCompute, {200, buf, 9});
  expect(clean.ok(), "clean run");
  for (int i = 0; i < 8; ++i) write_word(lab, e, buf + 8u * i, 0);

  const VirtAddr tcs_va = lab.rt.handle(e)->tcs[0];
  const Tcs tcs0 = lab.tcs(e, tcs_va);
  const Secs* secs = lab.m.enclaves().find(e);
  VCpu& cpu = lab.m.vcpu(0);
  expect_status(lab.rt.prepare_entry(0, e, 0, sel(Selector::kCompute), {200, buf, 9}),
                Status::kSuccess, "prepare_entry");
  expect(lab.m.step(0) == StepEvent::kEnter, "no entry");
  for (int i = 0; i < 60; ++i) expect(lab.m.step(0) == StepEvent::kNone, "early exit");
  lab.m.inject_interrupt(0);
  expect(lab.m.step(0) == StepEvent::kAex, "no AEX");
  expect(lab.tcs(e, tcs_va).cssa == 1, "cssa after AEX is not 1");
  const VirtAddr ssa0 = secs->base + tcs0.ossa;
  auto frame_raw = lab.m.microprograms().enclave_read(e, ssa0, SsaFrame::kBytes);
  expect(frame_raw.has_value(), "SSA frame unreadable");
  const SsaFrame frame = SsaFrame::load(*frame_raw);

  expect(lab.m.step(0) == StepEvent::kEnter, "no re-entry");
  const std::string tag = name_of(mode) + (notify ? " notify" : " plain");
  if (notify) {
    if (cpu.regs.pc != secs->base + tcs0.oentry) return tag + ": re-entry did not land in the handler";
    if (cpu.regs.x[0] != 1 || lab.tcs(e, tcs_va).cssa != 1) return tag + ": handler not at cssa=1";
    bool popped = false;
    while (cpu.mode == CpuMode::kEnclave) {
      const StepEvent ev = lab.m.step(0);
      if (ev == StepEvent::kAex) return tag + ": unexpected AEX";
      if (!popped && lab.tcs(e, tcs_va).cssa == 0) {
        popped = true;
        seen = "handler at cssa=1, EDECCSSA to 0";
      }
    }
    if (!popped) return tag + ": cssa never returned to 0";
  } else {
    if (!(cpu.regs == frame.regs)) return tag + ": ERESUME did not restore the saved frame";
    if (lab.tcs(e, tcs_va).cssa != 0) return tag + ": cssa not 0 after ERESUME";
    while (cpu.mode == CpuMode::kEnclave) {
      if (lab.m.step(0) == StepEvent::kAex) return tag + ": unexpected AEX";
    }
  }
  if (cpu.regs.x[6] != clean.value) return tag + ": result differs from the uninterrupted run";
  if (lab.tcs(e, tcs_va).cssa != 0) return tag + ": cssa left at " + std::to_string(lab.tcs(e, tcs_va).cssa);
  return {};
}

}  // namespace

std::string check_aex_notify(std::string& detail) {
  std::string seen;
  for (SimMode mode : kModes) {
    for (bool notify : {true, false}) {
      if (auto f = notify_flow(mode, notify, seen); !f.empty()) return f;
    }
  }
  detail = seen + ", result intact; flag clear: ERESUME restores the frame; both modes";
  return {};
}

// --- 10 --------------------------------------------------------------------

std::string check_sgx2(std::string& detail) {
  std::size_t rejected = 0;
  for (SimMode mode : kModes) {
    const std::string tag = name_of(mode) + " ";
    {
      Lab lab(roomy(mode));
      lab.m.set_audit_each_leaf(true);
      const EnclaveId e = lab.load("enclave/dynamic.manifest");
      const VirtAddr b = lab.base(e);

      // EAUG: faults until EACCEPT.
      const VirtAddr va = b + 0x40000;
      expect_status(lab.eaug(e, va), Status::kSuccess, tag + "EAUG");
      for (int i = 0; i < 3; ++i) {
        auto r = lab.call(e, Selector::kProbe, {va + 8u * i});
        expect(r.ok(), tag + "probe ecall");
        if (r.value2 != 0) return tag + "pending page readable before EACCEPT";
      }
      expect_status(accept(lab, e, va, reg_flags(true, true, false)), Status::kSuccess, tag + "EACCEPT");
      auto r = lab.call(e, Selector::kProbe, {va + 64});
      if (!r.ok() || r.value2 != 1 || r.value != 0) return tag + "accepted page not readable as zero";

      // REG -> TRIM -> EREMOVE.
      const VirtAddr tv = b + 0x41000;
      expect_status(lab.rt.alloc_pages(e, tv, 1), Status::kSuccess, tag + "alloc");
      const GranuleNum tg = lab.granule(e, tv);
      expect_status(lab.driver().emodt(SecInfo{PageType::kTrim, {}}, tg).status, Status::kSuccess,
                    tag + "EMODT TRIM");
      expect_status(accept(lab, e, tv, SecInfo{PageType::kTrim, {}}.pack()), Status::kSuccess,
                    tag + "EACCEPT TRIM");
      expect_status(lab.driver().eremove(tg).status, Status::kSuccess, tag + "EREMOVE");
      lab.driver().unmap(tv);
      lab.driver().free_epc(tg);
      if (lab.m.memory().epcm_lookup(tg).valid) return tag + "trimmed page still in the EPCM";
      if (lab.m.enclaves().find(e)->pages.count(tv)) return tag + "trimmed page still owned";
      if (lab.m.memory().gpts().realm_owner(tg)) return tag + "trimmed granule still Realm";

      // Illegal transitions leave the page as it was.
      const VirtAddr rv = b + kData;
      const GranuleNum rg = lab.granule(e, rv);
      const GranuleNum tcs_g = lab.granule(e, lab.rt.handle(e)->tcs[0]);
      const VirtAddr pv = b + 0x42000;
      expect_status(lab.eaug(e, pv), Status::kSuccess, tag + "EAUG");
      const GranuleNum pg = lab.granule(e, pv);
      const VirtAddr trv = b + 0x43000;
      expect_status(lab.rt.alloc_pages(e, trv, 1), Status::kSuccess, tag + "alloc");
      const GranuleNum trg = lab.granule(e, trv);
      expect_status(lab.driver().emodt(SecInfo{PageType::kTrim, {}}, trg).status, Status::kSuccess,
                    tag + "EMODT TRIM");

      struct Illegal {
        std::string what;
        GranuleNum g;
        std::function<LeafResult()> run;
      };
      const std::vector<Illegal> cases = {
          {"EMODT TCS->REG", tcs_g, [&] { return lab.driver().emodt(SecInfo{PageType::kReg, {true, true, false}}, tcs_g); }},
          {"EMODT REG->VA", rg, [&] { return lab.driver().emodt(SecInfo{PageType::kVa, {}}, rg); }},
          {"EMODT REG->SECS", rg, [&] { return lab.driver().emodt(SecInfo{PageType::kSecs, {}}, rg); }},
          {"EMODT TRIM->REG", trg, [&] { return lab.driver().emodt(SecInfo{PageType::kReg, {true, true, false}}, trg); }},
          {"EMODT on a pending page", pg, [&] { return lab.driver().emodt(SecInfo{PageType::kTrim, {}}, pg); }},
          {"EMODPR on a TCS", tcs_g, [&] { return lab.driver().emodpr(SecInfo{PageType::kTcs, {}}, tcs_g); }},
          {"EMODPR on a pending page", pg, [&] { return lab.driver().emodpr(SecInfo{PageType::kReg, {true, false, false}}, pg); }},
          {"EMODPR on a trimmed page", trg, [&] { return lab.driver().emodpr(SecInfo{PageType::kReg, {true, false, false}}, trg); }},
          {"EAUG over a live page", rg, [&] {
             auto g = lab.driver().alloc_epc();
             const LeafResult res = lab.driver().eaug(e, rv, *g);
             lab.driver().free_epc(*g);
             return res;
           }},
      };
      for (const Illegal& c : cases) {
        const EpcmEntry before = lab.m.memory().epcm_lookup(c.g);
        const LeafResult res = c.run();
        if (res.succeeded()) return tag + c.what + " accepted";
        if (!(lab.m.memory().epcm_lookup(c.g) == before)) return tag + c.what + " changed the EPCM";
        ++rejected;
      }
      const Status wrong_accept = accept(lab, e, rv, SecInfo{PageType::kTrim, {}}.pack());
      if (wrong_accept == Status::kSuccess) return tag + "EACCEPT TRIM of a REG page accepted";
      ++rejected;
      if (!lab.m.audit_failures().empty()) return tag + "audit: " + lab.m.audit_failures().front();
    }
    if (auto f = check_emodpr_matrix(mode)) return tag + "EMODPR matrix: " + *f;
  }
  detail = "EAUG faults until EACCEPT; 64/64 EMODPR pairs; REG->TRIM->EREMOVE frees; " +
           std::to_string(rejected) + " illegal transitions rejected; both modes";
  return {};
}

// --- 11 --------------------------------------------------------------------

std::string check_attestation(std::size_t pairs, std::string& detail) {
  std::size_t ok_pairs = 0, tampers = 0, svn_checks = 0;
  Lab lab(roomy(SimMode::kSgx));
  for (std::size_t i = 1; i <= pairs; ++i) {
    const std::string nn = (i < 10 ? "0" : "") + std::to_string(i);
    const std::string tag = "pair " + nn + ": ";
    const EnclaveId a = lab.load("attest/pair" + nn + "_a.manifest");
    const EnclaveId b = lab.load("attest/pair" + nn + "_b.manifest");
    const auto& ha = *lab.rt.handle(a);
    const auto& hb = *lab.rt.handle(b);
    if (ha.mrsigner != hb.mrsigner) return tag + "fixtures have different signers";
    if (ha.mrenclave == hb.mrenclave) return tag + "fixtures have the same identity";

    const AttestResult r = lab.rt.attest(a, b);
    if (r.status != Status::kSuccess || !r.a_verifies_b || !r.b_verifies_a) return tag + "mutual verification failed";
    if (r.a_sees != hb.mrenclave || r.b_sees != ha.mrenclave) return tag + "reports name the wrong enclave";

    auto ti = lab.rt.target_info(b);
    expect(ti.has_value(), tag + "target_info");
    ReportData rd{};
    rd[0] = static_cast<std::uint8_t>(i);
    auto rep = lab.rt.report(a, *ti, rd);
    expect(rep.has_value(), tag + "report");
    const std::vector<std::function<void(Report&)>> edits = {
        [](Report& x) { x.body.attributes ^= kAttrDebug; },
        [](Report& x) { x.body.mrenclave[7] ^= 1; },
        [](Report& x) { x.body.mrsigner[0] ^= 0x80; },
        [](Report& x) { x.body.isv_prod_id ^= 1; },
        [](Report& x) { x.body.isv_svn ^= 2; },
        [](Report& x) { x.body.reportdata[31] ^= 1; },
        [](Report& x) { x.keyid[5] ^= 1; },
        [](Report& x) { x.mac[15] ^= 1; },
    };
    for (std::size_t k = 0; k < edits.size(); ++k) {
      Report t = *rep;
      edits[k](t);
      auto v = lab.rt.verify(b, t);
      if (!v || *v) return tag + "tampered report " + std::to_string(k) + " verified";
      ++tampers;
    }

    const std::string secret = "pair " + nn + " secret";
    const Bytes payload(secret.begin(), secret.end());
    auto by_enclave = lab.rt.seal(a, kSealPolicyMrEnclave, payload);
    auto by_signer = lab.rt.seal(a, kSealPolicyMrSigner, payload);
    if (!by_enclave || !by_signer) return tag + "seal failed";
    auto back = lab.rt.unseal(a, *by_enclave);
    if (!back || *back != payload) return tag + "MRENCLAVE blob does not unseal in its sealer";
    if (lab.rt.unseal(b, *by_enclave)) return tag + "MRENCLAVE blob unsealed in the sibling";
    auto sib = lab.rt.unseal(b, *by_signer);
    if (!sib || *sib != payload) return tag + "MRSIGNER blob does not unseal in the sibling";

    const auto svn_a = lab.m.enclaves().find(a)->isv_svn;
    const auto svn_b = lab.m.enclaves().find(b)->isv_svn;
    if (svn_b > svn_a) {
      auto newer = lab.rt.seal(b, kSealPolicyMrSigner, payload);
      if (!newer) return tag + "seal in b failed";
      if (lab.rt.unseal(a, *newer)) return tag + "blob from a newer svn unsealed in an older enclave";
      ++svn_checks;
    }
    expect_status(lab.rt.destroy(a), Status::kSuccess, tag + "destroy a");
    expect_status(lab.rt.destroy(b), Status::kSuccess, tag + "destroy b");
    ++ok_pairs;
  }
  detail = std::to_string(ok_pairs) + "/" + std::to_string(pairs) + " pairs: mutual reports, " +
           std::to_string(tampers) + " tampers rejected, sealing policies hold, " +
           std::to_string(svn_checks) + " svn floors enforced";
  return {};
}

// --- 12 --------------------------------------------------------------------

std::string check_mode_differential(std::string& detail) {
  const Config cfg = Config::load(fixture("configs/small_epc.json"));
  const auto script = fixture("scenarios/oversubscribe.scn");
  std::ifstream in(script);
  std::stringstream text;
  text << in.rdbuf();
  auto lines = parse_scenario(text.str());
  expect(lines.has_value(), "oversubscribe.scn does not parse");
  std::uint64_t allocated = 0;
  for (const auto& l : *lines) {
    if (l.op == "ALLOC") allocated += std::stoull(l.args.at(2), nullptr, 0);
  }
  if (allocated < 2 * cfg.epc_size) return "scenario allocates less than twice the EPC";
  const std::uint64_t excess = allocated - cfg.epc_size;

  std::map<SimMode, ScenarioReport> reps;
  for (SimMode mode : kModes) {
    ScenarioOptions o;
    o.mode = mode;
    reps[mode] = run_scenario_file(cfg, script, o);
    if (reps[mode].exit_code() != 0) {
      return name_of(mode) + " run failed: " + reps[mode].error + reps[mode].failure;
    }
  }
  const auto& sgx = reps[SimMode::kSgx];
  const auto& ccx = reps[SimMode::kCcx];
  if (sgx.functional() != ccx.functional()) return "functional output differs between modes";
  const auto sgx_ewb = sgx.leaf_count(Leaf::kEwb);
  const auto ccx_swaps =
      ccx.leaf_count(Leaf::kEwb) + ccx.leaf_count(Leaf::kEldu) + ccx.leaf_count(Leaf::kEldb);
  detail = "allocated " + std::to_string(allocated) + " pages on a " + std::to_string(cfg.epc_size) +
           "-page EPC; sgx EWB " + std::to_string(sgx_ewb) + " (>= " + std::to_string(excess) +
           "), ccx EWB/ELD " + std::to_string(ccx_swaps) + "; outputs identical";
  if (sgx_ewb < excess) return "sgx mode wrote back too few pages";
  if (ccx.leaf_count(Leaf::kEwb) != 0) return "ccx mode ran EWB";
  return {};
}

// --- 13 --------------------------------------------------------------------

std::string check_cost_shape(std::string& detail) {
  const std::uint64_t sizes[] = {4096, 8192, 16384};
  std::vector<std::uint64_t> ecreate;
  for (std::uint64_t n : sizes) {
    Config cfg = Config::load(fixture("configs/default.json"));
    cfg.mode = SimMode::kSgx;
    cfg.granule_count = n;
    BenchOptions o;
    o.reps = 5;
    o.fixtures = fixture("");
    const BenchReport rep = run_bench(cfg, "leaves", o);
    if (!rep.error.empty()) return "bench at " + std::to_string(n) + " granules: " + rep.error;
    const std::string tag = std::to_string(n) + " granules: ";
    for (std::size_t i = 0; i < kLeafCount; ++i) {
      if (rep.leaves[i].count == 0) return tag + std::string(to_string(static_cast<Leaf>(i))) + " never ran";
    }
    if (rep.mean_cost(Leaf::kEwb) <= rep.mean_cost(Leaf::kEblock)) return tag + "EWB not above EBLOCK";
    if (rep.mean_cost(Leaf::kEldu) <= rep.mean_cost(Leaf::kEtrack)) return tag + "ELDU not above ETRACK";
    const std::uint64_t top = rep.mean_cost(Leaf::kEcreate);
    for (std::size_t i = 0; i < kLeafCount; ++i) {
      const Leaf l = static_cast<Leaf>(i);
      if (l != Leaf::kEcreate && rep.mean_cost(l) >= top) {
        return tag + "ECREATE not above " + std::string(to_string(l));
      }
    }
    ecreate.push_back(top);
  }
  detail = "EWB>EBLOCK, ELDU>ETRACK, ECREATE above all; ECREATE ";
  for (std::size_t i = 0; i < ecreate.size(); ++i) {
    detail += (i ? " < " : "") + std::to_string(ecreate[i]);
  }
  detail += " over 4096/8192/16384 granules";
  for (std::size_t i = 1; i < ecreate.size(); ++i) {
    if (ecreate[i] <= ecreate[i - 1]) return "ECREATE cost not strictly increasing";
  }
  return {};
}

// --- 14 --------------------------------------------------------------------

namespace {

std::string full_suite_report() {
  std::ostringstream os;
  const Config cfg = Config::load(fixture("configs/default.json"));
  std::vector<std::filesystem::path> scripts;
  for (const auto& ent : std::filesystem::directory_iterator(fixture("scenarios"))) {
    if (ent.path().extension() == ".scn") scripts.push_back(ent.path());
  }
  std::sort(scripts.begin(), scripts.end());
  for (const auto& path : scripts) {
    for (SimMode mode : kModes) {
      ScenarioOptions o;
      o.mode = mode;
      std::ostringstream trace;
      o.trace = &trace;
      const ScenarioReport rep = run_scenario_file(cfg, path, o);
      os << path.filename().string() << ' ' << name_of(mode) << '\n';
      rep.write_jsonl(os);
      os << trace.str();
    }
  }
  for (const std::string& suite : bench_suites()) {
    for (SimMode mode : kModes) {
      Config c = cfg;
      c.mode = mode;
      BenchOptions o;
      o.reps = 3;
      o.fixtures = fixture("");
      os << run_bench(c, suite, o).to_json().dump() << '\n';
    }
  }
  return os.str();
}

}  // namespace

std::string check_determinism(std::string& detail) {
  const std::string a = full_suite_report();
  const std::string b = full_suite_report();
  detail = std::to_string(a.size()) + " report bytes per run";
  if (a.size() < 1000) return "suite report suspiciously small";
  if (a != b) {
    const auto at = std::mismatch(a.begin(), a.end(), b.begin(), b.end()).first - a.begin();
    return "reports differ at byte " + std::to_string(at);
  }
  detail += ", identical across two runs";
  return {};
}

// --- table -----------------------------------------------------------------

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "leaf coverage", 10.0, [](std::string& d) { return check_leaf_coverage(d); }},
      {2, "access matrix", 1.0, [](std::string& d) { return check_access_matrix(d); }},
      {3, "isolation fuzz", 30.0, [](std::string& d) { return check_isolation_fuzz(10'000, 1, d); }},
      {4, "measurement oracle", 5.0, [](std::string& d) { return check_measurement(32, 4, d); }},
      {5, "EINIT soundness", std::nullopt, [](std::string& d) { return check_einit(100, 5, d); }},
      {6, "swap round trip and anti-replay", std::nullopt,
       [](std::string& d) { return check_swap(200, 6, d); }},
      {7, "ETRACK gating", std::nullopt, [](std::string& d) { return check_etrack(50, 7, d); }},
      {8, "context round trip and interrupt transparency", 60.0,
       [](std::string& d) { return check_interrupts(100, 8, d); }},
      {9, "AEX-Notify flow", std::nullopt, [](std::string& d) { return check_aex_notify(d); }},
      {10, "SGX2 dynamic memory", std::nullopt, [](std::string& d) { return check_sgx2(d); }},
      {11, "local attestation and sealing", std::nullopt,
       [](std::string& d) { return check_attestation(20, d); }},
      {12, "mode differential", std::nullopt, [](std::string& d) { return check_mode_differential(d); }},
      {13, "cost shape", std::nullopt, [](std::string& d) { return check_cost_shape(d); }},
      {14, "determinism", std::nullopt, [](std::string& d) { return check_determinism(d); }},
  };
  return all;
}

CriterionResult run_criterion(const Criterion& c) {
  CriterionResult r;
  r.id = c.id;
  r.name = c.name;
  r.limit_seconds = c.limit_seconds;
  const auto t0 = std::chrono::steady_clock::now();
  std::string failure;
  try {
    failure = c.run(r.detail);
  } catch (const std::exception& e) {
    failure = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (failure.empty() && c.limit_seconds && r.seconds > *c.limit_seconds) {
    failure = "took " + fmt(r.seconds) + " s, limit " + fmt(*c.limit_seconds, 0) + " s";
  }
  r.pass = failure.empty();
  if (!r.pass) r.detail = failure + (r.detail.empty() ? "" : " [" + r.detail + "]");
  return r;
}

}  // namespace testutil
