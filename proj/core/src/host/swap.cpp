#include "ccx/host/swap.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "ccx/bytes.hpp"

namespace ccx::host {
namespace {

std::filesystem::path make_temp_dir() {
  std::random_device rd;
  const auto root = std::filesystem::temp_directory_path();
  for (int i = 0; i < 100; ++i) {
    std::ostringstream name;
    name << "ccx-swap-" << std::hex << rd() << rd();
    auto p = root / name.str();
    if (std::filesystem::create_directory(p)) return p;
  }
  throw std::runtime_error("cannot create a swap directory");
}

}  // namespace

Bytes SwapBlob::serialize() const {
  Bytes out(8 + 4 + 4 + 8 + 8 + Pcmd::kBytes);
  ByteWriter w(out);
  w.text(kMagic, 8).u32(eid).zeros(4).u64(vaddr).u64(slot);
  std::array<std::uint8_t, Pcmd::kBytes> p{};
  pcmd.store(p);
  w.bytes(p);
  out.insert(out.end(), ciphertext.begin(), ciphertext.end());
  return out;
}

std::optional<SwapBlob> SwapBlob::parse(std::span<const std::uint8_t> in) {
  constexpr std::size_t kHeader = 8 + 4 + 4 + 8 + 8 + Pcmd::kBytes;
  if (in.size() != kHeader + kGranuleSize) return std::nullopt;
  if (!std::equal(kMagic.begin(), kMagic.end(), in.begin())) return std::nullopt;
  ByteReader r(in.subspan(8));
  SwapBlob b;
  b.eid = r.u32();
  r.skip(4);
  b.vaddr = r.u64();
  b.slot = r.u64();
  b.pcmd = Pcmd::load(in.subspan(32, Pcmd::kBytes));
  b.ciphertext.assign(in.begin() + kHeader, in.end());
  return b;
}

SwapManager::SwapManager(Driver& d, std::filesystem::path dir) : driver_(d), dir_(std::move(dir)) {
  if (!active()) return;
  if (dir_.empty()) {
    dir_ = make_temp_dir();
    own_dir_ = true;
  } else {
    std::filesystem::create_directories(dir_);
  }
  driver_.set_reclaimer([this] { return reclaim_one(); });
}

SwapManager::~SwapManager() {
  if (active()) driver_.set_reclaimer({});
  if (own_dir_) {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
}

void SwapManager::track(EnclaveId eid, VirtAddr va) {
  if (!active()) return;
  untrack(eid, va);
  fifo_.emplace_back(eid, page_floor(va));
  // Keep a VA page around while granules are still free; once the EPC is
  // full there is nowhere to put one.
  if (free_slots_.empty()) {
    if (auto g = driver_.alloc_epc_no_reclaim()) add_va_page(*g);
  }
}

bool SwapManager::add_va_page(GranuleNum g) {
  if (!driver_.epa(g).succeeded()) {
    driver_.free_epc(g);
    return false;
  }
  va_pages_.push_back(g);
  for (std::size_t i = 0; i < kVaSlots; ++i) free_slots_.insert(granule_base(g) + i * kVaSlotBytes);
  return true;
}

void SwapManager::untrack(EnclaveId eid, VirtAddr va) {
  auto it = std::find(fifo_.begin(), fifo_.end(), std::pair{eid, page_floor(va)});
  if (it != fifo_.end()) fifo_.erase(it);
}

void SwapManager::forget(EnclaveId eid) {
  std::erase_if(fifo_, [&](const auto& e) { return e.first == eid; });
  for (auto it = swapped_.begin(); it != swapped_.end();) {
    if (it->first.first == eid) {
      // The slot keeps its version until the VA page goes; it is not reused.
      std::error_code ec;
      std::filesystem::remove(blob_path(eid, it->first.second), ec);
      it = swapped_.erase(it);
    } else {
      ++it;
    }
  }
}

bool SwapManager::swapped(EnclaveId eid, VirtAddr va) const {
  return swapped_.count({eid, page_floor(va)}) != 0;
}

std::filesystem::path SwapManager::blob_path(EnclaveId eid, VirtAddr va) const {
  std::ostringstream name;
  name << 'e' << to_underlying(eid) << '_' << std::hex << page_floor(va) << ".blob";
  return dir_ / name.str();
}

std::optional<PhysAddr> SwapManager::take_slot() {
  if (free_slots_.size() <= 1) {
    auto g = driver_.alloc_epc_no_reclaim();
    if (!g && free_slots_.size() == 1 && !fifo_.empty()) {
      // Spend the last slot to free a granule for a new VA page.
      const PhysAddr last = *free_slots_.begin();
      free_slots_.erase(free_slots_.begin());
      const auto victim = fifo_.front();
      if (evict(victim.first, victim.second, last) != Status::kSuccess) {
        free_slots_.insert(last);
      } else {
        g = driver_.alloc_epc_no_reclaim();
      }
    }
    if (g) add_va_page(*g);
  }
  if (free_slots_.empty()) return std::nullopt;
  const PhysAddr s = *free_slots_.begin();
  free_slots_.erase(free_slots_.begin());
  return s;
}

Status SwapManager::evict(EnclaveId eid, VirtAddr va, PhysAddr slot) {
  Machine& m = driver_.machine();
  const Secs* secs = m.enclaves().find(eid);
  if (!secs) return Status::kInvalidParameter;
  auto it = secs->pages.find(va);
  if (it == secs->pages.end()) return Status::kInvalidPage;
  const GranuleNum g = it->second;

  LeafResult r = driver_.eblock(g);
  if (!r.succeeded() && r.status != Status::kAlreadyBlocked) return r.status;
  r = driver_.etrack(eid);
  if (!r.succeeded()) return r.status;
  r = driver_.ewb(g, slot);
  if (!r.succeeded()) return r.status;

  auto cipher = m.phys_read(driver_.bounce(), kGranuleSize);
  auto pcmd = m.phys_read(driver_.pcmd_area(), Pcmd::kBytes);
  if (!cipher || !pcmd) throw ModelError("swap staging unreadable");
  SwapBlob blob;
  blob.eid = to_underlying(eid);
  blob.vaddr = va;
  blob.slot = slot;
  blob.pcmd = Pcmd::load(*pcmd);
  blob.ciphertext = std::move(*cipher);
  const Bytes bytes = blob.serialize();
  std::ofstream out(blob_path(eid, va), std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write swap blob " + blob_path(eid, va).string());

  driver_.unmap(va);
  driver_.free_epc(g);
  swapped_[{eid, va}] = slot;
  untrack(eid, va);
  ++ewb_;
  return Status::kSuccess;
}

Status SwapManager::swap_out(EnclaveId eid, VirtAddr va) {
  if (!active()) return Status::kSuccess;
  va = page_floor(va);
  if (swapped(eid, va)) return Status::kSuccess;
  auto slot = take_slot();
  if (!slot) return Status::kOutOfMemory;
  const Status s = evict(eid, va, *slot);
  if (s != Status::kSuccess) {
    free_slots_.insert(*slot);
    ++failures_;
  }
  return s;
}

Status SwapManager::swap_in(EnclaveId eid, VirtAddr va) {
  if (!active()) return Status::kSuccess;
  va = page_floor(va);
  auto rec = swapped_.find({eid, va});
  if (rec == swapped_.end()) return Status::kInvalidParameter;

  std::ifstream in(blob_path(eid, va), std::ios::binary);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto blob = SwapBlob::parse(bytes);
  if (!blob) {
    ++failures_;
    return Status::kMacCompareFail;
  }
  Machine& m = driver_.machine();
  std::array<std::uint8_t, Pcmd::kBytes> pcmd{};
  blob->pcmd.store(pcmd);

  auto g = driver_.alloc_epc();
  if (!g) return Status::kOutOfMemory;
  // Staging is written after any reclaim, which reuses the same buffers.
  m.phys_write(driver_.bounce(), blob->ciphertext);
  m.phys_write(driver_.pcmd_area(), pcmd);
  const PhysAddr slot = rec->second;
  LeafResult r = driver_.eld(false, va, eid, *g, slot);
  if (!r.succeeded()) {
    driver_.free_epc(*g);
    ++failures_;
    return r.status;
  }
  driver_.map(va, *g);
  swapped_.erase(rec);
  free_slots_.insert(slot);
  std::error_code ec;
  std::filesystem::remove(blob_path(eid, va), ec);
  ++eldu_;
  track(eid, va);
  return Status::kSuccess;
}

bool SwapManager::reclaim_one() {
  if (!active() || reclaiming_) return false;
  reclaiming_ = true;
  bool done = false;
  std::size_t attempts = fifo_.size();
  while (!done && attempts-- > 0 && !fifo_.empty()) {
    std::pair<EnclaveId, VirtAddr> victim = fifo_.front();
    if (policy_) {
      auto v = policy_(fifo_);
      if (!v) break;
      victim = *v;
    }
    if (swap_out(victim.first, victim.second) == Status::kSuccess) {
      done = true;
    } else {
      untrack(victim.first, victim.second);
    }
  }
  reclaiming_ = false;
  return done;
}

}  // namespace ccx::host
