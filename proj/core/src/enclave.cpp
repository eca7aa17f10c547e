#include "ccx/enclave.hpp"

#include "ccx/structs.hpp"

namespace ccx {

bool Secs::initialized() const noexcept { return (attributes & kAttrInit) != 0; }

std::uint64_t Secs::threads_inside() const noexcept {
  std::uint64_t n = 0;
  for (const auto& [epoch, count] : entered_counts) n += count;
  return n;
}

std::uint64_t Secs::threads_inside_upto(std::uint64_t epoch) const noexcept {
  std::uint64_t n = 0;
  for (const auto& [e, count] : entered_counts) {
    if (e > epoch) break;
    n += count;
  }
  return n;
}

Secs& EnclaveRegistry::create(GranuleNum secs_granule) {
  auto s = std::make_unique<Secs>();
  s->eid = EnclaveId{next_++};
  s->granule = secs_granule;
  Secs& ref = *s;
  table_.emplace(ref.eid, std::move(s));
  return ref;
}

void EnclaveRegistry::erase(EnclaveId eid) { table_.erase(eid); }

Secs* EnclaveRegistry::find(EnclaveId eid) {
  auto it = table_.find(eid);
  return it == table_.end() ? nullptr : it->second.get();
}

const Secs* EnclaveRegistry::find(EnclaveId eid) const {
  auto it = table_.find(eid);
  return it == table_.end() ? nullptr : it->second.get();
}

std::vector<EnclaveId> EnclaveRegistry::ids() const {
  std::vector<EnclaveId> out;
  out.reserve(table_.size());
  for (const auto& [eid, s] : table_) out.push_back(eid);
  return out;
}

}  // namespace ccx
