#include "ccx/cost_model.hpp"

namespace ccx {

CostTable CostTable::defaults() {
  CostTable t;
  t.leaf_base.fill(200);
  t.leaf_base[static_cast<std::size_t>(Leaf::kEcreate)] = 1000;
  return t;
}

void CostLedger::begin(Leaf l) {
  auto& s = stats_[index(l)];
  ++s.count;
  s.cost += table_.leaf_base[index(l)];
}

std::uint64_t CostLedger::total_cost() const noexcept {
  std::uint64_t n = 0;
  for (const auto& s : stats_) n += s.cost;
  return n;
}

std::uint64_t CostLedger::total_count() const noexcept {
  std::uint64_t n = 0;
  for (const auto& s : stats_) n += s.count;
  return n;
}

}  // namespace ccx
