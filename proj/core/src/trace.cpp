#include "ccx/trace.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace ccx {

void Trace::record(std::uint64_t step, int vcpu, std::string kind, std::string payload) {
  records_.push_back({step, vcpu, std::move(kind), std::move(payload)});
}

std::size_t Trace::count(std::string_view kind) const {
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(), [&](const TraceRecord& r) { return r.kind == kind; }));
}

void Trace::write_jsonl(std::ostream& os) const {
  for (const auto& r : records_) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["vcpu"] = r.vcpu;
    j["kind"] = r.kind;
    j["payload"] = r.payload;
    os << j.dump() << '\n';
  }
}

}  // namespace ccx
