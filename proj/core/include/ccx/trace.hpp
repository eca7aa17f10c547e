#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ccx {

// One line of the event trace. vcpu is -1 for driver-issued (kernel) events.
struct TraceRecord {
  std::uint64_t step = 0;
  int vcpu = -1;
  std::string kind;
  std::string payload;
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

class Trace {
 public:
  void record(std::uint64_t step, int vcpu, std::string kind, std::string payload);
  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  std::size_t count(std::string_view kind) const;
  void clear() { records_.clear(); }
  // One JSON object per line.
  void write_jsonl(std::ostream& os) const;

 private:
  std::vector<TraceRecord> records_;
};

}  // namespace ccx
