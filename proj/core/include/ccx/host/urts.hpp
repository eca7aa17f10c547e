#pragma once

// Untrusted runtime: owns the driver, loader and swap manager, and runs
// ECALLs through the host entry stub, servicing OCALLs, interrupts and
// swapped-out pages along the way.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "ccx/host/driver.hpp"
#include "ccx/host/loader.hpp"
#include "ccx/host/swap.hpp"
#include "ccx/host/trts.hpp"

namespace ccx::host {

struct FaultReport {
  ExitKind kind = ExitKind::kNone;
  VirtAddr va = 0;
  Status status = Status::kSuccess;
  std::string reason;  // "gpf", "page-fault", "ssa-overflow", "abort", "budget"
};

struct EcallResult {
  Status status = Status::kSuccess;
  std::uint64_t value = 0;   // x6 on return
  std::uint64_t value2 = 0;  // x7 on return
  std::optional<FaultReport> fault;
  std::uint64_t aex_count = 0;
  std::uint64_t ocalls = 0;
  std::uint64_t swap_ins = 0;
  std::uint64_t steps = 0;

  bool ok() const noexcept { return status == Status::kSuccess; }
};

class Runtime;

struct OcallContext {
  Runtime& runtime;
  EnclaveId eid;
  unsigned vcpu;
  std::uint64_t id;
  std::uint64_t arg;
};

using OcallHandler = std::function<std::uint64_t(OcallContext&)>;

// Built-in OCALLs.
inline constexpr std::uint64_t kOcallDouble = 0;  // returns arg * 2
inline constexpr std::uint64_t kOcallProbe = 1;   // host read at arg: 1 if it worked, else 0

struct AttestResult {
  bool a_verifies_b = false;
  bool b_verifies_a = false;
  Status status = Status::kSuccess;  // first failure while producing reports
  Digest a_sees{};  // mrenclave in the report A checked
  Digest b_sees{};
};

class Runtime {
 public:
  explicit Runtime(Machine& m);

  Machine& machine() noexcept { return m_; }
  Driver& driver() noexcept { return driver_; }
  SwapManager& swap() noexcept { return swap_; }

  Expected<EnclaveId, LoadError> create(const Manifest& manifest, const LoadOptions& opts = {});
  Status destroy(EnclaveId eid);
  const EnclaveHandle* handle(EnclaveId eid) const;
  std::vector<EnclaveId> enclaves() const;

  EcallResult ecall(EnclaveId eid, std::size_t tcs, std::uint64_t selector,
                    std::array<std::uint64_t, 4> args = {}, unsigned vcpu = 0);

  // Loads the vCPU registers for an ECALL without running it. The vCPU
  // halts once the enclave exits; the return value is then in x6.
  Status prepare_entry(unsigned vcpu, EnclaveId eid, std::size_t tcs, std::uint64_t selector,
                       std::array<std::uint64_t, 4> args = {});

  void set_ocall(std::uint64_t id, OcallHandler h) { ocalls_[id] = std::move(h); }
  std::uint64_t ocall_denials() const noexcept { return ocall_denials_; }
  void note_ocall_denial() noexcept { ++ocall_denials_; }

  // Makes a TCS created at run time (EMODT + EACCEPT) usable for ECALLs.
  // Returns its thread index.
  Expected<std::size_t, Status> add_thread(EnclaveId eid, VirtAddr tcs_va);

  // EAUG + in-enclave EACCEPT for `pages` pages starting at va.
  Status alloc_pages(EnclaveId eid, VirtAddr va, std::size_t pages, unsigned vcpu = 0);

  // Untrusted buffer the enclaves read from and write to.
  VirtAddr shared() const noexcept { return shared_; }
  static constexpr std::size_t kSharedBytes = 8 * kGranuleSize;
  static constexpr std::size_t kSharedHalf = kSharedBytes / 2;

  Expected<Bytes, Status> seal(EnclaveId eid, std::uint16_t policy,
                               std::span<const std::uint8_t> payload);
  Expected<Bytes, Status> unseal(EnclaveId eid, std::span<const std::uint8_t> blob);
  Expected<TargetInfo, Status> target_info(EnclaveId eid);
  Expected<Report, Status> report(EnclaveId eid, const TargetInfo& target, const ReportData& data);
  // True when the report's MAC checks out under the enclave's report key.
  Expected<bool, Status> verify(EnclaveId eid, const Report& r);
  AttestResult attest(EnclaveId a, EnclaveId b);

  std::uint64_t step_budget = 200'000'000;

 private:
  void load_entry_regs(VCpu& cpu, Leaf leaf, VirtAddr tcs_va);
  EcallResult fault_exit(EnclaveId eid, VCpu& cpu, EcallResult res);
  // Enters the thread's exception handler after a fault AEX. True when the
  // enclave took the fault and the thread can be resumed.
  bool handle_exception(unsigned vcpu, VirtAddr tcs_va, EcallResult& res);

  Machine& m_;
  Driver driver_;
  SwapManager swap_;
  std::map<EnclaveId, EnclaveHandle> handles_;
  std::map<std::uint64_t, OcallHandler> ocalls_;
  std::uint64_t ocall_denials_ = 0;
  VirtAddr stub_ = 0;
  VirtAddr shared_ = 0;
};

}  // namespace ccx::host
