#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ccx/address_space.hpp"
#include "ccx/config.hpp"
#include "ccx/cost_model.hpp"
#include "ccx/crypto.hpp"
#include "ccx/enclave.hpp"
#include "ccx/isa.hpp"
#include "ccx/memory.hpp"
#include "ccx/microprograms.hpp"
#include "ccx/trace.hpp"

namespace ccx {

enum class CpuMode : std::uint8_t { kHost, kEnclave };
enum class RunState : std::uint8_t { kRunnable, kHalted, kFaulted };

// Register values left behind by an asynchronous exit.
inline constexpr std::uint64_t kScrubPattern = 0x5C5C5C5C5C5C5C5Cull;

// Delivery path recorded for every asynchronous exit. There is no EL2 hop.
inline constexpr std::string_view kAexPath = "trampoline>el3>host";

// What the host kernel learns about the last exit or fault on a vCPU.
struct ExitReport {
  ExitKind kind = ExitKind::kNone;
  VirtAddr va = 0;  // faulting address for kFault
  std::optional<MemFault> fault;
  bool crashed = false;
};

struct IrqSchedule {
  bool every_step = false;
  // Fire after the enclave has retired this many further instructions.
  std::set<std::uint64_t> at;
};

struct VCpu {
  unsigned id = 0;
  RegisterFile regs;
  SecurityState security = SecurityState::kNormal;
  GptSelector gpt;
  CpuMode mode = CpuMode::kHost;
  EnclaveId eid{0};
  GranuleNum tcs = 0;
  VirtAddr tcs_va = 0;
  VirtAddr aep = 0;
  // Host stack and thread pointer, put back on every exit.
  std::uint64_t host_sp = 0;
  std::uint64_t host_tpidr = 0;
  bool pending_irq = false;
  RunState state = RunState::kRunnable;

  std::uint64_t entry_epoch = 0;
  std::uint64_t enclave_steps = 0;  // retired in enclave mode, lifetime
  IrqSchedule irq;
  ExitReport last_exit;
  std::uint64_t aex_count = 0;

  // Enclave mode iff the enclave table is active and the core is in Realm.
  bool coherent() const noexcept;
};

// Software-visible outcome of one interpreter step.
enum class StepEvent : std::uint8_t {
  kNone,
  kEnter,     // EENTER / ERESUME into an enclave
  kExit,      // EEXIT back to the host
  kAex,       // asynchronous exit (interrupt, fault or abort)
  kHalt,
  kHostFault, // host program fault; the vCPU stops
};

std::string_view to_string(StepEvent e) noexcept;

class Machine;

// Environment handed to a trusted-runtime helper (TCALL). Helpers run with
// the privileges of the calling enclave.
class TcallContext {
 public:
  TcallContext(Machine& m, VCpu& cpu, const ExecutionToken& tok) : m_(m), cpu_(cpu), tok_(tok) {}

  VCpu& cpu() noexcept { return cpu_; }
  EnclaveId eid() const noexcept { return cpu_.eid; }
  const Secs& secs() const;
  std::uint64_t tls() const noexcept { return cpu_.regs.tpidr; }
  const CryptoEngine& crypto() const noexcept;

  Expected<Bytes, MemFault> read(VirtAddr va, std::size_t len);
  Expected<std::monostate, MemFault> write(VirtAddr va, std::span<const std::uint8_t> data);
  // Issue an in-enclave ENCLU leaf as the gadget would.
  LeafResult enclu(Leaf leaf, std::uint64_t a1 = 0, std::uint64_t a2 = 0, std::uint64_t a3 = 0);
  Tcs tcs() const;
  Expected<SsaFrame, MemFault> ssa_frame(std::uint32_t index) const;
  VirtAddr ssa_address(std::uint32_t index) const;

 private:
  Machine& m_;
  VCpu& cpu_;
  const ExecutionToken& tok_;
};

struct TcallOutcome {
  enum class Kind : std::uint8_t { kDone, kJumped, kFault, kAbort } kind = Kind::kDone;
  std::optional<MemFault> fault;

  static TcallOutcome done() { return {}; }
  // The helper set pc itself.
  static TcallOutcome jumped() { return {Kind::kJumped, {}}; }
  static TcallOutcome faulted(const MemFault& f) { return {Kind::kFault, f}; }
  static TcallOutcome abort() { return {Kind::kAbort, {}}; }
};

using TcallHandler = std::function<TcallOutcome(TcallContext&)>;

// The whole simulated platform: memory, monitor, vCPUs and the trace.
class Machine {
 public:
  explicit Machine(const Config& cfg);
  Machine(const Machine&) = delete;
  Machine& operator=(const Machine&) = delete;

  const Config& config() const noexcept { return cfg_; }
  MachineMemory& memory() noexcept { return mem_; }
  const MachineMemory& memory() const noexcept { return mem_; }
  const CryptoEngine& crypto() const noexcept { return crypto_; }
  EnclaveRegistry& enclaves() noexcept { return enclaves_; }
  const EnclaveRegistry& enclaves() const noexcept { return enclaves_; }
  AddressSpace& address_space() noexcept { return as_; }
  const AddressSpace& address_space() const noexcept { return as_; }
  CostLedger& costs() noexcept { return costs_; }
  const CostLedger& costs() const noexcept { return costs_; }
  Trace& trace() noexcept { return trace_; }
  const Trace& trace() const noexcept { return trace_; }
  Microprograms& microprograms() noexcept { return mp_; }

  std::size_t vcpu_count() const noexcept { return cpus_.size(); }
  VCpu& vcpu(unsigned id) { return cpus_.at(id); }
  const VCpu& vcpu(unsigned id) const { return cpus_.at(id); }
  std::uint64_t steps() const noexcept { return steps_; }

  // --- privileged host (kernel driver) entry points -----------------------
  // ENCLS through the SMC path.
  LeafResult encls(Leaf leaf, std::uint64_t a1 = 0, std::uint64_t a2 = 0, std::uint64_t a3 = 0);
  LeafResult encls_raw(std::uint64_t leaf_number, std::uint64_t a1, std::uint64_t a2,
                       std::uint64_t a3);
  std::array<std::uint32_t, 4> cpuid(std::uint64_t leaf, std::uint64_t subleaf) const;

  // Host loads and stores through the system GPT. Denials are recorded.
  Expected<std::uint64_t, MemFault> host_read64(VirtAddr va);
  Expected<std::monostate, MemFault> host_write64(VirtAddr va, std::uint64_t v);
  Expected<Bytes, MemFault> host_read(VirtAddr va, std::size_t len);
  Expected<std::monostate, MemFault> host_write(VirtAddr va, std::span<const std::uint8_t> data);
  // Normal-world physical access used by the driver for staging buffers.
  Status phys_write(PhysAddr pa, std::span<const std::uint8_t> data);
  Expected<Bytes, Status> phys_read(PhysAddr pa, std::size_t len);

  // --- vCPU execution -----------------------------------------------------
  // Executes one instruction on a vCPU. Interrupts due at the step boundary
  // are delivered before returning.
  StepEvent step(unsigned vcpu);
  // Steps until the vCPU is back in host mode, stops, or the budget runs out.
  StepEvent run_enclave(unsigned vcpu, std::uint64_t budget);
  // Seeded random interleaving over several vCPUs until each has stopped
  // (halted / faulted) or the budget is spent. Returns steps executed.
  std::uint64_t run_interleaved(const std::vector<unsigned>& ids, std::uint64_t budget,
                                const std::function<bool(unsigned)>& runnable = {});

  void inject_interrupt(unsigned vcpu);
  bool enclave_crashed(EnclaveId eid) const { return crashed_.count(eid) != 0; }
  void clear_crashed(EnclaveId eid) { crashed_.erase(eid); }
  // The runtime gives up on an enclave after an unrecoverable fault.
  void mark_crashed(EnclaveId eid) { crashed_.insert(eid); }

  void set_tcall(std::uint32_t id, TcallHandler h) { tcalls_[id] = std::move(h); }
  // Audits the memory invariants after every leaf; violations are counted.
  void set_audit_each_leaf(bool on) noexcept { audit_each_leaf_ = on; }
  std::uint64_t audits_run() const noexcept { return audits_run_; }
  const std::vector<std::string>& audit_failures() const noexcept { return audit_failures_; }

  std::mt19937_64& scheduler() noexcept { return sched_; }

 private:
  friend class TcallContext;

  StepEvent step_locked(const ExecutionToken& tok, VCpu& cpu);
  StepEvent exec(const ExecutionToken& tok, VCpu& cpu, const Insn& in);
  StepEvent gadget(const ExecutionToken& tok, VCpu& cpu);
  StepEvent enclu_host(const ExecutionToken& tok, VCpu& cpu, Leaf leaf);
  StepEvent enclu_enclave(const ExecutionToken& tok, VCpu& cpu, Leaf leaf);
  LeafResult enclu_core(const ExecutionToken& tok, VCpu& cpu, Leaf leaf, std::uint64_t a1,
                        std::uint64_t a2, std::uint64_t a3);
  StepEvent enter(const ExecutionToken& tok, VCpu& cpu, Leaf leaf);
  StepEvent eexit(const ExecutionToken& tok, VCpu& cpu);
  StepEvent aex(const ExecutionToken& tok, VCpu& cpu, ExitKind kind, VirtAddr detail,
                std::optional<MemFault> fault);
  void leave_enclave(const ExecutionToken& tok, VCpu& cpu);
  StepEvent host_fault(VCpu& cpu, const MemFault& f);

  Expected<std::uint64_t, MemFault> load64(const VCpu& cpu, VirtAddr va, AccessKind k) const;
  Expected<std::monostate, MemFault> store64(const ExecutionToken& tok, VCpu& cpu, VirtAddr va,
                                             std::uint64_t v);
  std::uint64_t& reg(VCpu& cpu, std::uint8_t r);
  void after_leaf(Leaf leaf, const LeafResult& r, int vcpu);
  void record(int vcpu, std::string kind, std::string payload);

  Config cfg_;
  MachineMemory mem_;
  CryptoEngine crypto_;
  EnclaveRegistry enclaves_;
  AddressSpace as_;
  CostLedger costs_;
  Trace trace_;
  Microprograms mp_;
  std::vector<VCpu> cpus_;
  std::mutex token_;
  std::uint64_t steps_ = 0;
  std::mt19937_64 sched_;
  std::set<EnclaveId> crashed_;
  std::map<std::uint32_t, TcallHandler> tcalls_;
  bool audit_each_leaf_ = false;
  std::uint64_t audits_run_ = 0;
  std::vector<std::string> audit_failures_;
};

}  // namespace ccx
