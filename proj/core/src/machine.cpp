#include "ccx/machine.hpp"

#include <algorithm>
#include <bit>

#include "ccx/bytes.hpp"

namespace ccx {
namespace {

constexpr AccessContext kHostView{SecurityState::kNormal, GptSelector{}};

std::string hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s = "0x";
  bool started = false;
  for (int shift = 60; shift >= 0; shift -= 4) {
    const auto d = (v >> shift) & 0xF;
    if (d != 0 || started || shift == 0) {
      s.push_back(kDigits[d]);
      started = true;
    }
  }
  return s;
}

std::string_view exit_name(ExitKind k) {
  switch (k) {
    case ExitKind::kNone: return "none";
    case ExitKind::kInterrupt: return "interrupt";
    case ExitKind::kFault: return "fault";
    case ExitKind::kAbort: return "abort";
  }
  return "?";
}

MemFault fault_from_leaf(const LeafResult& r) {
  MemFault f;
  f.kind = r.status == Status::kGpf ? MemFault::Kind::kGpf : MemFault::Kind::kEpcm;
  f.va = *r.fault;
  return f;
}

}  // namespace

bool VCpu::coherent() const noexcept {
  if (mode == CpuMode::kEnclave) {
    return security == SecurityState::kRealm && gpt == GptSelector::of(eid);
  }
  return security == SecurityState::kNormal && gpt.is_system();
}

std::string_view to_string(StepEvent e) noexcept {
  switch (e) {
    case StepEvent::kNone: return "none";
    case StepEvent::kEnter: return "enter";
    case StepEvent::kExit: return "exit";
    case StepEvent::kAex: return "aex";
    case StepEvent::kHalt: return "halt";
    case StepEvent::kHostFault: return "host_fault";
  }
  return "?";
}

// --- TcallContext ------------------------------------------------------------

const Secs& TcallContext::secs() const {
  const Secs* s = m_.enclaves_.find(cpu_.eid);
  if (!s) throw ModelError("helper call without an enclave");
  return *s;
}

const CryptoEngine& TcallContext::crypto() const noexcept { return m_.crypto_; }

Expected<Bytes, MemFault> TcallContext::read(VirtAddr va, std::size_t len) {
  return m_.mp_.enclave_read(cpu_.eid, va, len);
}

Expected<std::monostate, MemFault> TcallContext::write(VirtAddr va,
                                                       std::span<const std::uint8_t> data) {
  return m_.mp_.enclave_write(tok_, cpu_.eid, va, data);
}

LeafResult TcallContext::enclu(Leaf leaf, std::uint64_t a1, std::uint64_t a2, std::uint64_t a3) {
  if (leaf_info(leaf).cls != LeafClass::kEnclu || leaf == Leaf::kEenter ||
      leaf == Leaf::kEresume || leaf == Leaf::kEexit) {
    return LeafResult::error(Status::kInvalidMode);
  }
  return m_.enclu_core(tok_, cpu_, leaf, a1, a2, a3);
}

Tcs TcallContext::tcs() const { return m_.mp_.load_tcs(cpu_.tcs); }

VirtAddr TcallContext::ssa_address(std::uint32_t index) const {
  const Secs& s = secs();
  return s.base + tcs().ossa + std::uint64_t{index} * s.ssa_frame_size * kGranuleSize;
}

Expected<SsaFrame, MemFault> TcallContext::ssa_frame(std::uint32_t index) const {
  auto raw = m_.mp_.enclave_read(cpu_.eid, ssa_address(index), SsaFrame::kBytes);
  if (!raw) return Unexpected(raw.error());
  return SsaFrame::load(*raw);
}

// --- Machine -----------------------------------------------------------------

Machine::Machine(const Config& cfg)
    : cfg_(cfg),
      mem_(cfg.granule_count, cfg.memory_mode()),
      crypto_(cfg.crypto_seed, cfg.mac),
      costs_(cfg.costs),
      mp_(mem_, crypto_, enclaves_, as_, costs_),
      sched_(cfg.scheduler_seed) {
  cpus_.resize(cfg.vcpus);
  for (unsigned i = 0; i < cfg.vcpus; ++i) cpus_[i].id = i;
}

void Machine::record(int vcpu, std::string kind, std::string payload) {
  trace_.record(steps_, vcpu, std::move(kind), std::move(payload));
}

void Machine::after_leaf(Leaf leaf, const LeafResult& r, int vcpu) {
  std::string payload(to_string(leaf));
  payload += ' ';
  payload += to_string(r.status);
  record(vcpu, leaf_info(leaf).cls == LeafClass::kEncls ? "encls" : "enclu", std::move(payload));
  if (audit_each_leaf_) {
    ++audits_run_;
    if (auto v = mem_.audit()) audit_failures_.push_back(std::string(to_string(leaf)) + ": " + *v);
  }
}

LeafResult Machine::encls(Leaf leaf, std::uint64_t a1, std::uint64_t a2, std::uint64_t a3) {
  if (leaf_info(leaf).cls != LeafClass::kEncls) return LeafResult::error(Status::kInvalidLeaf);
  return encls_raw(leaf_number(leaf), a1, a2, a3);
}

LeafResult Machine::encls_raw(std::uint64_t number, std::uint64_t a1, std::uint64_t a2,
                              std::uint64_t a3) {
  ExecutionToken tok(token_);
  LeafResult r = mp_.encls(tok, number, a1, a2, a3);
  if (auto leaf = decode_leaf(LeafClass::kEncls, number)) {
    after_leaf(*leaf, r, -1);
  } else {
    record(-1, "encls", "leaf=" + hex(number) + " " + std::string(to_string(r.status)));
  }
  return r;
}

std::array<std::uint32_t, 4> Machine::cpuid(std::uint64_t leaf, std::uint64_t subleaf) const {
  std::array<std::uint32_t, 4> w{};
  if (leaf != 0x12) return w;
  if (subleaf == 0) {
    // SGX1, SGX2, AEX-Notify; w3 carries log2 of the largest enclave.
    w[0] = 0x1 | 0x2 | 0x4;
    const std::uint64_t bytes = cfg_.granule_count * kGranuleSize;
    w[3] = static_cast<std::uint32_t>(std::bit_width(bytes) - 1) << 8;
  } else if (subleaf == 2) {
    std::uint64_t base = 0, size = cfg_.granule_count * kGranuleSize;
    if (const auto* fixed = std::get_if<SgxFixed>(&mem_.mode())) {
      base = fixed->epc_base * kGranuleSize;
      size = fixed->epc_size * kGranuleSize;
    }
    w[0] = static_cast<std::uint32_t>(base);
    w[1] = static_cast<std::uint32_t>(base >> 32);
    w[2] = static_cast<std::uint32_t>(size);
    w[3] = static_cast<std::uint32_t>(size >> 32);
  }
  return w;
}

// --- host memory -------------------------------------------------------------

Expected<Bytes, MemFault> Machine::host_read(VirtAddr va, std::size_t len) {
  ExecutionToken tok(token_);
  Bytes out;
  while (len > 0) {
    auto g = mp_.resolve_host(va);
    if (!g) {
      record(-1, g.error().kind == MemFault::Kind::kGpf ? "gpf" : "fault", "host read " + hex(va));
      return Unexpected(g.error());
    }
    const std::size_t n = std::min(len, kGranuleSize - page_offset(va));
    auto r = mem_.read_granule(kHostView, *g, page_offset(va), n);
    if (!r) throw ModelError("host read denied after translation");
    out.insert(out.end(), r->begin(), r->end());
    va += n;
    len -= n;
  }
  return out;
}

Expected<std::monostate, MemFault> Machine::host_write(VirtAddr va,
                                                       std::span<const std::uint8_t> data) {
  ExecutionToken tok(token_);
  // Translate everything first so a fault writes nothing.
  std::vector<GranuleNum> gs;
  for (VirtAddr cur = va; cur < va + data.size(); cur = page_floor(cur) + kGranuleSize) {
    auto g = mp_.resolve_host(cur);
    if (!g) {
      record(-1, g.error().kind == MemFault::Kind::kGpf ? "gpf" : "fault", "host write " + hex(cur));
      return Unexpected(g.error());
    }
    gs.push_back(*g);
  }
  std::size_t done = 0;
  VirtAddr cur = va;
  for (GranuleNum g : gs) {
    const std::size_t n = std::min(data.size() - done, kGranuleSize - page_offset(cur));
    auto w = mem_.write_granule(tok, kHostView, g, page_offset(cur), data.subspan(done, n));
    if (!w) throw ModelError("host write denied after translation");
    done += n;
    cur += n;
  }
  return std::monostate{};
}

Expected<std::uint64_t, MemFault> Machine::host_read64(VirtAddr va) {
  auto b = host_read(va, 8);
  if (!b) return Unexpected(b.error());
  return load_u64(*b, 0);
}

Expected<std::monostate, MemFault> Machine::host_write64(VirtAddr va, std::uint64_t v) {
  std::array<std::uint8_t, 8> b{};
  store_u64(b, 0, v);
  return host_write(va, b);
}

Status Machine::phys_write(PhysAddr pa, std::span<const std::uint8_t> data) {
  ExecutionToken tok(token_);
  if (!mem_.in_range(granule_of(pa)) || page_offset(pa) + data.size() > kGranuleSize) {
    return Status::kInvalidParameter;
  }
  auto w = mem_.write_granule(tok, kHostView, granule_of(pa), page_offset(pa), data);
  return w ? Status::kSuccess : Status::kGpf;
}

Expected<Bytes, Status> Machine::phys_read(PhysAddr pa, std::size_t len) {
  ExecutionToken tok(token_);
  if (!mem_.in_range(granule_of(pa)) || page_offset(pa) + len > kGranuleSize) {
    return Unexpected(Status::kInvalidParameter);
  }
  auto r = mem_.read_granule(kHostView, granule_of(pa), page_offset(pa), len);
  if (!r) return Unexpected(Status::kGpf);
  return std::move(*r);
}

// --- vCPU memory -------------------------------------------------------------

std::uint64_t& Machine::reg(VCpu& cpu, std::uint8_t r) {
  return r == kRegSp ? cpu.regs.sp : cpu.regs.x[r];
}

Expected<std::uint64_t, MemFault> Machine::load64(const VCpu& cpu, VirtAddr va,
                                                  AccessKind k) const {
  if (cpu.mode == CpuMode::kEnclave) {
    auto b = mp_.enclave_read(cpu.eid, va, 8, k);
    if (!b) return Unexpected(b.error());
    return load_u64(*b, 0);
  }
  std::array<std::uint8_t, 8> out{};
  for (std::size_t i = 0; i < 8;) {
    auto g = mp_.resolve_host(va + i);
    if (!g) return Unexpected(g.error());
    const std::size_t n = std::min<std::size_t>(8 - i, kGranuleSize - page_offset(va + i));
    auto src = mem_.raw(*g).subspan(page_offset(va + i), n);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(i));
    i += n;
  }
  return load_u64(out, 0);
}

Expected<std::monostate, MemFault> Machine::store64(const ExecutionToken& tok, VCpu& cpu,
                                                    VirtAddr va, std::uint64_t v) {
  std::array<std::uint8_t, 8> b{};
  store_u64(b, 0, v);
  if (cpu.mode == CpuMode::kEnclave) return mp_.enclave_write(tok, cpu.eid, va, b);
  auto g0 = mp_.resolve_host(va);
  if (!g0) return Unexpected(g0.error());
  auto g1 = mp_.resolve_host(va + 7);
  if (!g1) return Unexpected(g1.error());
  const std::size_t n0 = std::min<std::size_t>(8, kGranuleSize - page_offset(va));
  auto d0 = mem_.raw_mut(tok, *g0);
  std::copy_n(b.begin(), n0, d0.begin() + static_cast<std::ptrdiff_t>(page_offset(va)));
  if (n0 < 8) {
    auto d1 = mem_.raw_mut(tok, *g1);
    std::copy(b.begin() + static_cast<std::ptrdiff_t>(n0), b.end(), d1.begin());
  }
  return std::monostate{};
}

// --- stepping ----------------------------------------------------------------

StepEvent Machine::step(unsigned id) {
  VCpu& cpu = cpus_.at(id);
  ExecutionToken tok(token_);
  return step_locked(tok, cpu);
}

StepEvent Machine::step_locked(const ExecutionToken& tok, VCpu& cpu) {
  if (cpu.state == RunState::kHalted) return StepEvent::kHalt;
  if (cpu.state == RunState::kFaulted) return StepEvent::kHostFault;
  ++steps_;

  if (cpu.mode == CpuMode::kHost && cpu.pending_irq) {
    // Taken by the host kernel; nothing architectural happens.
    cpu.pending_irq = false;
    record(static_cast<int>(cpu.id), "irq", "host");
  }

  auto word = cpu.mode == CpuMode::kEnclave
                  ? mp_.enclave_read(cpu.eid, cpu.regs.pc, kInsnBytes, AccessKind::kExecute)
                  : [&]() -> Expected<Bytes, MemFault> {
                      auto g = mp_.resolve_host(cpu.regs.pc);
                      if (!g) return Unexpected(g.error());
                      if (page_offset(cpu.regs.pc) + kInsnBytes > kGranuleSize) {
                        return Unexpected(MemFault{MemFault::Kind::kUnmapped, cpu.regs.pc, {}});
                      }
                      auto s = mem_.raw(*g).subspan(page_offset(cpu.regs.pc), kInsnBytes);
                      return Bytes(s.begin(), s.end());
                    }();
  if (!word) {
    if (cpu.mode == CpuMode::kEnclave) {
      return aex(tok, cpu, ExitKind::kFault, word.error().va, word.error());
    }
    return host_fault(cpu, word.error());
  }
  auto insn = Insn::decode(*word);
  if (!insn) {
    if (cpu.mode == CpuMode::kEnclave) return aex(tok, cpu, ExitKind::kAbort, cpu.regs.pc, {});
    cpu.state = RunState::kFaulted;
    cpu.last_exit = ExitReport{ExitKind::kAbort, cpu.regs.pc, {}, false};
    record(static_cast<int>(cpu.id), "undef", hex(cpu.regs.pc));
    return StepEvent::kHostFault;
  }

  const StepEvent ev = exec(tok, cpu, *insn);
  if (ev == StepEvent::kNone && cpu.mode == CpuMode::kEnclave) {
    ++cpu.enclave_steps;
    bool fire = cpu.pending_irq || cpu.irq.every_step;
    if (auto it = cpu.irq.at.find(cpu.enclave_steps); it != cpu.irq.at.end()) {
      cpu.irq.at.erase(it);
      fire = true;
    }
    if (fire) {
      cpu.pending_irq = false;
      return aex(tok, cpu, ExitKind::kInterrupt, 0, {});
    }
  }
  return ev;
}

StepEvent Machine::exec(const ExecutionToken& tok, VCpu& cpu, const Insn& in) {
  auto& r = cpu.regs;
  const std::uint64_t pc = r.pc;
  std::uint64_t next = pc + kInsnBytes;
  const auto imm = static_cast<std::int64_t>(in.imm);
  const auto rel = [&](std::int64_t off) { return pc + static_cast<std::uint64_t>(off); };

  auto memory_fault = [&](const MemFault& f) {
    if (cpu.mode == CpuMode::kEnclave) {
      if (f.kind == MemFault::Kind::kGpf) record(static_cast<int>(cpu.id), "gpf", hex(f.va));
      return aex(tok, cpu, ExitKind::kFault, f.va, f);
    }
    return host_fault(cpu, f);
  };

  switch (in.op) {
    case Op::kHalt:
      if (cpu.mode == CpuMode::kEnclave) return aex(tok, cpu, ExitKind::kAbort, pc, {});
      cpu.state = RunState::kHalted;
      record(static_cast<int>(cpu.id), "halt", hex(pc));
      return StepEvent::kHalt;
    case Op::kNop: break;
    case Op::kMovi: reg(cpu, in.rd) = static_cast<std::uint64_t>(imm); break;
    case Op::kMovw: reg(cpu, in.rd) = static_cast<std::uint32_t>(in.imm); break;
    case Op::kMov: reg(cpu, in.rd) = reg(cpu, in.rn); break;
    case Op::kAdd: reg(cpu, in.rd) = reg(cpu, in.rn) + reg(cpu, in.rm); break;
    case Op::kSub: reg(cpu, in.rd) = reg(cpu, in.rn) - reg(cpu, in.rm); break;
    case Op::kMul: reg(cpu, in.rd) = reg(cpu, in.rn) * reg(cpu, in.rm); break;
    case Op::kEor: reg(cpu, in.rd) = reg(cpu, in.rn) ^ reg(cpu, in.rm); break;
    case Op::kOrr: reg(cpu, in.rd) = reg(cpu, in.rn) | reg(cpu, in.rm); break;
    case Op::kAnd: reg(cpu, in.rd) = reg(cpu, in.rn) & reg(cpu, in.rm); break;
    case Op::kAddi: reg(cpu, in.rd) = reg(cpu, in.rn) + static_cast<std::uint64_t>(imm); break;
    case Op::kLsli: reg(cpu, in.rd) = reg(cpu, in.rn) << (in.imm & 63); break;
    case Op::kLsri: reg(cpu, in.rd) = reg(cpu, in.rn) >> (in.imm & 63); break;
    case Op::kLdr: {
      auto v = load64(cpu, reg(cpu, in.rn) + static_cast<std::uint64_t>(imm), AccessKind::kRead);
      if (!v) return memory_fault(v.error());
      reg(cpu, in.rd) = *v;
      break;
    }
    case Op::kStr: {
      auto w = store64(tok, cpu, reg(cpu, in.rn) + static_cast<std::uint64_t>(imm), reg(cpu, in.rd));
      if (!w) return memory_fault(w.error());
      break;
    }
    case Op::kCbz:
      if (reg(cpu, in.rn) == 0) next = rel(imm);
      break;
    case Op::kCbnz:
      if (reg(cpu, in.rn) != 0) next = rel(imm);
      break;
    case Op::kB: next = rel(imm); break;
    case Op::kBl:
      r.x[kRegLr] = next;
      next = rel(imm);
      break;
    case Op::kBr: next = reg(cpu, in.rn); break;
    case Op::kBlr: {
      const std::uint64_t target = reg(cpu, in.rn);
      r.x[kRegLr] = next;
      next = target;
      break;
    }
    case Op::kRet: next = r.x[kRegLr]; break;
    case Op::kBeq:
      if (reg(cpu, in.rn) == reg(cpu, in.rm)) next = rel(imm);
      break;
    case Op::kBne:
      if (reg(cpu, in.rn) != reg(cpu, in.rm)) next = rel(imm);
      break;
    case Op::kBltu:
      if (reg(cpu, in.rn) < reg(cpu, in.rm)) next = rel(imm);
      break;
    case Op::kAdr: reg(cpu, in.rd) = rel(imm); break;
    case Op::kMrsTpidr: reg(cpu, in.rd) = r.tpidr; break;
    case Op::kGadget: return gadget(tok, cpu);
    case Op::kTcall: {
      if (cpu.mode != CpuMode::kEnclave) {
        cpu.state = RunState::kFaulted;
        cpu.last_exit = ExitReport{ExitKind::kAbort, pc, {}, false};
        record(static_cast<int>(cpu.id), "undef", hex(pc));
        return StepEvent::kHostFault;
      }
      auto it = tcalls_.find(static_cast<std::uint32_t>(in.imm));
      if (it == tcalls_.end()) return aex(tok, cpu, ExitKind::kAbort, pc, {});
      TcallContext ctx(*this, cpu, tok);
      const TcallOutcome out = it->second(ctx);
      switch (out.kind) {
        case TcallOutcome::Kind::kDone: break;
        case TcallOutcome::Kind::kJumped: return StepEvent::kNone;
        case TcallOutcome::Kind::kFault: return memory_fault(*out.fault);
        case TcallOutcome::Kind::kAbort: return aex(tok, cpu, ExitKind::kAbort, pc, {});
      }
      break;
    }
  }
  r.pc = next;
  return StepEvent::kNone;
}

StepEvent Machine::gadget(const ExecutionToken& tok, VCpu& cpu) {
  auto& r = cpu.regs;
  const std::uint64_t smc = r.x[0];
  const int id = static_cast<int>(cpu.id);
  auto finish = [&](Status s, std::uint64_t value = 0) {
    r.x[0] = static_cast<std::uint64_t>(s);
    r.x[1] = value;
    r.pc += kInsnBytes;
    return StepEvent::kNone;
  };

  if (smc == kSmcEnclu) {
    auto leaf = decode_leaf(LeafClass::kEnclu, r.x[1]);
    if (!leaf) {
      record(id, "enclu", "leaf=" + hex(r.x[1]) + " INVALID_LEAF");
      return finish(Status::kInvalidLeaf);
    }
    const bool entry = *leaf == Leaf::kEenter || *leaf == Leaf::kEresume;
    if (cpu.mode == CpuMode::kHost) {
      if (entry) return enter(tok, cpu, *leaf);
      record(id, "enclu", std::string(to_string(*leaf)) + " INVALID_MODE");
      return finish(Status::kInvalidMode);
    }
    if (entry) {
      record(id, "enclu", std::string(to_string(*leaf)) + " INVALID_MODE");
      return finish(Status::kInvalidMode);
    }
    if (*leaf == Leaf::kEexit) return eexit(tok, cpu);
    LeafResult res = enclu_core(tok, cpu, *leaf, r.x[2], r.x[3], r.x[4]);
    if (res.fault) {
      const MemFault f = fault_from_leaf(res);
      if (f.kind == MemFault::Kind::kGpf) record(id, "gpf", hex(f.va));
      return aex(tok, cpu, ExitKind::kFault, f.va, f);
    }
    return finish(res.status, res.value);
  }
  if (smc == kSmcEncls) {
    // ENCLS is a privileged SMC; user code never reaches the monitor with it.
    record(id, "encls", "user INVALID_MODE");
    return finish(Status::kInvalidMode);
  }
  if (smc == kSmcCpuid) {
    if (cpu.mode == CpuMode::kEnclave) {
      record(id, "cpuid", "enclave INVALID_MODE");
      return finish(Status::kInvalidMode);
    }
    const auto w = cpuid(r.x[1], r.x[2]);
    record(id, "cpuid", "leaf=" + hex(r.x[1]) + " subleaf=" + hex(r.x[2]));
    for (int i = 0; i < 4; ++i) r.x[1 + i] = w[static_cast<std::size_t>(i)];
    r.x[0] = 0;
    r.pc += kInsnBytes;
    return StepEvent::kNone;
  }
  record(id, "smc", "service=" + hex(smc) + " INVALID_SERVICE");
  return finish(Status::kInvalidService);
}

LeafResult Machine::enclu_core(const ExecutionToken& tok, VCpu& cpu, Leaf leaf, std::uint64_t a1,
                               std::uint64_t a2, std::uint64_t a3) {
  LeafResult r = mp_.enclu(tok, EnclaveCaller{cpu.eid, cpu.tcs}, leaf, a1, a2, a3);
  after_leaf(leaf, r, static_cast<int>(cpu.id));
  return r;
}

StepEvent Machine::enter(const ExecutionToken& tok, VCpu& cpu, Leaf leaf) {
  costs_.begin(leaf);
  auto& r = cpu.regs;
  const int id = static_cast<int>(cpu.id);
  const VirtAddr tcs_va = r.x[2];
  const VirtAddr aep = r.x[3];
  auto fail_with = [&](Status s) {
    after_leaf(leaf, LeafResult::error(s), id);
    r.x[0] = static_cast<std::uint64_t>(s);
    r.pc += kInsnBytes;
    return StepEvent::kNone;
  };
  auto page_fault = [&](VirtAddr va) {
    cpu.last_exit = ExitReport{ExitKind::kFault, va, MemFault{MemFault::Kind::kEpcm, va, {}}, false};
    return fail_with(Status::kPageFault);
  };

  auto g = as_.lookup(tcs_va);
  if (!g || !mem_.in_range(*g) || page_offset(tcs_va) != 0) {
    return fail_with(Status::kInvalidParameter);
  }
  const EpcmEntry& e = mem_.epcm_lookup(*g);
  if (!e.valid) return page_fault(tcs_va);
  if (e.type != PageType::kTcs || e.vaddr != tcs_va || e.pending || e.modified) {
    return fail_with(Status::kInvalidParameter);
  }
  if (e.blocked) return page_fault(tcs_va);
  Secs* secs = enclaves_.find(e.owner);
  if (!secs) throw ModelError("TCS owned by a missing enclave");
  if (crashed_.count(secs->eid)) return fail_with(Status::kEnclaveCrashed);
  if (!secs->initialized()) return fail_with(Status::kNotInitialized);

  Tcs tcs = mp_.load_tcs(*g);
  if (tcs.busy != 0) return fail_with(Status::kTcsBusy);
  const bool notify = leaf == Leaf::kEresume && (tcs.flags & kTcsAexNotify) != 0 &&
                      (secs->attributes & kAttrAexNotify) != 0;
  const bool fresh = leaf == Leaf::kEenter || notify;
  if (leaf == Leaf::kEresume && tcs.cssa == 0) return fail_with(Status::kNoSavedState);
  if (fresh && tcs.cssa >= tcs.nssa) return fail_with(Status::kCssaFull);

  const std::uint32_t frame = fresh ? tcs.cssa : tcs.cssa - 1;
  const VirtAddr ssa_va =
      secs->base + tcs.ossa + std::uint64_t{frame} * secs->ssa_frame_size * kGranuleSize;
  if (auto s = mp_.resolve_enclave(secs->eid, ssa_va, AccessKind::kWrite); !s) {
    return page_fault(ssa_va);
  }

  const std::uint64_t host_sp = r.sp;
  const std::uint64_t host_tpidr = r.tpidr;
  const std::uint64_t return_pc = r.pc + kInsnBytes;
  if (fresh) {
    // Host registers flow in unchanged; only x0/x1, pc and tpidr are set.
    r.x[0] = tcs.cssa;
    r.x[1] = return_pc;
    r.pc = secs->base + tcs.oentry;
    r.tpidr = secs->base + tcs.tls_base;
  } else {
    auto raw = mp_.enclave_read(secs->eid, ssa_va, SsaFrame::kBytes);
    if (!raw) return page_fault(ssa_va);
    r = SsaFrame::load(*raw).regs;
    --tcs.cssa;
  }
  tcs.busy = 1;
  mp_.store_tcs(tok, *g, tcs);
  costs_.charge_context_copy(leaf);

  cpu.host_sp = host_sp;
  cpu.host_tpidr = host_tpidr;
  cpu.mode = CpuMode::kEnclave;
  cpu.security = SecurityState::kRealm;
  cpu.gpt = GptSelector::of(secs->eid);
  cpu.eid = secs->eid;
  cpu.tcs = *g;
  cpu.tcs_va = tcs_va;
  cpu.aep = aep;
  cpu.entry_epoch = secs->track_epoch;
  ++secs->entered_counts[secs->track_epoch];

  after_leaf(leaf, LeafResult::ok(), id);
  record(id, leaf == Leaf::kEenter ? "eenter" : "eresume",
         "eid=" + std::to_string(to_underlying(secs->eid)) + " cssa=" + std::to_string(tcs.cssa) +
             (notify ? " notify" : ""));
  return StepEvent::kEnter;
}

void Machine::leave_enclave(const ExecutionToken& tok, VCpu& cpu) {
  if (Secs* secs = enclaves_.find(cpu.eid)) {
    auto it = secs->entered_counts.find(cpu.entry_epoch);
    if (it != secs->entered_counts.end() && --it->second == 0) secs->entered_counts.erase(it);
  }
  Tcs tcs = mp_.load_tcs(cpu.tcs);
  tcs.busy = 0;
  mp_.store_tcs(tok, cpu.tcs, tcs);
  cpu.mode = CpuMode::kHost;
  cpu.security = SecurityState::kNormal;
  cpu.gpt = GptSelector::system();
  cpu.regs.sp = cpu.host_sp;
  cpu.regs.tpidr = cpu.host_tpidr;
}

StepEvent Machine::eexit(const ExecutionToken& tok, VCpu& cpu) {
  costs_.begin(Leaf::kEexit);
  costs_.charge_context_copy(Leaf::kEexit);
  const VirtAddr target = cpu.regs.x[2];
  const EnclaveId eid = cpu.eid;
  leave_enclave(tok, cpu);
  cpu.regs.pc = target;
  cpu.last_exit = ExitReport{};
  after_leaf(Leaf::kEexit, LeafResult::ok(), static_cast<int>(cpu.id));
  record(static_cast<int>(cpu.id), "eexit",
         "eid=" + std::to_string(to_underlying(eid)) + " target=" + hex(target));
  cpu.eid = EnclaveId{0};
  cpu.tcs = 0;
  return StepEvent::kExit;
}

StepEvent Machine::aex(const ExecutionToken& tok, VCpu& cpu, ExitKind kind, VirtAddr detail,
                       std::optional<MemFault> fault) {
  const Secs* secs = enclaves_.find(cpu.eid);
  if (!secs) throw ModelError("AEX without an enclave");
  Tcs tcs = mp_.load_tcs(cpu.tcs);
  bool crashed = kind == ExitKind::kAbort;
  if (!crashed) {
    if (tcs.cssa >= tcs.nssa) {
      crashed = true;
    } else {
      SsaFrame frame;
      frame.regs = cpu.regs;
      frame.exit_kind = kind;
      frame.exit_detail = detail;
      std::array<std::uint8_t, SsaFrame::kBytes> bytes{};
      frame.store(bytes);
      const VirtAddr ssa_va =
          secs->base + tcs.ossa + std::uint64_t{tcs.cssa} * secs->ssa_frame_size * kGranuleSize;
      if (mp_.enclave_write(tok, cpu.eid, ssa_va, bytes)) {
        ++tcs.cssa;
        mp_.store_tcs(tok, cpu.tcs, tcs);
      } else {
        crashed = true;
      }
    }
  }
  const EnclaveId eid = cpu.eid;
  if (crashed) crashed_.insert(eid);
  leave_enclave(tok, cpu);

  const std::uint64_t sp = cpu.regs.sp, tp = cpu.regs.tpidr;
  cpu.regs.x.fill(kScrubPattern);
  cpu.regs.x[0] = kSmcEnclu;
  cpu.regs.x[1] = leaf_number(Leaf::kEresume);
  cpu.regs.x[2] = cpu.tcs_va;
  cpu.regs.x[3] = cpu.aep;
  cpu.regs.sp = sp;
  cpu.regs.tpidr = tp;
  cpu.regs.pstate = 0;
  cpu.regs.pc = cpu.aep;
  cpu.last_exit = ExitReport{kind, detail, fault, crashed};
  ++cpu.aex_count;
  record(static_cast<int>(cpu.id), "aex",
         "eid=" + std::to_string(to_underlying(eid)) + " kind=" + std::string(exit_name(kind)) +
             " cssa=" + std::to_string(tcs.cssa) + " path=" + std::string(kAexPath) +
             (kind == ExitKind::kFault ? " addr=" + hex(detail) : "") +
             (crashed ? " crashed" : ""));
  cpu.eid = EnclaveId{0};
  cpu.tcs = 0;
  return StepEvent::kAex;
}

StepEvent Machine::host_fault(VCpu& cpu, const MemFault& f) {
  cpu.state = RunState::kFaulted;
  cpu.last_exit = ExitReport{ExitKind::kFault, f.va, f, false};
  record(static_cast<int>(cpu.id), f.kind == MemFault::Kind::kGpf ? "gpf" : "fault",
         "host " + hex(f.va));
  return StepEvent::kHostFault;
}

StepEvent Machine::run_enclave(unsigned id, std::uint64_t budget) {
  VCpu& cpu = cpus_.at(id);
  for (std::uint64_t i = 0; i < budget; ++i) {
    const StepEvent ev = step(id);
    switch (ev) {
      case StepEvent::kExit:
      case StepEvent::kAex:
      case StepEvent::kHalt:
      case StepEvent::kHostFault:
        return ev;
      case StepEvent::kEnter:
        break;
      case StepEvent::kNone:
        if (cpu.mode == CpuMode::kHost) return ev;
        break;
    }
  }
  return StepEvent::kNone;
}

std::uint64_t Machine::run_interleaved(const std::vector<unsigned>& ids, std::uint64_t budget,
                                       const std::function<bool(unsigned)>& runnable) {
  std::uint64_t n = 0;
  std::vector<unsigned> ready;
  while (n < budget) {
    ready.clear();
    for (unsigned id : ids) {
      if (cpus_.at(id).state == RunState::kRunnable && (!runnable || runnable(id))) {
        ready.push_back(id);
      }
    }
    if (ready.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, ready.size() - 1);
    step(ready[pick(sched_)]);
    ++n;
  }
  return n;
}

void Machine::inject_interrupt(unsigned id) {
  ExecutionToken tok(token_);
  cpus_.at(id).pending_irq = true;
}

}  // namespace ccx
