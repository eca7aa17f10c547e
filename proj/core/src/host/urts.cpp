#include "ccx/host/urts.hpp"

#include "ccx/bytes.hpp"

namespace ccx::host {
namespace {

constexpr VirtAddr kStubEnter = 0x0;
constexpr VirtAddr kStubAep = 0x10;

}  // namespace

Runtime::Runtime(Machine& m) : m_(m), driver_(m), swap_(driver_, m.config().swap_dir) {
  register_trts(m_);

  auto stub_g = driver_.alloc_host();
  if (!stub_g) throw ModelError("no host memory for the entry stub");
  stub_ = driver_.map_host_page(*stub_g);
  Bytes code(kGranuleSize, 0);
  const Insn seq[] = {{Op::kGadget}, {Op::kHalt}, {Op::kGadget}, {Op::kHalt}};
  for (std::size_t i = 0; i < std::size(seq); ++i) {
    const auto w = seq[i].encode();
    std::copy(w.begin(), w.end(), code.begin() + static_cast<std::ptrdiff_t>(i * kInsnBytes));
  }
  m_.phys_write(granule_base(*stub_g), code);

  for (std::size_t i = 0; i < kSharedBytes / kGranuleSize; ++i) {
    auto g = driver_.alloc_host();
    if (!g) throw ModelError("no host memory for the shared buffer");
    const VirtAddr va = driver_.map_host_page(*g);
    if (i == 0) shared_ = va;
  }

  set_ocall(kOcallDouble, [](OcallContext& c) { return c.arg * 2; });
  set_ocall(kOcallProbe, [](OcallContext& c) -> std::uint64_t {
    if (c.runtime.machine().host_read64(c.arg)) return 1;
    c.runtime.note_ocall_denial();
    return 0;
  });
}

Expected<EnclaveId, LoadError> Runtime::create(const Manifest& manifest, const LoadOptions& opts) {
  auto h = load_enclave(driver_, swap_, manifest, opts);
  if (!h) return Unexpected(h.error());
  const EnclaveId eid = h->eid;
  handles_[eid] = std::move(*h);
  return eid;
}

Status Runtime::destroy(EnclaveId eid) {
  auto it = handles_.find(eid);
  if (it == handles_.end()) return Status::kInvalidParameter;
  const Status s = unload_enclave(driver_, swap_, it->second);
  if (s == Status::kSuccess) handles_.erase(it);
  return s;
}

const EnclaveHandle* Runtime::handle(EnclaveId eid) const {
  auto it = handles_.find(eid);
  return it == handles_.end() ? nullptr : &it->second;
}

std::vector<EnclaveId> Runtime::enclaves() const {
  std::vector<EnclaveId> out;
  for (const auto& [eid, h] : handles_) out.push_back(eid);
  return out;
}

void Runtime::load_entry_regs(VCpu& cpu, Leaf leaf, VirtAddr tcs_va) {
  cpu.regs.x[0] = kSmcEnclu;
  cpu.regs.x[1] = leaf_number(leaf);
  cpu.regs.x[2] = tcs_va;
  cpu.regs.x[3] = stub_ + kStubAep;
  cpu.regs.pc = leaf == Leaf::kEenter ? stub_ + kStubEnter : stub_ + kStubAep;
}

Status Runtime::prepare_entry(unsigned vcpu, EnclaveId eid, std::size_t tcs, std::uint64_t selector,
                              std::array<std::uint64_t, 4> args) {
  const EnclaveHandle* h = handle(eid);
  if (!h || tcs >= h->tcs.size() || vcpu >= m_.vcpu_count()) return Status::kInvalidParameter;
  VCpu& cpu = m_.vcpu(vcpu);
  if (cpu.mode != CpuMode::kHost) return Status::kInvalidMode;
  cpu.regs = RegisterFile{};
  cpu.state = RunState::kRunnable;
  cpu.last_exit = ExitReport{};
  load_entry_regs(cpu, Leaf::kEenter, h->tcs[tcs]);
  cpu.regs.x[5] = selector;
  for (std::size_t i = 0; i < 4; ++i) cpu.regs.x[6 + i] = args[i];
  return Status::kSuccess;
}

EcallResult Runtime::fault_exit(EnclaveId eid, VCpu& cpu, EcallResult res) {
  const ExitReport& ex = cpu.last_exit;
  FaultReport f;
  f.kind = ex.kind;
  f.va = ex.va;
  if (ex.kind == ExitKind::kAbort) {
    f.reason = "abort";
    f.status = Status::kEnclaveCrashed;
  } else if (ex.crashed) {
    f.reason = "ssa-overflow";
    f.status = Status::kCssaFull;
  } else if (ex.fault && ex.fault->kind == MemFault::Kind::kGpf) {
    f.reason = "gpf";
    f.status = Status::kGpf;
  } else {
    f.reason = "page-fault";
    f.status = Status::kPageFault;
  }
  // A saved frame is left behind that nothing will resume.
  m_.mark_crashed(eid);
  res.status = f.status;
  res.fault = f;
  return res;
}

bool Runtime::handle_exception(unsigned vcpu, VirtAddr tcs_va, EcallResult& res) {
  VCpu& cpu = m_.vcpu(vcpu);
  const ExitReport fault = cpu.last_exit;
  load_entry_regs(cpu, Leaf::kEenter, tcs_va);
  cpu.regs.x[5] = kEnterException;
  bool handled = false;
  while (res.steps < step_budget) {
    const StepEvent ev = m_.step(vcpu);
    ++res.steps;
    if (ev == StepEvent::kEnter) continue;
    if (ev == StepEvent::kNone && cpu.mode == CpuMode::kEnclave) continue;
    if (ev == StepEvent::kAex && cpu.last_exit.kind == ExitKind::kInterrupt) {
      ++res.aex_count;
      continue;
    }
    handled = ev == StepEvent::kExit && cpu.regs.x[5] == kExitHandled;
    break;
  }
  if (handled) {
    load_entry_regs(cpu, Leaf::kEresume, tcs_va);
  } else {
    cpu.last_exit = fault;
  }
  return handled;
}

EcallResult Runtime::ecall(EnclaveId eid, std::size_t tcs, std::uint64_t selector,
                           std::array<std::uint64_t, 4> args, unsigned vcpu) {
  EcallResult res;
  if (Status s = prepare_entry(vcpu, eid, tcs, selector, args); s != Status::kSuccess) {
    res.status = s;
    return res;
  }
  VCpu& cpu = m_.vcpu(vcpu);
  const VirtAddr tcs_va = handles_.at(eid).tcs[tcs];
  Leaf pending = Leaf::kEenter;

  while (res.steps < step_budget) {
    const StepEvent ev = m_.step(vcpu);
    ++res.steps;
    switch (ev) {
      case StepEvent::kEnter:
        break;
      case StepEvent::kNone: {
        if (cpu.mode == CpuMode::kEnclave) break;
        // The entry gadget returned an error.
        const auto s = static_cast<Status>(cpu.regs.x[0]);
        if (s == Status::kPageFault && swap_.swapped(eid, cpu.last_exit.va)) {
          const Status in = swap_.swap_in(eid, cpu.last_exit.va);
          if (in != Status::kSuccess) {
            res.status = in;
            return res;
          }
          ++res.swap_ins;
          load_entry_regs(cpu, pending, tcs_va);
          break;
        }
        res.status = s;
        return res;
      }
      case StepEvent::kExit: {
        const std::uint64_t code = cpu.regs.x[5];
        if (code == kExitReturn) {
          res.value = cpu.regs.x[6];
          res.value2 = cpu.regs.x[7];
          return res;
        }
        if (code != kExitOcall) {
          res.status = Status::kInvalidParameter;
          return res;
        }
        ++res.ocalls;
        OcallContext ctx{*this, eid, vcpu, cpu.regs.x[6], cpu.regs.x[7]};
        auto h = ocalls_.find(ctx.id);
        const std::uint64_t ret = h == ocalls_.end() ? ~std::uint64_t{0} : h->second(ctx);
        cpu.regs.x[5] = kEnterOret;
        cpu.regs.x[6] = ret;
        pending = Leaf::kEenter;
        load_entry_regs(cpu, pending, tcs_va);
        break;
      }
      case StepEvent::kAex: {
        ++res.aex_count;
        const ExitReport ex = cpu.last_exit;
        pending = Leaf::kEresume;
        if (ex.crashed) return fault_exit(eid, cpu, res);
        if (ex.kind == ExitKind::kFault) {
          if (!swap_.swapped(eid, ex.va)) {
            if (handle_exception(vcpu, tcs_va, res)) break;
            return fault_exit(eid, cpu, res);
          }
          const Status in = swap_.swap_in(eid, ex.va);
          if (in != Status::kSuccess) {
            res.status = in;
            return res;
          }
          ++res.swap_ins;
        }
        // The AEP stub resumes the thread.
        break;
      }
      case StepEvent::kHalt:
      case StepEvent::kHostFault:
        res.status = Status::kInvalidMode;
        return res;
    }
  }
  res.status = Status::kEnclaveCrashed;
  res.fault = FaultReport{ExitKind::kNone, cpu.regs.pc, Status::kEnclaveCrashed, "budget"};
  return res;
}

Expected<std::size_t, Status> Runtime::add_thread(EnclaveId eid, VirtAddr tcs_va) {
  auto it = handles_.find(eid);
  if (it == handles_.end()) return fail(Status::kInvalidParameter);
  const Secs* secs = m_.enclaves().find(eid);
  if (!secs) return fail(Status::kInvalidParameter);
  auto pg = secs->pages.find(page_floor(tcs_va));
  if (pg == secs->pages.end()) return fail(Status::kInvalidPage);
  const EpcmEntry& e = m_.memory().epcm_lookup(pg->second);
  if (e.type != PageType::kTcs || e.modified || page_offset(tcs_va) != 0) {
    return fail(Status::kBadTcs);
  }
  it->second.tcs.push_back(tcs_va);
  return it->second.tcs.size() - 1;
}

Status Runtime::alloc_pages(EnclaveId eid, VirtAddr va, std::size_t pages, unsigned vcpu) {
  if (!handle(eid)) return Status::kInvalidParameter;
  const std::uint64_t expect = SecInfo{PageType::kReg, Perms{true, true, false}}.pack();
  for (std::size_t i = 0; i < pages; ++i) {
    const VirtAddr page = va + i * kGranuleSize;
    auto g = driver_.alloc_epc();
    if (!g) return Status::kOutOfMemory;
    const LeafResult r = driver_.eaug(eid, page, *g);
    if (!r.succeeded()) {
      driver_.free_epc(*g);
      return r.status;
    }
    driver_.map(page, *g);
    const EcallResult acc =
        ecall(eid, 0, static_cast<std::uint64_t>(Selector::kEaccept), {page, expect}, vcpu);
    if (!acc.ok()) return acc.status;
    if (acc.value != 0) return static_cast<Status>(acc.value);
    swap_.track(eid, page);
  }
  return Status::kSuccess;
}

Expected<Bytes, Status> Runtime::seal(EnclaveId eid, std::uint16_t policy,
                                      std::span<const std::uint8_t> payload) {
  if (payload.size() + SealHeader::kBytes > kSharedHalf) return fail(Status::kInvalidParameter);
  if (!m_.host_write(shared_, payload)) return fail(Status::kGpf);
  const VirtAddr out = shared_ + kSharedHalf;
  const EcallResult r = ecall(eid, 0, static_cast<std::uint64_t>(Selector::kSeal),
                              {shared_, payload.size(), out, policy});
  if (!r.ok()) return fail(r.status);
  if (r.value != 0) return fail(static_cast<Status>(r.value));
  auto blob = m_.host_read(out, r.value2);
  if (!blob) return fail(Status::kGpf);
  return std::move(*blob);
}

Expected<Bytes, Status> Runtime::unseal(EnclaveId eid, std::span<const std::uint8_t> blob) {
  if (blob.size() > kSharedHalf) return fail(Status::kInvalidParameter);
  if (!m_.host_write(shared_, blob)) return fail(Status::kGpf);
  const VirtAddr out = shared_ + kSharedHalf;
  const EcallResult r = ecall(eid, 0, static_cast<std::uint64_t>(Selector::kUnseal),
                              {shared_, blob.size(), out});
  if (!r.ok()) return fail(r.status);
  if (r.value != 0) return fail(static_cast<Status>(r.value));
  auto plain = m_.host_read(out, r.value2);
  if (!plain) return fail(Status::kGpf);
  return std::move(*plain);
}

Expected<TargetInfo, Status> Runtime::target_info(EnclaveId eid) {
  const EcallResult r =
      ecall(eid, 0, static_cast<std::uint64_t>(Selector::kTargetInfo), {shared_ + kSharedHalf});
  if (!r.ok()) return fail(r.status);
  if (r.value != 0) return fail(static_cast<Status>(r.value));
  auto raw = m_.host_read(shared_ + kSharedHalf, TargetInfo::kBytes);
  if (!raw) return fail(Status::kGpf);
  return TargetInfo::load(*raw);
}

Expected<Report, Status> Runtime::report(EnclaveId eid, const TargetInfo& target,
                                         const ReportData& data) {
  std::array<std::uint8_t, TargetInfo::kBytes> ti{};
  target.store(ti);
  if (!m_.host_write(shared_, ti) || !m_.host_write(shared_ + 0x100, data)) return fail(Status::kGpf);
  const VirtAddr out = shared_ + kSharedHalf;
  const EcallResult r = ecall(eid, 0, static_cast<std::uint64_t>(Selector::kReport),
                              {shared_, shared_ + 0x100, out});
  if (!r.ok()) return fail(r.status);
  if (r.value != 0) return fail(static_cast<Status>(r.value));
  auto raw = m_.host_read(out, Report::kBytes);
  if (!raw) return fail(Status::kGpf);
  return Report::load(*raw);
}

Expected<bool, Status> Runtime::verify(EnclaveId eid, const Report& rep) {
  std::array<std::uint8_t, Report::kBytes> raw{};
  rep.store(raw);
  if (!m_.host_write(shared_, raw)) return fail(Status::kGpf);
  const EcallResult r = ecall(eid, 0, static_cast<std::uint64_t>(Selector::kVerify), {shared_});
  if (!r.ok()) return fail(r.status);
  const auto s = static_cast<Status>(r.value);
  if (s == Status::kSuccess) return true;
  if (s == Status::kMacCompareFail) return false;
  return fail(s);
}

AttestResult Runtime::attest(EnclaveId a, EnclaveId b) {
  AttestResult out;
  auto one_way = [&](EnclaveId from, EnclaveId to, bool& verdict, Digest& seen) {
    auto ti = target_info(to);
    if (!ti) return ti.error();
    ReportData rd{};
    rd[0] = static_cast<std::uint8_t>(to_underlying(from));
    auto rep = report(from, *ti, rd);
    if (!rep) return rep.error();
    seen = rep->body.mrenclave;
    auto ok = verify(to, *rep);
    if (!ok) return ok.error();
    verdict = *ok;
    return Status::kSuccess;
  };
  out.status = one_way(a, b, out.b_verifies_a, out.b_sees);
  if (out.status == Status::kSuccess) out.status = one_way(b, a, out.a_verifies_b, out.a_sees);
  return out;
}

}  // namespace ccx::host
