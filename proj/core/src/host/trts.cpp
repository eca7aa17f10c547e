#include "ccx/host/trts.hpp"

#include <array>

#include "ccx/bytes.hpp"

namespace ccx::host {
namespace {

constexpr std::array<std::pair<Selector, std::string_view>, 19> kSelectorNames = {{
    {Selector::kEcho, "echo"},
    {Selector::kAdd, "add"},
    {Selector::kOcall, "ocall"},
    {Selector::kCompute, "compute"},
    {Selector::kRead64, "read64"},
    {Selector::kWrite64, "write64"},
    {Selector::kEaccept, "eaccept"},
    {Selector::kEmodpe, "emodpe"},
    {Selector::kEacceptcopy, "eacceptcopy"},
    {Selector::kSeal, "seal"},
    {Selector::kUnseal, "unseal"},
    {Selector::kReport, "report"},
    {Selector::kVerify, "verify"},
    {Selector::kTargetInfo, "targetinfo"},
    {Selector::kEgetkey, "egetkey"},
    {Selector::kFill, "fill"},
    {Selector::kSum, "sum"},
    {Selector::kCall, "call"},
    {Selector::kProbe, "probe"},
}};

// Helper results go back in x6 (status) and x7 (length or verdict).
void reply(TcallContext& ctx, Status s, std::uint64_t second = 0) {
  ctx.cpu().regs.x[6] = static_cast<std::uint64_t>(s);
  ctx.cpu().regs.x[7] = second;
}

std::uint64_t& arg(TcallContext& ctx, int i) { return ctx.cpu().regs.x[static_cast<std::size_t>(6 + i)]; }

// Runs an in-enclave EGETKEY with the request staged in TLS scratch.
Expected<Key128, Status> get_key(TcallContext& ctx, const KeyRequest& req, bool& faulted,
                                 MemFault& fault) {
  const VirtAddr req_va = ctx.tls() + tls::kScratch;
  const VirtAddr key_va = req_va + 0x40;
  std::array<std::uint8_t, KeyRequest::kBytes> raw{};
  req.store(raw);
  if (auto w = ctx.write(req_va, raw); !w) {
    faulted = true;
    fault = w.error();
    return Unexpected(Status::kPageFault);
  }
  LeafResult r = ctx.enclu(Leaf::kEgetkey, req_va, key_va);
  if (r.fault) {
    faulted = true;
    fault = MemFault{r.status == Status::kGpf ? MemFault::Kind::kGpf : MemFault::Kind::kEpcm,
                     *r.fault, {}};
    return Unexpected(r.status);
  }
  if (!r.succeeded()) return Unexpected(r.status);
  auto k = ctx.read(key_va, 16);
  if (!k) {
    faulted = true;
    fault = k.error();
    return Unexpected(Status::kPageFault);
  }
  Key128 key{};
  std::copy(k->begin(), k->end(), key.begin());
  const std::array<std::uint8_t, 16> zeros{};
  (void)ctx.write(key_va, zeros);
  return key;
}

TcallOutcome do_seal(TcallContext& ctx) {
  const VirtAddr in = arg(ctx, 0), out = arg(ctx, 2);
  const std::uint64_t len = arg(ctx, 1);
  const auto policy = static_cast<std::uint16_t>(arg(ctx, 3));
  if (policy != kSealPolicyMrEnclave && policy != kSealPolicyMrSigner) {
    reply(ctx, Status::kInvalidParameter);
    return TcallOutcome::done();
  }
  auto payload = ctx.read(in, len);
  if (!payload) return TcallOutcome::faulted(payload.error());

  SealHeader h;
  h.policy = policy;
  h.isv_svn = ctx.secs().isv_svn;
  h.keyid = sha256(*payload);
  h.length = static_cast<std::uint32_t>(len);
  KeyRequest req;
  req.name = KeyName::kSeal;
  req.policy = policy;
  req.isv_svn = h.isv_svn;
  req.keyid = h.keyid;
  bool faulted = false;
  MemFault fault;
  auto key = get_key(ctx, req, faulted, fault);
  if (faulted) return TcallOutcome::faulted(fault);
  if (!key) {
    reply(ctx, key.error());
    return TcallOutcome::done();
  }
  const auto aad = h.aad();
  Sealed s = aes128_gcm_seal(*key, GcmIv{}, *payload, aad);
  h.tag = s.tag;
  Bytes blob(SealHeader::kBytes);
  h.store(blob);
  blob.insert(blob.end(), s.ciphertext.begin(), s.ciphertext.end());
  if (auto w = ctx.write(out, blob); !w) return TcallOutcome::faulted(w.error());
  reply(ctx, Status::kSuccess, blob.size());
  return TcallOutcome::done();
}

TcallOutcome do_unseal(TcallContext& ctx) {
  const VirtAddr in = arg(ctx, 0), out = arg(ctx, 2);
  const std::uint64_t len = arg(ctx, 1);
  if (len < SealHeader::kBytes) {
    reply(ctx, Status::kInvalidParameter);
    return TcallOutcome::done();
  }
  auto blob = ctx.read(in, len);
  if (!blob) return TcallOutcome::faulted(blob.error());
  const SealHeader h = SealHeader::load(*blob);
  if (h.length != len - SealHeader::kBytes) {
    reply(ctx, Status::kInvalidParameter);
    return TcallOutcome::done();
  }
  KeyRequest req;
  req.name = KeyName::kSeal;
  req.policy = h.policy;
  req.isv_svn = h.isv_svn;
  req.keyid = h.keyid;
  bool faulted = false;
  MemFault fault;
  auto key = get_key(ctx, req, faulted, fault);
  if (faulted) return TcallOutcome::faulted(fault);
  if (!key) {
    reply(ctx, key.error());
    return TcallOutcome::done();
  }
  const auto aad = h.aad();
  auto plain = aes128_gcm_open(*key, GcmIv{},
                               std::span<const std::uint8_t>(*blob).subspan(SealHeader::kBytes),
                               aad, h.tag);
  if (!plain) {
    reply(ctx, Status::kMacCompareFail);
    return TcallOutcome::done();
  }
  if (auto w = ctx.write(out, *plain); !w) return TcallOutcome::faulted(w.error());
  reply(ctx, Status::kSuccess, plain->size());
  return TcallOutcome::done();
}

// EREPORT with targetinfo / reportdata staged in TLS; returns the report.
Expected<Report, Status> make_report(TcallContext& ctx, std::span<const std::uint8_t> ti,
                                     std::span<const std::uint8_t> rd, bool& faulted,
                                     MemFault& fault) {
  const VirtAddr ti_va = ctx.tls() + tls::kScratch;
  const VirtAddr rd_va = ti_va + 0x40;
  const VirtAddr out_va = ti_va + 0x80;
  for (auto [va, data] : {std::pair{ti_va, ti}, std::pair{rd_va, rd}}) {
    if (auto w = ctx.write(va, data); !w) {
      faulted = true;
      fault = w.error();
      return Unexpected(Status::kPageFault);
    }
  }
  LeafResult r = ctx.enclu(Leaf::kEreport, ti_va, rd_va, out_va);
  if (r.fault) {
    faulted = true;
    fault = MemFault{r.status == Status::kGpf ? MemFault::Kind::kGpf : MemFault::Kind::kEpcm,
                     *r.fault, {}};
    return Unexpected(r.status);
  }
  if (!r.succeeded()) return Unexpected(r.status);
  auto raw = ctx.read(out_va, Report::kBytes);
  if (!raw) {
    faulted = true;
    fault = raw.error();
    return Unexpected(Status::kPageFault);
  }
  return Report::load(*raw);
}

TcallOutcome do_report(TcallContext& ctx) {
  auto ti = ctx.read(arg(ctx, 0), TargetInfo::kBytes);
  if (!ti) return TcallOutcome::faulted(ti.error());
  auto rd = ctx.read(arg(ctx, 1), 64);
  if (!rd) return TcallOutcome::faulted(rd.error());
  bool faulted = false;
  MemFault fault;
  auto rep = make_report(ctx, *ti, *rd, faulted, fault);
  if (faulted) return TcallOutcome::faulted(fault);
  if (!rep) {
    reply(ctx, rep.error());
    return TcallOutcome::done();
  }
  std::array<std::uint8_t, Report::kBytes> out{};
  rep->store(out);
  if (auto w = ctx.write(arg(ctx, 2), out); !w) return TcallOutcome::faulted(w.error());
  reply(ctx, Status::kSuccess, Report::kBytes);
  return TcallOutcome::done();
}

TcallOutcome do_verify(TcallContext& ctx) {
  auto raw = ctx.read(arg(ctx, 0), Report::kBytes);
  if (!raw) return TcallOutcome::faulted(raw.error());
  const Report rep = Report::load(*raw);
  KeyRequest req;
  req.name = KeyName::kReport;
  req.keyid = rep.keyid;
  bool faulted = false;
  MemFault fault;
  auto key = get_key(ctx, req, faulted, fault);
  if (faulted) return TcallOutcome::faulted(fault);
  if (!key) {
    reply(ctx, key.error());
    return TcallOutcome::done();
  }
  const Mac128 expect = ctx.crypto().report_mac(*key, rep.body);
  const bool ok = expect == rep.mac;
  reply(ctx, ok ? Status::kSuccess : Status::kMacCompareFail, ok ? 1 : 0);
  return TcallOutcome::done();
}

TcallOutcome do_targetinfo(TcallContext& ctx) {
  const std::array<std::uint8_t, TargetInfo::kBytes> ti{};
  const std::array<std::uint8_t, 64> rd{};
  bool faulted = false;
  MemFault fault;
  auto rep = make_report(ctx, ti, rd, faulted, fault);
  if (faulted) return TcallOutcome::faulted(fault);
  if (!rep) {
    reply(ctx, rep.error());
    return TcallOutcome::done();
  }
  TargetInfo self;
  self.mrenclave = rep->body.mrenclave;
  self.attributes = rep->body.attributes;
  std::array<std::uint8_t, TargetInfo::kBytes> out{};
  self.store(out);
  if (auto w = ctx.write(arg(ctx, 0), out); !w) return TcallOutcome::faulted(w.error());
  reply(ctx, Status::kSuccess, TargetInfo::kBytes);
  return TcallOutcome::done();
}

TcallOutcome do_egetkey(TcallContext& ctx) {
  auto raw = ctx.read(arg(ctx, 0), KeyRequest::kBytes);
  if (!raw) return TcallOutcome::faulted(raw.error());
  bool faulted = false;
  MemFault fault;
  auto key = get_key(ctx, KeyRequest::load(*raw), faulted, fault);
  if (faulted) return TcallOutcome::faulted(fault);
  if (!key) {
    reply(ctx, key.error());
    return TcallOutcome::done();
  }
  if (auto w = ctx.write(arg(ctx, 1), *key); !w) return TcallOutcome::faulted(w.error());
  reply(ctx, Status::kSuccess, key->size());
  return TcallOutcome::done();
}

Expected<std::uint64_t, MemFault> read_u64(TcallContext& ctx, VirtAddr va) {
  auto b = ctx.read(va, 8);
  if (!b) return Unexpected(b.error());
  return load_u64(*b, 0);
}

Expected<std::monostate, MemFault> write_u64(TcallContext& ctx, VirtAddr va, std::uint64_t v) {
  std::array<std::uint8_t, 8> b{};
  store_u64(b, 0, v);
  return ctx.write(va, b);
}

// Stashes the interrupted context the first time the handler runs and
// tells it how many SSA frames to pop (x21).
TcallOutcome do_aex_save(TcallContext& ctx) {
  const std::uint32_t cssa = ctx.tcs().cssa;
  if (cssa == 0) return TcallOutcome::abort();
  const VirtAddr t = ctx.tls();
  auto active = read_u64(ctx, t + tls::kNotifyActive);
  if (!active) return TcallOutcome::faulted(active.error());
  auto base = read_u64(ctx, t + tls::kNotifyBase);
  if (!base) return TcallOutcome::faulted(base.error());
  if (*active == 0) {
    auto frame = ctx.ssa_frame(cssa - 1);
    if (!frame) return TcallOutcome::faulted(frame.error());
    auto count = read_u64(ctx, t + tls::kNotifyCount);
    if (!count) return TcallOutcome::faulted(count.error());
    std::array<std::uint8_t, SsaFrame::kBytes> saved{};
    frame->store(saved);
    if (auto w = ctx.write(t + tls::kSavedContext, saved); !w) return TcallOutcome::faulted(w.error());
    *base = cssa - 1;
    (void)write_u64(ctx, t + tls::kNotifyBase, *base);
    (void)write_u64(ctx, t + tls::kNotifyCount, *count + 1);
    (void)write_u64(ctx, t + tls::kNotifyCssa, cssa);
    (void)write_u64(ctx, t + tls::kNotifyActive, 1);
  }
  if (cssa < *base) return TcallOutcome::abort();
  ctx.cpu().regs.x[21] = cssa - *base;
  return TcallOutcome::done();
}

TcallOutcome do_aex_restore(TcallContext& ctx) {
  const VirtAddr t = ctx.tls();
  auto raw = ctx.read(t + tls::kSavedContext, SsaFrame::kBytes);
  if (!raw) return TcallOutcome::faulted(raw.error());
  if (auto w = write_u64(ctx, t + tls::kNotifyActive, 0); !w) {
    return TcallOutcome::faulted(w.error());
  }
  ctx.cpu().regs = SsaFrame::load(*raw).regs;
  return TcallOutcome::jumped();
}

// Exception entry: if a fixup is armed and the interrupted frame holds a
// memory fault, point the frame at the fixup so ERESUME lands there.
TcallOutcome do_fixup(TcallContext& ctx) {
  auto& x5 = ctx.cpu().regs.x[5];
  x5 = kExitUnhandled;
  const std::uint32_t cssa = ctx.tcs().cssa;
  if (cssa == 0) return TcallOutcome::done();
  const VirtAddr slot = ctx.tls() + tls::kFixup;
  auto fixup = read_u64(ctx, slot);
  if (!fixup) return TcallOutcome::faulted(fixup.error());
  if (*fixup == 0) return TcallOutcome::done();
  auto frame = ctx.ssa_frame(cssa - 1);
  if (!frame) return TcallOutcome::faulted(frame.error());
  if (frame->exit_kind != ExitKind::kFault) return TcallOutcome::done();
  frame->regs.pc = *fixup;
  std::array<std::uint8_t, SsaFrame::kBytes> raw{};
  frame->store(raw);
  if (auto w = ctx.write(ctx.ssa_address(cssa - 1), raw); !w) return TcallOutcome::faulted(w.error());
  (void)write_u64(ctx, slot, 0);
  x5 = kExitHandled;
  return TcallOutcome::done();
}

}  // namespace

std::optional<Selector> selector_from_string(std::string_view s) noexcept {
  for (const auto& [sel, name] : kSelectorNames) {
    if (name == s) return sel;
  }
  return std::nullopt;
}

std::string_view to_string(Selector s) noexcept {
  for (const auto& [sel, name] : kSelectorNames) {
    if (sel == s) return name;
  }
  return "?";
}

void SealHeader::store(std::span<std::uint8_t> out) const {
  ByteWriter(out)
      .u16(policy)
      .u16(isv_svn)
      .zeros(4)
      .bytes(keyid)
      .bytes(tag)
      .u32(length)
      .zeros(4);
}

SealHeader SealHeader::load(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  SealHeader h;
  h.policy = r.u16();
  h.isv_svn = r.u16();
  r.skip(4);
  h.keyid = r.array<32>();
  h.tag = r.array<16>();
  h.length = r.u32();
  return h;
}

std::array<std::uint8_t, SealHeader::kBytes> SealHeader::aad() const {
  SealHeader copy = *this;
  copy.tag = {};
  std::array<std::uint8_t, kBytes> out{};
  copy.store(out);
  return out;
}

void register_trts(Machine& m) {
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kSeal), do_seal);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kUnseal), do_unseal);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kReport), do_report);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kVerify), do_verify);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kTargetInfo), do_targetinfo);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kEgetkey), do_egetkey);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kAexSave), do_aex_save);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kAexRestore), do_aex_restore);
  m.set_tcall(static_cast<std::uint32_t>(Tcall::kFixup), do_fixup);
}

}  // namespace ccx::host
