#include "ccx/structs.hpp"

#include <stdexcept>

#include "ccx/bytes.hpp"

namespace ccx {

std::uint64_t SecInfo::pack() const noexcept {
  return std::uint64_t{perms.bits()} | (std::uint64_t{static_cast<std::uint8_t>(type)} << 8);
}

std::optional<SecInfo> SecInfo::unpack(std::uint64_t flags) noexcept {
  const std::uint64_t t = (flags >> 8) & 0xFF;
  if (t > static_cast<std::uint64_t>(PageType::kTrim)) return std::nullopt;
  // Only the permission and type fields are defined.
  if ((flags & ~std::uint64_t{0xFF07}) != 0) return std::nullopt;
  return SecInfo{static_cast<PageType>(t), Perms::from_bits(flags & 7)};
}

SecInfo SecInfo::normalized() const noexcept {
  if (type == PageType::kTcs) return SecInfo{type, Perms{}};
  return *this;
}

void SecsTemplate::store(std::span<std::uint8_t> out) const {
  ByteWriter(out).u64(size).u64(base).u32(ssa_frame_size).u32(0).u64(attributes);
}

SecsTemplate SecsTemplate::load(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  SecsTemplate t;
  t.size = r.u64();
  t.base = r.u64();
  t.ssa_frame_size = r.u32();
  r.skip(4);
  t.attributes = r.u64();
  return t;
}

void Tcs::store(std::span<std::uint8_t> page) const {
  ByteWriter(page)
      .u64(busy)
      .u64(flags)
      .u64(ossa)
      .u32(cssa)
      .u32(nssa)
      .u64(oentry)
      .u64(tls_base);
}

Tcs Tcs::load(std::span<const std::uint8_t> page) {
  ByteReader r(page);
  Tcs t;
  t.busy = r.u64();
  t.flags = r.u64();
  t.ossa = r.u64();
  t.cssa = r.u32();
  t.nssa = r.u32();
  t.oentry = r.u64();
  t.tls_base = r.u64();
  return t;
}

void SsaFrame::store(std::span<std::uint8_t> out) const {
  ByteWriter w(out);
  for (auto v : regs.x) w.u64(v);
  w.u64(regs.sp).u64(regs.pc).u64(regs.pstate).u64(regs.tpidr);
  w.u64(static_cast<std::uint64_t>(exit_kind)).u64(exit_detail);
}

SsaFrame SsaFrame::load(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  SsaFrame f;
  for (auto& v : f.regs.x) v = r.u64();
  f.regs.sp = r.u64();
  f.regs.pc = r.u64();
  f.regs.pstate = r.u64();
  f.regs.tpidr = r.u64();
  f.exit_kind = static_cast<ExitKind>(r.u64());
  f.exit_detail = r.u64();
  return f;
}

void PageInfo::store(std::span<std::uint8_t> out) const {
  ByteWriter(out).u64(src).u64(vaddr).u64(aux).u64(secinfo).u64(eid);
}

PageInfo PageInfo::load(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  PageInfo p;
  p.src = r.u64();
  p.vaddr = r.u64();
  p.aux = r.u64();
  p.secinfo = r.u64();
  p.eid = r.u64();
  return p;
}

void Pcmd::store(std::span<std::uint8_t> out) const {
  ByteWriter(out).u64(secinfo).u32(eid).u32(reserved).u64(vaddr).bytes(mac);
}

Pcmd Pcmd::load(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  Pcmd p;
  p.secinfo = r.u64();
  p.eid = r.u32();
  p.reserved = r.u32();
  p.vaddr = r.u64();
  p.mac = r.array<16>();
  return p;
}

Bytes Pcmd::aad(std::uint64_t version) const {
  Bytes out(32);
  ByteWriter(out).u64(secinfo).u32(eid).u32(reserved).u64(vaddr).u64(version);
  return out;
}

std::array<std::uint8_t, SigBody::kBytes> SigBody::serialize() const {
  std::array<std::uint8_t, kBytes> out{};
  ByteWriter(out)
      .text("CCXSIG01", 8)
      .bytes(enclavehash)
      .u64(attributes)
      .u64(attribute_mask)
      .u16(isv_prod_id)
      .u16(isv_svn)
      .u8(max_page_perms.bits());
  return out;
}

SigBody SigBody::deserialize(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  r.skip(8);
  SigBody b;
  b.enclavehash = r.array<32>();
  b.attributes = r.u64();
  b.attribute_mask = r.u64();
  b.isv_prod_id = r.u16();
  b.isv_svn = r.u16();
  b.max_page_perms = Perms::from_bits(r.u8());
  return b;
}

Bytes SigStruct::serialize() const {
  Bytes out(kBytes);
  ByteWriter(out).bytes(body.serialize()).bytes(public_key).bytes(signature);
  return out;
}

SigStruct SigStruct::deserialize(std::span<const std::uint8_t> in) {
  if (in.size() < kBytes) throw std::out_of_range("SIGSTRUCT truncated");
  SigStruct s;
  s.body = SigBody::deserialize(in.first(SigBody::kBytes));
  ByteReader r(in.subspan(SigBody::kBytes));
  s.public_key = r.array<32>();
  s.signature = r.array<64>();
  return s;
}

void TargetInfo::store(std::span<std::uint8_t> out) const {
  ByteWriter(out).bytes(mrenclave).u64(attributes);
}

TargetInfo TargetInfo::load(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  TargetInfo t;
  t.mrenclave = r.array<32>();
  t.attributes = r.u64();
  return t;
}

std::array<std::uint8_t, ReportBody::kBytes> ReportBody::serialize() const {
  std::array<std::uint8_t, kBytes> out{};
  ByteWriter(out)
      .u64(attributes)
      .bytes(mrenclave)
      .bytes(mrsigner)
      .u16(isv_prod_id)
      .u16(isv_svn)
      .u32(0)
      .bytes(reportdata);
  return out;
}

ReportBody ReportBody::deserialize(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  ReportBody b;
  b.attributes = r.u64();
  b.mrenclave = r.array<32>();
  b.mrsigner = r.array<32>();
  b.isv_prod_id = r.u16();
  b.isv_svn = r.u16();
  r.skip(4);
  b.reportdata = r.array<64>();
  return b;
}

void Report::store(std::span<std::uint8_t> out) const {
  ByteWriter(out).bytes(body.serialize()).bytes(keyid).bytes(mac);
}

Report Report::load(std::span<const std::uint8_t> in) {
  Report rep;
  rep.body = ReportBody::deserialize(in.first(ReportBody::kBytes));
  ByteReader r(in.subspan(ReportBody::kBytes));
  rep.keyid = r.array<32>();
  rep.mac = r.array<16>();
  return rep;
}

void KeyRequest::store(std::span<std::uint8_t> out) const {
  ByteWriter(out).u16(static_cast<std::uint16_t>(name)).u16(policy).u16(isv_svn).u16(0).bytes(keyid);
}

KeyRequest KeyRequest::load(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  KeyRequest k;
  k.name = static_cast<KeyName>(r.u16());
  k.policy = r.u16();
  k.isv_svn = r.u16();
  r.skip(2);
  k.keyid = r.array<32>();
  return k;
}

// --- hex helpers -----------------------------------------------------------

std::string to_hex(std::span<const std::uint8_t> b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto v : b) {
    s += kDigits[v >> 4];
    s += kDigits[v & 0xF];
  }
  return s;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

}  // namespace ccx
