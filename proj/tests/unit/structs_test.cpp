#include <gtest/gtest.h>

#include "ccx/leaf.hpp"
#include "ccx/structs.hpp"

using namespace ccx;

namespace {

TEST(SecInfo, PackLayout) {
  SecInfo s{PageType::kTcs, Perms{true, false, true}};
  EXPECT_EQ(s.pack(), 0x105u);
  auto back = SecInfo::unpack(0x105);
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, s);
  EXPECT_FALSE(SecInfo::unpack(0x905).has_value());
  EXPECT_EQ(s.normalized().perms, Perms{});
}

TEST(Structs, TcsRoundTrip) {
  Tcs t{1, kTcsAexNotify, 0x11000, 2, 3, 0x40, 0x13000};
  std::array<std::uint8_t, kGranuleSize> page{};
  t.store(page);
  EXPECT_EQ(Tcs::load(page), t);
}

TEST(Structs, SsaFrameRoundTrip) {
  SsaFrame f;
  for (std::size_t i = 0; i < 31; ++i) f.regs.x[i] = i * 0x0101010101010101ull;
  f.regs.sp = 0x1000;
  f.regs.pc = 0x2000;
  f.regs.pstate = 5;
  f.regs.tpidr = 0x3000;
  f.exit_kind = ExitKind::kFault;
  f.exit_detail = 0xdead;
  Bytes raw(SsaFrame::kBytes);
  f.store(raw);
  const SsaFrame g = SsaFrame::load(raw);
  EXPECT_EQ(g.regs, f.regs);
  EXPECT_EQ(g.exit_kind, ExitKind::kFault);
  EXPECT_EQ(g.exit_detail, 0xdeadu);
}

TEST(Structs, PageInfoAndPcmd) {
  PageInfo p{0x1000, 0x2000, 0x3000, 0x203, 7};
  Bytes raw(PageInfo::kBytes);
  p.store(raw);
  const PageInfo q = PageInfo::load(raw);
  EXPECT_EQ(q.src, p.src);
  EXPECT_EQ(q.vaddr, p.vaddr);
  EXPECT_EQ(q.aux, p.aux);
  EXPECT_EQ(q.secinfo, p.secinfo);
  EXPECT_EQ(q.eid, p.eid);

  Pcmd c{0x203, 4, 0x5000, {}};
  c.mac[0] = 9;
  Bytes pr(Pcmd::kBytes);
  c.store(pr);
  EXPECT_EQ(Pcmd::load(pr), c);
  EXPECT_NE(c.aad(1), c.aad(2));
}

TEST(Structs, SigStructRoundTrip) {
  SigStruct s;
  s.body.enclavehash[3] = 7;
  s.body.attributes = kAttrDebug;
  s.body.attribute_mask = kAttrRequestable;
  s.body.isv_prod_id = 4;
  s.body.isv_svn = 2;
  s.body.max_page_perms = Perms{true, true, false};
  s.public_key[0] = 1;
  s.signature[63] = 2;
  const Bytes raw = s.serialize();
  ASSERT_EQ(raw.size(), SigStruct::kBytes);
  EXPECT_EQ(SigStruct::deserialize(raw), s);
}

TEST(Structs, ReportRoundTrip) {
  Report r;
  r.body.attributes = 3;
  r.body.mrenclave[0] = 1;
  r.body.mrsigner[31] = 2;
  r.body.isv_prod_id = 5;
  r.body.isv_svn = 6;
  r.body.reportdata[10] = 7;
  r.keyid[1] = 8;
  r.mac[2] = 9;
  Bytes raw(Report::kBytes);
  r.store(raw);
  EXPECT_EQ(Report::load(raw), r);
}

TEST(Structs, KeyRequestAndTargetInfo) {
  KeyRequest k{KeyName::kReport, kPolicyMrSigner, 3, {}};
  k.keyid[4] = 1;
  Bytes raw(KeyRequest::kBytes);
  k.store(raw);
  const KeyRequest l = KeyRequest::load(raw);
  EXPECT_EQ(l.name, KeyName::kReport);
  EXPECT_EQ(l.policy, kPolicyMrSigner);
  EXPECT_EQ(l.isv_svn, 3);
  EXPECT_EQ(l.keyid, k.keyid);

  TargetInfo t{{}, kAttrDebug};
  t.mrenclave[5] = 5;
  Bytes tr(TargetInfo::kBytes);
  t.store(tr);
  const TargetInfo u = TargetInfo::load(tr);
  EXPECT_EQ(u.mrenclave, t.mrenclave);
  EXPECT_EQ(u.attributes, t.attributes);
}

TEST(Leaves, TableIsComplete) {
  EXPECT_EQ(kLeaves.size(), 25u);
  int encls = 0;
  for (const auto& l : kLeaves) {
    EXPECT_EQ(decode_leaf(l.cls, l.number), l.leaf);
    EXPECT_EQ(leaf_from_string(l.name), l.leaf);
    encls += l.cls == LeafClass::kEncls;
  }
  EXPECT_EQ(encls, 16);
  EXPECT_FALSE(decode_leaf(LeafClass::kEnclu, 0x8).has_value());
  EXPECT_FALSE(decode_leaf(LeafClass::kEncls, 0x10).has_value());
}

}  // namespace
