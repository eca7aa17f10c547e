#include <gtest/gtest.h>

#include "ccx/crypto.hpp"
#include "ccx/measurement.hpp"
#include "support/ref_measure.hpp"
#include "support/ref_sha256.hpp"

using namespace ccx;

namespace {

Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

std::string hex(std::span<const std::uint8_t> d) {
  static const char* k = "0123456789abcdef";
  std::string s;
  for (auto b : d) {
    s += k[b >> 4];
    s += k[b & 15];
  }
  return s;
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(hex(ref::sha256(bytes_of("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(hex(ref::sha256(Bytes{})),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(hex(sha256(bytes_of("abc"))), hex(ref::sha256(bytes_of("abc"))));
}

TEST(Sha256, LibraryMatchesReference) {
  Bytes data;
  for (int n = 0; n < 300; ++n) {
    EXPECT_EQ(sha256(data), ref::sha256(data)) << n;
    data.push_back(static_cast<std::uint8_t>(n * 7));
  }
}

TEST(RunningHash, ForkAndFinalize) {
  RunningHash h;
  Block64 b{};
  b[0] = 1;
  h.absorb(b);
  RunningHash fork = h;
  fork.absorb(b);
  EXPECT_EQ(h.blocks_absorbed(), 1u);
  EXPECT_EQ(fork.blocks_absorbed(), 2u);
  EXPECT_EQ(h.finalize(), ref::sha256(Bytes(b.begin(), b.end())));
  EXPECT_EQ(h.finalize(), h.finalize());
}

TEST(Measurement, BuilderMatchesReference) {
  ref::Page p;
  p.offset = 0x2000;
  p.type = 2;
  p.perms = 3;
  p.content.assign(kGranuleSize, 0);
  for (std::size_t i = 0; i < kGranuleSize; ++i) p.content[i] = static_cast<std::uint8_t>(i);
  ref::Page q = p;
  q.offset = 0x3000;
  q.measured = false;

  MeasurementBuilder mb(0x10000, 2);
  mb.add_page(p.offset, SecInfo{PageType::kReg, Perms{true, true, false}}.pack());
  mb.extend_page(p.offset, p.content);
  mb.add_page(q.offset, SecInfo{PageType::kReg, Perms{true, true, false}}.pack());
  EXPECT_EQ(mb.digest(), ref::mrenclave(0x10000, 2, {p, q}));
}

TEST(Measurement, RecordLayout) {
  const Block64 r = ecreate_record(0x40000, 3);
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(r.data())), "ECREATE");
  EXPECT_EQ(r[8 + 2], 0x04);
  EXPECT_EQ(r[16], 3);
  const Block64 e = eextend_record(0x100);
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(e.data())), "EEXTEND");
  EXPECT_EQ(e[9], 0x01);
}

TEST(Cmac, Rfc4493Vector) {
  const Key128 k = {0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6,
                    0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f, 0x3c};
  EXPECT_EQ(hex(aes128_cmac(k, Bytes{})), "bb1d6929e95937287fa37d129b756746");
  const Bytes m = {0x6b, 0xc1, 0xbe, 0xe2, 0x2e, 0x40, 0x9f, 0x96,
                   0xe9, 0x3d, 0x7e, 0x11, 0x73, 0x93, 0x17, 0x2a};
  EXPECT_EQ(hex(aes128_cmac(k, m)), "070a16b46b4d4144f79bdd9dd04a287c");
}

TEST(Hmac, Rfc4231Case2) {
  EXPECT_EQ(hex(hmac_sha256(bytes_of("Jefe"), bytes_of("what do ya want for nothing?"))),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST(Gcm, SealOpenAndTamper) {
  const Key128 k{1, 2, 3};
  const GcmIv iv{9};
  const Bytes pt = bytes_of("page contents");
  const Bytes aad = bytes_of("meta");
  Sealed s = aes128_gcm_seal(k, iv, pt, aad);
  auto back = aes128_gcm_open(k, iv, s.ciphertext, aad, s.tag);
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, pt);
  s.ciphertext[0] ^= 1;
  EXPECT_FALSE(aes128_gcm_open(k, iv, s.ciphertext, aad, s.tag));
  s.ciphertext[0] ^= 1;
  EXPECT_FALSE(aes128_gcm_open(k, iv, s.ciphertext, bytes_of("metb"), s.tag));
}

TEST(Ed25519, SignVerify) {
  Digest seed{};
  seed[0] = 42;
  const SigningKey key = SigningKey::from_seed(seed);
  const Bytes msg = bytes_of("hello");
  Signature sig = key.sign(msg);
  EXPECT_TRUE(ed25519_verify(key.public_key(), msg, sig));
  sig[5] ^= 0x10;
  EXPECT_FALSE(ed25519_verify(key.public_key(), msg, sig));
  EXPECT_EQ(SigningKey::from_seed(seed).public_key(), key.public_key());
}

TEST(SigStruct, SignAndVerify) {
  const CryptoEngine ce(1, MacAlgorithm::kAesCmac);
  const SigningKey key = ce.test_signing_key("test");
  SigBody body;
  body.enclavehash[0] = 0xAA;
  SigStruct s = sign_sigstruct(key, body);
  auto signer = verify_sigstruct(s);
  ASSERT_TRUE(signer);
  EXPECT_EQ(*signer, signer_digest(key.public_key()));
  s.body.isv_svn ^= 1;
  EXPECT_FALSE(verify_sigstruct(s));
  EXPECT_NE(ce.test_signing_key("other").public_key(), key.public_key());
}

TEST(KeyDerivation, SeparatesInputs) {
  const CryptoEngine ce(1, MacAlgorithm::kAesCmac);
  const CryptoEngine other_seed(2, MacAlgorithm::kAesCmac);
  Digest id{}, keyid{};
  const Key128 base = ce.derive_key(4, id, 1, keyid);
  EXPECT_EQ(base, ce.derive_key(4, id, 1, keyid));
  EXPECT_NE(base, ce.derive_key(3, id, 1, keyid));
  EXPECT_NE(base, ce.derive_key(4, id, 2, keyid));
  id[0] = 1;
  EXPECT_NE(base, ce.derive_key(4, id, 1, keyid));
  id[0] = 0;
  keyid[31] = 1;
  EXPECT_NE(base, ce.derive_key(4, id, 1, keyid));
  keyid[31] = 0;
  EXPECT_NE(base, other_seed.derive_key(4, id, 1, keyid));
}

TEST(PageSeal, VersionBindsCiphertext) {
  const CryptoEngine ce(7, MacAlgorithm::kHmacSha256);
  const Bytes page(kGranuleSize, 0x33);
  const Bytes aad = bytes_of("pcmd");
  const Sealed s = ce.page_seal(page, aad, 5);
  EXPECT_TRUE(ce.page_unseal(s.ciphertext, aad, s.tag, 5));
  EXPECT_FALSE(ce.page_unseal(s.ciphertext, aad, s.tag, 6));
}

TEST(ReportMac, AlgorithmsDiffer) {
  const CryptoEngine cmac(1, MacAlgorithm::kAesCmac);
  const CryptoEngine hmac(1, MacAlgorithm::kHmacSha256);
  const Key128 k{5};
  ReportBody b;
  b.isv_svn = 1;
  EXPECT_NE(cmac.report_mac(k, b), hmac.report_mac(k, b));
  ReportBody c = b;
  c.reportdata[0] = 1;
  EXPECT_NE(cmac.report_mac(k, b), cmac.report_mac(k, c));
}

}  // namespace
