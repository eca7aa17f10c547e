#include "ccx/crypto.hpp"

#include <openssl/core_names.h>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/params.h>

#include <stdexcept>
#include <string>

#include "ccx/bytes.hpp"

namespace ccx {
namespace {

[[noreturn]] void openssl_failure(const char* what) {
  throw std::runtime_error(std::string("OpenSSL: ") + what);
}

struct MdCtxFree {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
struct PkeyFree {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct MacFree {
  void operator()(EVP_MAC* m) const { EVP_MAC_free(m); }
};
struct MacCtxFree {
  void operator()(EVP_MAC_CTX* c) const { EVP_MAC_CTX_free(c); }
};

using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyFree>;

template <std::size_t N>
std::array<std::uint8_t, N> truncate(const Digest& d) {
  static_assert(N <= 32);
  std::array<std::uint8_t, N> out{};
  std::copy_n(d.begin(), N, out.begin());
  return out;
}

std::array<std::uint8_t, 16> run_mac(const char* alg, OSSL_PARAM* params,
                                     std::span<const std::uint8_t> key,
                                     std::span<const std::uint8_t> data, std::uint8_t* full,
                                     std::size_t full_len) {
  std::unique_ptr<EVP_MAC, MacFree> mac(EVP_MAC_fetch(nullptr, alg, nullptr));
  if (!mac) openssl_failure("EVP_MAC_fetch");
  std::unique_ptr<EVP_MAC_CTX, MacCtxFree> ctx(EVP_MAC_CTX_new(mac.get()));
  if (!ctx) openssl_failure("EVP_MAC_CTX_new");
  if (EVP_MAC_init(ctx.get(), key.data(), key.size(), params) != 1) openssl_failure("EVP_MAC_init");
  if (EVP_MAC_update(ctx.get(), data.data(), data.size()) != 1) openssl_failure("EVP_MAC_update");
  std::size_t len = 0;
  if (EVP_MAC_final(ctx.get(), full, &len, full_len) != 1) openssl_failure("EVP_MAC_final");
  std::array<std::uint8_t, 16> out{};
  std::copy_n(full, 16, out.begin());
  return out;
}

}  // namespace

// --- RunningHash -----------------------------------------------------------

struct RunningHash::Ctx {
  MdCtxPtr md;
};

RunningHash::RunningHash() : ctx_(std::make_unique<Ctx>()) {
  ctx_->md.reset(EVP_MD_CTX_new());
  if (!ctx_->md || EVP_DigestInit_ex(ctx_->md.get(), EVP_sha256(), nullptr) != 1) {
    openssl_failure("SHA-256 init");
  }
}

RunningHash::RunningHash(const RunningHash& other)
    : ctx_(std::make_unique<Ctx>()), blocks_(other.blocks_) {
  ctx_->md.reset(EVP_MD_CTX_new());
  if (!ctx_->md || EVP_MD_CTX_copy_ex(ctx_->md.get(), other.ctx_->md.get()) != 1) {
    openssl_failure("SHA-256 copy");
  }
}

RunningHash& RunningHash::operator=(const RunningHash& other) {
  if (this != &other) {
    RunningHash tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

RunningHash::RunningHash(RunningHash&&) noexcept = default;
RunningHash& RunningHash::operator=(RunningHash&&) noexcept = default;
RunningHash::~RunningHash() = default;

void RunningHash::absorb(const Block64& block) {
  if (EVP_DigestUpdate(ctx_->md.get(), block.data(), block.size()) != 1) {
    openssl_failure("SHA-256 update");
  }
  ++blocks_;
}

Digest RunningHash::finalize() const {
  MdCtxPtr copy(EVP_MD_CTX_new());
  if (!copy || EVP_MD_CTX_copy_ex(copy.get(), ctx_->md.get()) != 1) openssl_failure("SHA-256 copy");
  Digest out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(copy.get(), out.data(), &len) != 1) openssl_failure("SHA-256 final");
  return out;
}

// --- primitives ------------------------------------------------------------

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1) {
    openssl_failure("SHA-256");
  }
  return out;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
  char digest_name[] = "SHA256";
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_DIGEST, digest_name, 0),
      OSSL_PARAM_construct_end(),
  };
  Digest out{};
  run_mac("HMAC", params, key, data, out.data(), out.size());
  return out;
}

Mac128 aes128_cmac(const Key128& key, std::span<const std::uint8_t> data) {
  char cipher_name[] = "AES-128-CBC";
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_CIPHER, cipher_name, 0),
      OSSL_PARAM_construct_end(),
  };
  std::array<std::uint8_t, 16> full{};
  return run_mac("CMAC", params, key, data, full.data(), full.size());
}

Sealed aes128_gcm_seal(const Key128& key, const GcmIv& iv, std::span<const std::uint8_t> plaintext,
                       std::span<const std::uint8_t> aad) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_failure("EVP_CIPHER_CTX_new");
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), iv.data()) != 1) {
    openssl_failure("GCM init");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
    openssl_failure("GCM aad");
  }
  Sealed out;
  out.ciphertext.resize(plaintext.size());
  if (!plaintext.empty() &&
      EVP_EncryptUpdate(ctx.get(), out.ciphertext.data(), &len, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1) {
    openssl_failure("GCM encrypt");
  }
  if (EVP_EncryptFinal_ex(ctx.get(), out.ciphertext.data() + plaintext.size(), &len) != 1) {
    openssl_failure("GCM final");
  }
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16, out.tag.data()) != 1) {
    openssl_failure("GCM tag");
  }
  return out;
}

std::optional<Bytes> aes128_gcm_open(const Key128& key, const GcmIv& iv,
                                     std::span<const std::uint8_t> ciphertext,
                                     std::span<const std::uint8_t> aad, const Mac128& tag) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_failure("EVP_CIPHER_CTX_new");
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), iv.data()) != 1) {
    openssl_failure("GCM init");
  }
  int len = 0;
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
    openssl_failure("GCM aad");
  }
  Bytes plain(ciphertext.size());
  if (!ciphertext.empty() &&
      EVP_DecryptUpdate(ctx.get(), plain.data(), &len, ciphertext.data(),
                        static_cast<int>(ciphertext.size())) != 1) {
    openssl_failure("GCM decrypt");
  }
  Mac128 t = tag;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16, t.data()) != 1) {
    openssl_failure("GCM set tag");
  }
  if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + plain.size(), &len) != 1) {
    OPENSSL_cleanse(plain.data(), plain.size());
    return std::nullopt;
  }
  return plain;
}

// --- Ed25519 ---------------------------------------------------------------

SigningKey SigningKey::from_seed(const Digest& seed) {
  PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
  if (!pkey) openssl_failure("Ed25519 key");
  SigningKey k;
  k.seed_ = seed;
  std::size_t len = k.pub_.size();
  if (EVP_PKEY_get_raw_public_key(pkey.get(), k.pub_.data(), &len) != 1 || len != 32) {
    openssl_failure("Ed25519 public key");
  }
  return k;
}

Signature SigningKey::sign(std::span<const std::uint8_t> msg) const {
  PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed_.data(), seed_.size()));
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!pkey || !ctx) openssl_failure("Ed25519 sign setup");
  if (EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) {
    openssl_failure("Ed25519 sign init");
  }
  Signature sig{};
  std::size_t len = sig.size();
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, msg.data(), msg.size()) != 1 || len != 64) {
    openssl_failure("Ed25519 sign");
  }
  return sig;
}

bool ed25519_verify(const PublicKey& pub, std::span<const std::uint8_t> msg, const Signature& sig) {
  PkeyPtr pkey(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.data(), pub.size()));
  if (!pkey) return false;  // not a valid curve point
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx) openssl_failure("EVP_MD_CTX_new");
  if (EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) return false;
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
}

Digest signer_digest(const PublicKey& pub) { return sha256(pub); }

SigStruct sign_sigstruct(const SigningKey& key, const SigBody& body) {
  SigStruct s;
  s.body = body;
  s.public_key = key.public_key();
  s.signature = key.sign(body.serialize());
  return s;
}

std::optional<Digest> verify_sigstruct(const SigStruct& sig) {
  if (!ed25519_verify(sig.public_key, sig.body.serialize(), sig.signature)) return std::nullopt;
  return signer_digest(sig.public_key);
}

// --- key hierarchy ---------------------------------------------------------

std::string_view to_string(MacAlgorithm m) noexcept {
  return m == MacAlgorithm::kAesCmac ? "aes128-cmac" : "hmac-sha256-128";
}

std::optional<MacAlgorithm> mac_algorithm_from_string(std::string_view s) noexcept {
  if (s == "aes128-cmac") return MacAlgorithm::kAesCmac;
  if (s == "hmac-sha256-128") return MacAlgorithm::kHmacSha256;
  return std::nullopt;
}

namespace {

Digest labeled_digest(std::string_view label, std::uint64_t seed) {
  Bytes buf(label.size() + 8);
  ByteWriter(buf).text(label, label.size()).u64(seed);
  return sha256(buf);
}

}  // namespace

DeviceSecrets DeviceSecrets::from_seed(std::uint64_t seed) {
  DeviceSecrets s;
  s.seed_ = seed;
  s.root_ = labeled_digest("CCX-ROOT", seed);
  s.owner_epoch_ = truncate<16>(labeled_digest("CCX-OWNER-EPOCH", seed));
  return s;
}

Key128 derive_key(const DeviceSecrets& secrets, std::uint16_t name, const Digest& identity,
                  std::uint16_t svn, const Digest& keyid,
                  const std::array<std::uint8_t, 16>& owner_epoch) {
  std::array<std::uint8_t, 8 + 2 + 32 + 2 + 32 + 16> msg{};
  ByteWriter(msg)
      .text("CCXKDF01", 8)
      .u16(name)
      .bytes(identity)
      .u16(svn)
      .bytes(keyid)
      .bytes(owner_epoch);
  return truncate<16>(hmac_sha256(secrets.root_, msg));
}

CryptoEngine::CryptoEngine(std::uint64_t seed, MacAlgorithm mac)
    : secrets_(DeviceSecrets::from_seed(seed)), mac_(mac) {
  paging_key_ = derive_key(kPagingKeyName, Digest{}, 0, Digest{});
  report_keyid_ = hmac_sha256(secrets_.root_, as_bytes("REPORT-KEYID"));
}

Key128 CryptoEngine::derive_key(std::uint16_t name, const Digest& identity, std::uint16_t svn,
                                const Digest& keyid) const {
  return ccx::derive_key(secrets_, name, identity, svn, keyid, secrets_.owner_epoch_);
}

namespace {

GcmIv version_iv(std::uint64_t version) {
  GcmIv iv{};
  ByteWriter(iv).u64(version).text("PAGE", 4);
  return iv;
}

}  // namespace

Sealed CryptoEngine::page_seal(std::span<const std::uint8_t> plaintext,
                               std::span<const std::uint8_t> aad, std::uint64_t version) const {
  return aes128_gcm_seal(paging_key_, version_iv(version), plaintext, aad);
}

std::optional<Bytes> CryptoEngine::page_unseal(std::span<const std::uint8_t> ciphertext,
                                               std::span<const std::uint8_t> aad,
                                               const Mac128& tag, std::uint64_t version) const {
  return aes128_gcm_open(paging_key_, version_iv(version), ciphertext, aad, tag);
}

Mac128 CryptoEngine::mac(const Key128& key, std::span<const std::uint8_t> data) const {
  if (mac_ == MacAlgorithm::kAesCmac) return aes128_cmac(key, data);
  return truncate<16>(hmac_sha256(key, data));
}

Mac128 CryptoEngine::report_mac(const Key128& key, const ReportBody& body) const {
  return mac(key, body.serialize());
}

SigningKey CryptoEngine::test_signing_key(std::string_view label) const {
  Bytes buf(9 + label.size() + 8);
  ByteWriter(buf).text("TEST-KEY:", 9).text(label, label.size()).u64(secrets_.seed_);
  return SigningKey::from_seed(sha256(buf));
}

}  // namespace ccx
