#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>

#include "ccx/structs.hpp"
#include "ccx/types.hpp"

namespace ccx {

using Block64 = std::array<std::uint8_t, 64>;
using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

// Incremental SHA-256 with value semantics; copying forks the state.
class RunningHash {
 public:
  RunningHash();
  RunningHash(const RunningHash& other);
  RunningHash& operator=(const RunningHash& other);
  RunningHash(RunningHash&&) noexcept;
  RunningHash& operator=(RunningHash&&) noexcept;
  ~RunningHash();

  void absorb(const Block64& block);
  // Finalizes a copy, so the running state stays usable.
  Digest finalize() const;
  std::uint64_t blocks_absorbed() const noexcept { return blocks_; }

 private:
  struct Ctx;
  std::unique_ptr<Ctx> ctx_;
  std::uint64_t blocks_ = 0;
};

Digest sha256(std::span<const std::uint8_t> data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data);
Mac128 aes128_cmac(const Key128& key, std::span<const std::uint8_t> data);

struct Sealed {
  Bytes ciphertext;
  Mac128 tag{};
};

using GcmIv = std::array<std::uint8_t, 12>;

Sealed aes128_gcm_seal(const Key128& key, const GcmIv& iv, std::span<const std::uint8_t> plaintext,
                       std::span<const std::uint8_t> aad);
std::optional<Bytes> aes128_gcm_open(const Key128& key, const GcmIv& iv,
                                     std::span<const std::uint8_t> ciphertext,
                                     std::span<const std::uint8_t> aad, const Mac128& tag);

// Ed25519 keypair. Built from a 32-byte seed so fixtures are reproducible.
class SigningKey {
 public:
  static SigningKey from_seed(const Digest& seed);
  const PublicKey& public_key() const noexcept { return pub_; }
  Signature sign(std::span<const std::uint8_t> msg) const;

 private:
  Digest seed_{};
  PublicKey pub_{};
};

bool ed25519_verify(const PublicKey& pub, std::span<const std::uint8_t> msg, const Signature& sig);

SigStruct sign_sigstruct(const SigningKey& key, const SigBody& body);
// On success returns the signer digest (SHA-256 of the embedded public key).
std::optional<Digest> verify_sigstruct(const SigStruct& sig);
Digest signer_digest(const PublicKey& pub);

enum class MacAlgorithm : std::uint8_t { kAesCmac, kHmacSha256 };

std::string_view to_string(MacAlgorithm m) noexcept;
std::optional<MacAlgorithm> mac_algorithm_from_string(std::string_view s) noexcept;

// Internal key name used for swapped-page encryption; outside the EGETKEY range.
inline constexpr std::uint16_t kPagingKeyName = 0x100;

// Per-machine secret material, derived from the configured seed.
class DeviceSecrets {
 public:
  static DeviceSecrets from_seed(std::uint64_t seed);
  const std::array<std::uint8_t, 16>& owner_epoch() const noexcept { return owner_epoch_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  friend Key128 derive_key(const DeviceSecrets&, std::uint16_t, const Digest&, std::uint16_t,
                           const Digest&, const std::array<std::uint8_t, 16>&);
  friend class CryptoEngine;

  std::uint64_t seed_ = 0;
  Digest root_{};
  std::array<std::uint8_t, 16> owner_epoch_{};
};

// HMAC-SHA-256 over the tuple (name, identity, svn, keyid, owner_epoch),
// truncated to 16 bytes.
Key128 derive_key(const DeviceSecrets& secrets, std::uint16_t name, const Digest& identity,
                  std::uint16_t svn, const Digest& keyid,
                  const std::array<std::uint8_t, 16>& owner_epoch);

class CryptoEngine {
 public:
  CryptoEngine(std::uint64_t seed, MacAlgorithm mac);

  MacAlgorithm mac_algorithm() const noexcept { return mac_; }
  const DeviceSecrets& secrets() const noexcept { return secrets_; }

  Key128 derive_key(std::uint16_t name, const Digest& identity, std::uint16_t svn,
                    const Digest& keyid) const;

  // Page encryption for EWB/ELD*. The version number becomes the GCM IV.
  Sealed page_seal(std::span<const std::uint8_t> plaintext, std::span<const std::uint8_t> aad,
                   std::uint64_t version) const;
  std::optional<Bytes> page_unseal(std::span<const std::uint8_t> ciphertext,
                                   std::span<const std::uint8_t> aad, const Mac128& tag,
                                   std::uint64_t version) const;

  Mac128 report_mac(const Key128& key, const ReportBody& body) const;
  Mac128 mac(const Key128& key, std::span<const std::uint8_t> data) const;

  // Per-boot report key diversifier.
  const Digest& report_keyid() const noexcept { return report_keyid_; }

  // Deterministic fixture signing keys, one per label.
  SigningKey test_signing_key(std::string_view label) const;

 private:
  DeviceSecrets secrets_;
  MacAlgorithm mac_;
  Key128 paging_key_{};
  Digest report_keyid_{};
};

}  // namespace ccx
