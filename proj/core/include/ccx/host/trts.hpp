#pragma once

// Native half of the fixture trusted runtime (fixtures/enclave/trts.s).
// The assembly code reaches these helpers through TCALL; they run with the
// privileges of the calling enclave.

#include <cstdint>

#include "ccx/machine.hpp"

namespace ccx::host {

enum class Selector : std::uint64_t {
  kEcho = 0,
  kAdd = 1,
  kOcall = 2,
  kCompute = 3,
  kRead64 = 4,
  kWrite64 = 5,
  kEaccept = 6,
  kEmodpe = 7,
  kEacceptcopy = 8,
  kSeal = 9,
  kUnseal = 10,
  kReport = 11,
  kVerify = 12,
  kTargetInfo = 13,
  kEgetkey = 14,
  kFill = 15,
  kSum = 16,
  kCall = 17,
  kProbe = 18,
};

std::optional<Selector> selector_from_string(std::string_view s) noexcept;
std::string_view to_string(Selector s) noexcept;

enum class Tcall : std::uint32_t {
  kSeal = 1,
  kUnseal = 2,
  kReport = 3,
  kVerify = 4,
  kTargetInfo = 5,
  kEgetkey = 6,
  kAexSave = 7,
  kAexRestore = 8,
  kFixup = 9,
};

// TLS page offsets shared with trts.s.
namespace tls {
inline constexpr std::uint64_t kSavedSp = 0x0;
inline constexpr std::uint64_t kContinuation = 0x8;
inline constexpr std::uint64_t kNotifyActive = 0x10;
inline constexpr std::uint64_t kHostReturn = 0x18;
inline constexpr std::uint64_t kNotifyCount = 0x20;
inline constexpr std::uint64_t kNotifyCssa = 0x28;
inline constexpr std::uint64_t kNotifyBase = 0x30;
inline constexpr std::uint64_t kFixup = 0x38;  // resume address for a faulting probe
inline constexpr std::uint64_t kSecinfo = 0x40;
inline constexpr std::uint64_t kSavedContext = 0x100;
inline constexpr std::uint64_t kScratch = 0x800;
inline constexpr std::uint64_t kStackTop = 0x1000;
}  // namespace tls

// OCALL exit codes in x5.
inline constexpr std::uint64_t kExitReturn = 0;
inline constexpr std::uint64_t kExitOcall = 1;
inline constexpr std::uint64_t kEnterOret = 0x4F524554;  // "ORET", outside the selector range
// Exception entry after a fault AEX, and its two outcomes.
inline constexpr std::uint64_t kEnterException = 0x45584350;  // "EXCP"
inline constexpr std::uint64_t kExitHandled = 2;
inline constexpr std::uint64_t kExitUnhandled = 3;

inline constexpr std::uint16_t kSealPolicyMrEnclave = kPolicyMrEnclave;
inline constexpr std::uint16_t kSealPolicyMrSigner = kPolicyMrSigner;

// Sealed blob header, followed by the ciphertext.
struct SealHeader {
  std::uint16_t policy = kSealPolicyMrEnclave;
  std::uint16_t isv_svn = 0;
  Digest keyid{};
  Mac128 tag{};
  std::uint32_t length = 0;

  static constexpr std::size_t kBytes = 64;
  void store(std::span<std::uint8_t> out) const;
  static SealHeader load(std::span<const std::uint8_t> in);
  // Authenticated header bytes (tag field zeroed).
  std::array<std::uint8_t, kBytes> aad() const;
};

void register_trts(Machine& m);

}  // namespace ccx::host
