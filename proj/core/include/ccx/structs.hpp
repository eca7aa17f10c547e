#pragma once

// Architectural structures exchanged between software and the microprograms,
// with their fixed little-endian byte layouts. docs/abi.md lists the offsets.

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "ccx/types.hpp"

namespace ccx {

// SECS attribute bits (SGX bit positions).
inline constexpr std::uint64_t kAttrInit = 1ull << 0;
inline constexpr std::uint64_t kAttrDebug = 1ull << 1;
inline constexpr std::uint64_t kAttrProvisionKey = 1ull << 4;
inline constexpr std::uint64_t kAttrAexNotify = 1ull << 10;
// Bits software may request at ECREATE; INIT is owned by EINIT.
inline constexpr std::uint64_t kAttrRequestable = kAttrDebug | kAttrProvisionKey | kAttrAexNotify;

// TCS.FLAGS bits.
inline constexpr std::uint64_t kTcsDbgOptIn = 1ull << 0;
inline constexpr std::uint64_t kTcsAexNotify = 1ull << 1;

struct SecInfo {
  PageType type = PageType::kReg;
  Perms perms{};

  // Packed as SGX SECINFO.FLAGS: R/W/X in bits 0..2, PAGE_TYPE in bits 8..15.
  std::uint64_t pack() const noexcept;
  static std::optional<SecInfo> unpack(std::uint64_t flags) noexcept;
  // TCS pages carry no direct-access permissions.
  SecInfo normalized() const noexcept;
  friend bool operator==(const SecInfo&, const SecInfo&) = default;
};

// ECREATE input.
struct SecsTemplate {
  std::uint64_t size = 0;
  VirtAddr base = 0;
  std::uint32_t ssa_frame_size = 1;
  std::uint64_t attributes = 0;

  static constexpr std::size_t kBytes = 32;
  void store(std::span<std::uint8_t> out) const;
  static SecsTemplate load(std::span<const std::uint8_t> in);
};

// Thread control structure; lives in the first bytes of a TCS page.
struct Tcs {
  std::uint64_t busy = 0;
  std::uint64_t flags = 0;
  std::uint64_t ossa = 0;
  std::uint32_t cssa = 0;
  std::uint32_t nssa = 0;
  std::uint64_t oentry = 0;
  std::uint64_t tls_base = 0;

  static constexpr std::size_t kBytes = 48;
  void store(std::span<std::uint8_t> page) const;
  static Tcs load(std::span<const std::uint8_t> page);
  friend bool operator==(const Tcs&, const Tcs&) = default;
};

struct RegisterFile {
  std::array<std::uint64_t, 31> x{};
  std::uint64_t sp = 0;
  std::uint64_t pc = 0;
  std::uint64_t pstate = 0;
  std::uint64_t tpidr = 0;
  friend bool operator==(const RegisterFile&, const RegisterFile&) = default;
};

enum class ExitKind : std::uint64_t { kNone = 0, kInterrupt = 1, kFault = 2, kAbort = 3 };

// Saved execution context for one SSA slot.
struct SsaFrame {
  RegisterFile regs;
  ExitKind exit_kind = ExitKind::kNone;
  std::uint64_t exit_detail = 0;  // faulting address for kFault

  static constexpr std::size_t kBytes = 31 * 8 + 4 * 8 + 16;
  void store(std::span<std::uint8_t> out) const;
  static SsaFrame load(std::span<const std::uint8_t> in);
};

// Version-array page: 512 eight-byte slots, zero meaning empty.
inline constexpr std::size_t kVaSlots = 512;
inline constexpr std::size_t kVaSlotBytes = 8;
static_assert(kVaSlots * kVaSlotBytes <= kGranuleSize);

// ENCLS paging/page-add argument block.
struct PageInfo {
  PhysAddr src = 0;   // source page (EADD) or ciphertext page (EWB/ELD*)
  VirtAddr vaddr = 0;
  PhysAddr aux = 0;   // PCMD location for EWB/ELD*
  std::uint64_t secinfo = 0;
  std::uint64_t eid = 0;

  static constexpr std::size_t kBytes = 40;
  void store(std::span<std::uint8_t> out) const;
  static PageInfo load(std::span<const std::uint8_t> in);
};

// Paging crypto metadata emitted by EWB and consumed by ELDB/ELDU.
struct Pcmd {
  std::uint64_t secinfo = 0;
  std::uint32_t eid = 0;
  std::uint32_t reserved = 0;
  VirtAddr vaddr = 0;
  Mac128 mac{};

  static constexpr std::size_t kBytes = 40;
  void store(std::span<std::uint8_t> out) const;
  static Pcmd load(std::span<const std::uint8_t> in);
  // Additional authenticated data: metadata fields plus the slot version.
  Bytes aad(std::uint64_t version) const;
  friend bool operator==(const Pcmd&, const Pcmd&) = default;
};

struct SigBody {
  Digest enclavehash{};
  std::uint64_t attributes = 0;
  std::uint64_t attribute_mask = 0;
  std::uint16_t isv_prod_id = 0;
  std::uint16_t isv_svn = 0;
  // Ceiling for permissions an enclave may add to its own pages with EMODPE.
  Perms max_page_perms{true, true, true};

  static constexpr std::size_t kBytes = 64;
  // Canonical serialization; this is what the signature covers.
  std::array<std::uint8_t, kBytes> serialize() const;
  static SigBody deserialize(std::span<const std::uint8_t> in);
  friend bool operator==(const SigBody&, const SigBody&) = default;
};

struct SigStruct {
  SigBody body;
  std::array<std::uint8_t, 32> public_key{};
  std::array<std::uint8_t, 64> signature{};

  static constexpr std::size_t kBytes = SigBody::kBytes + 32 + 64;
  Bytes serialize() const;
  static SigStruct deserialize(std::span<const std::uint8_t> in);
  friend bool operator==(const SigStruct&, const SigStruct&) = default;
};

struct TargetInfo {
  Digest mrenclave{};
  std::uint64_t attributes = 0;

  static constexpr std::size_t kBytes = 40;
  void store(std::span<std::uint8_t> out) const;
  static TargetInfo load(std::span<const std::uint8_t> in);
};

using ReportData = std::array<std::uint8_t, 64>;

struct ReportBody {
  std::uint64_t attributes = 0;
  Digest mrenclave{};
  Digest mrsigner{};
  std::uint16_t isv_prod_id = 0;
  std::uint16_t isv_svn = 0;
  ReportData reportdata{};

  static constexpr std::size_t kBytes = 8 + 32 + 32 + 2 + 2 + 4 + 64;
  std::array<std::uint8_t, kBytes> serialize() const;
  static ReportBody deserialize(std::span<const std::uint8_t> in);
  friend bool operator==(const ReportBody&, const ReportBody&) = default;
};

struct Report {
  ReportBody body;
  Digest keyid{};
  Mac128 mac{};

  static constexpr std::size_t kBytes = ReportBody::kBytes + 32 + 16;
  void store(std::span<std::uint8_t> out) const;
  static Report load(std::span<const std::uint8_t> in);
  friend bool operator==(const Report&, const Report&) = default;
};

// EGETKEY key names, numbered as in SGX.
enum class KeyName : std::uint16_t {
  kEinitToken = 0,
  kProvision = 1,
  kProvisionSeal = 2,
  kReport = 3,
  kSeal = 4,
};

inline constexpr std::uint16_t kPolicyMrEnclave = 1u << 0;
inline constexpr std::uint16_t kPolicyMrSigner = 1u << 1;

struct KeyRequest {
  KeyName name = KeyName::kSeal;
  std::uint16_t policy = kPolicyMrEnclave;
  std::uint16_t isv_svn = 0;
  Digest keyid{};

  static constexpr std::size_t kBytes = 40;
  void store(std::span<std::uint8_t> out) const;
  static KeyRequest load(std::span<const std::uint8_t> in);
};

}  // namespace ccx
