#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ccx {

inline constexpr std::size_t kGranuleSize = 4096;

using GranuleNum = std::uint64_t;
using PhysAddr = std::uint64_t;
using VirtAddr = std::uint64_t;
using Bytes = std::vector<std::uint8_t>;

using Digest = std::array<std::uint8_t, 32>;
using Key128 = std::array<std::uint8_t, 16>;
using Mac128 = std::array<std::uint8_t, 16>;

enum class EnclaveId : std::uint32_t {};

constexpr std::uint32_t to_underlying(EnclaveId eid) noexcept {
  return static_cast<std::uint32_t>(eid);
}

constexpr PhysAddr granule_base(GranuleNum g) noexcept { return g * kGranuleSize; }
constexpr GranuleNum granule_of(PhysAddr pa) noexcept { return pa / kGranuleSize; }
constexpr std::size_t page_offset(std::uint64_t addr) noexcept { return addr % kGranuleSize; }
constexpr VirtAddr page_floor(VirtAddr va) noexcept { return va - va % kGranuleSize; }

// Security state of whoever issues a memory access.
enum class SecurityState : std::uint8_t { kNormal, kSecure, kRealm, kRoot };

// Protection attribute state stored per granule in a GPT.
enum class Pas : std::uint8_t { kNormal, kSecure, kRealm, kRoot, kNoAccess };

std::string_view to_string(SecurityState s) noexcept;
std::string_view to_string(Pas p) noexcept;

// EPCM page types, numbered as in the SGX PAGE_TYPE field.
enum class PageType : std::uint8_t { kSecs = 0, kTcs = 1, kReg = 2, kVa = 3, kTrim = 4 };

std::string_view to_string(PageType t) noexcept;
std::optional<PageType> page_type_from_string(std::string_view s) noexcept;

struct Perms {
  bool r = false;
  bool w = false;
  bool x = false;

  constexpr std::uint8_t bits() const noexcept {
    return static_cast<std::uint8_t>((r ? 1 : 0) | (w ? 2 : 0) | (x ? 4 : 0));
  }
  static constexpr Perms from_bits(std::uint64_t b) noexcept {
    return Perms{(b & 1) != 0, (b & 2) != 0, (b & 4) != 0};
  }
  constexpr bool subset_of(Perms o) const noexcept { return (bits() & ~o.bits()) == 0; }
  constexpr Perms operator|(Perms o) const noexcept { return from_bits(bits() | o.bits()); }
  friend constexpr bool operator==(Perms, Perms) = default;
};

std::string to_string(Perms p);
std::optional<Perms> perms_from_string(std::string_view s) noexcept;

// Microprogram and runtime status codes. kSuccess is zero so that a trap
// returning x0 == 0 means success, as with SGX's EAX convention.
enum class Status : std::uint32_t {
  kSuccess = 0,
  kInvalidLeaf,
  kInvalidService,
  kInvalidMode,
  kInvalidParameter,
  kGeometry,
  kPageOccupied,
  kOutsideEpc,
  kNotOwner,
  kInvalidPage,
  kAlreadyInitialized,
  kNotInitialized,
  kVaddrCollision,
  kBadTcs,
  kUnmeasurable,
  kMisaligned,
  kSigInvalid,
  kMeasurementMismatch,
  kAttributeMismatch,
  kChildPresent,
  kPageInUse,
  kNonDebugEnclave,
  kAlreadyBlocked,
  kNotBlocked,
  kPrevTrackIncomplete,
  kNotTracked,
  kVaSlotOccupied,
  kMacCompareFail,
  kVersionMismatch,
  kPermExpansion,
  kIllegalTypeTransition,
  kSecinfoMismatch,
  kNotPending,
  kPolicyDenied,
  kTcsBusy,
  kCssaFull,
  kNoSavedState,
  kEnclaveCrashed,
  kGpf,
  kPageFault,
  kOutOfMemory,
};

std::string_view to_string(Status s) noexcept;
std::optional<Status> status_from_string(std::string_view s) noexcept;

// Raised for violations of the simulator's own model (out-of-range granule,
// broken invariant). Distinct from simulated faults and Status codes.
class ModelError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <class E>
struct Unexpected {
  E error;
};

template <class E>
Unexpected(E) -> Unexpected<E>;

// Minimal value-or-error holder (std::expected is C++23).
template <class T, class E>
class Expected {
 public:
  Expected(T value) : v_(std::in_place_index<0>, std::move(value)) {}  // NOLINT
  Expected(Unexpected<E> u) : v_(std::in_place_index<1>, std::move(u.error)) {}  // NOLINT

  bool has_value() const noexcept { return v_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  T& value() & { return checked(); }
  const T& value() const& { return const_cast<Expected*>(this)->checked(); }
  T&& value() && { return std::move(checked()); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

  const E& error() const {
    if (has_value()) throw std::logic_error("Expected::error() on value");
    return std::get<1>(v_);
  }

 private:
  T& checked() {
    if (!has_value()) throw std::logic_error("Expected::value() on error");
    return std::get<0>(v_);
  }
  std::variant<T, E> v_;
};

template <class T>
using Result = Expected<T, Status>;

inline Unexpected<Status> fail(Status s) { return Unexpected<Status>{s}; }

}  // namespace ccx
