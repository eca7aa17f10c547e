#include "ccx/types.hpp"

#include <algorithm>
#include <cctype>

namespace ccx {
namespace {

struct StatusName {
  Status status;
  std::string_view name;
};

constexpr StatusName kStatusNames[] = {
    {Status::kSuccess, "SUCCESS"},
    {Status::kInvalidLeaf, "INVALID_LEAF"},
    {Status::kInvalidService, "INVALID_SERVICE"},
    {Status::kInvalidMode, "INVALID_MODE"},
    {Status::kInvalidParameter, "INVALID_PARAMETER"},
    {Status::kGeometry, "BAD_GEOMETRY"},
    {Status::kPageOccupied, "PAGE_OCCUPIED"},
    {Status::kOutsideEpc, "OUTSIDE_EPC"},
    {Status::kNotOwner, "NOT_OWNER"},
    {Status::kInvalidPage, "INVALID_PAGE"},
    {Status::kAlreadyInitialized, "ALREADY_INITIALIZED"},
    {Status::kNotInitialized, "NOT_INITIALIZED"},
    {Status::kVaddrCollision, "VADDR_COLLISION"},
    {Status::kBadTcs, "BAD_TCS"},
    {Status::kUnmeasurable, "UNMEASURABLE"},
    {Status::kMisaligned, "MISALIGNED"},
    {Status::kSigInvalid, "SIG_INVALID"},
    {Status::kMeasurementMismatch, "MEASUREMENT_MISMATCH"},
    {Status::kAttributeMismatch, "ATTRIBUTE_MISMATCH"},
    {Status::kChildPresent, "CHILD_PRESENT"},
    {Status::kPageInUse, "PAGE_IN_USE"},
    {Status::kNonDebugEnclave, "NON_DEBUG_ENCLAVE"},
    {Status::kAlreadyBlocked, "ALREADY_BLOCKED"},
    {Status::kNotBlocked, "NOT_BLOCKED"},
    {Status::kPrevTrackIncomplete, "PREV_TRK_INCMPL"},
    {Status::kNotTracked, "NOT_TRACKED"},
    {Status::kVaSlotOccupied, "VA_SLOT_OCCUPIED"},
    {Status::kMacCompareFail, "MAC_COMPARE_FAIL"},
    {Status::kVersionMismatch, "VERSION_MISMATCH"},
    {Status::kPermExpansion, "PERM_EXPANSION_ATTEMPT"},
    {Status::kIllegalTypeTransition, "ILLEGAL_TYPE_TRANSITION"},
    {Status::kSecinfoMismatch, "SECINFO_MISMATCH"},
    {Status::kNotPending, "NOT_PENDING"},
    {Status::kPolicyDenied, "POLICY_DENIED"},
    {Status::kTcsBusy, "TCS_BUSY"},
    {Status::kCssaFull, "CSSA_FULL"},
    {Status::kNoSavedState, "NO_SAVED_STATE"},
    {Status::kEnclaveCrashed, "ENCLAVE_CRASHED"},
    {Status::kGpf, "GPF"},
    {Status::kPageFault, "PAGE_FAULT"},
    {Status::kOutOfMemory, "OUT_OF_MEMORY"},
};

}  // namespace

std::string_view to_string(SecurityState s) noexcept {
  switch (s) {
    case SecurityState::kNormal: return "Normal";
    case SecurityState::kSecure: return "Secure";
    case SecurityState::kRealm: return "Realm";
    case SecurityState::kRoot: return "Root";
  }
  return "?";
}

std::string_view to_string(Pas p) noexcept {
  switch (p) {
    case Pas::kNormal: return "Normal";
    case Pas::kSecure: return "Secure";
    case Pas::kRealm: return "Realm";
    case Pas::kRoot: return "Root";
    case Pas::kNoAccess: return "NoAccess";
  }
  return "?";
}

std::string_view to_string(PageType t) noexcept {
  switch (t) {
    case PageType::kSecs: return "SECS";
    case PageType::kTcs: return "TCS";
    case PageType::kReg: return "REG";
    case PageType::kVa: return "VA";
    case PageType::kTrim: return "TRIM";
  }
  return "?";
}

std::optional<PageType> page_type_from_string(std::string_view s) noexcept {
  for (auto t : {PageType::kSecs, PageType::kTcs, PageType::kReg, PageType::kVa, PageType::kTrim}) {
    std::string_view name = to_string(t);
    if (s.size() == name.size() &&
        std::equal(s.begin(), s.end(), name.begin(),
                   [](char a, char b) { return std::toupper(a) == b; })) {
      return t;
    }
  }
  return std::nullopt;
}

std::string to_string(Perms p) {
  std::string out;
  out += p.r ? 'r' : '-';
  out += p.w ? 'w' : '-';
  out += p.x ? 'x' : '-';
  return out;
}

std::optional<Perms> perms_from_string(std::string_view s) noexcept {
  Perms p;
  if (s == "none" || s == "---") return p;
  for (char c : s) {
    switch (c) {
      case 'r': case 'R': p.r = true; break;
      case 'w': case 'W': p.w = true; break;
      case 'x': case 'X': p.x = true; break;
      case '-': break;
      default: return std::nullopt;
    }
  }
  return p;
}

std::string_view to_string(Status s) noexcept {
  for (const auto& e : kStatusNames) {
    if (e.status == s) return e.name;
  }
  return "UNKNOWN_STATUS";
}

std::optional<Status> status_from_string(std::string_view s) noexcept {
  for (const auto& e : kStatusNames) {
    if (e.name == s) return e.status;
  }
  return std::nullopt;
}

}  // namespace ccx
