#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace ccx {

enum class LeafClass : std::uint8_t { kEncls, kEnclu };

enum class Leaf : std::uint8_t {
  // ENCLS
  kEcreate,
  kEadd,
  kEinit,
  kEremove,
  kEdbgrd,
  kEdbgwr,
  kEextend,
  kEldb,
  kEldu,
  kEblock,
  kEpa,
  kEwb,
  kEtrack,
  kEaug,
  kEmodpr,
  kEmodt,
  // ENCLU
  kEreport,
  kEgetkey,
  kEenter,
  kEresume,
  kEexit,
  kEaccept,
  kEmodpe,
  kEacceptcopy,
  kEdeccssa,
};

inline constexpr std::size_t kLeafCount = 25;

struct LeafInfo {
  Leaf leaf;
  LeafClass cls;
  std::uint8_t number;
  std::string_view name;
};

inline constexpr std::array<LeafInfo, kLeafCount> kLeaves = {{
    {Leaf::kEcreate, LeafClass::kEncls, 0x0, "ECREATE"},
    {Leaf::kEadd, LeafClass::kEncls, 0x1, "EADD"},
    {Leaf::kEinit, LeafClass::kEncls, 0x2, "EINIT"},
    {Leaf::kEremove, LeafClass::kEncls, 0x3, "EREMOVE"},
    {Leaf::kEdbgrd, LeafClass::kEncls, 0x4, "EDBGRD"},
    {Leaf::kEdbgwr, LeafClass::kEncls, 0x5, "EDBGWR"},
    {Leaf::kEextend, LeafClass::kEncls, 0x6, "EEXTEND"},
    {Leaf::kEldb, LeafClass::kEncls, 0x7, "ELDB"},
    {Leaf::kEldu, LeafClass::kEncls, 0x8, "ELDU"},
    {Leaf::kEblock, LeafClass::kEncls, 0x9, "EBLOCK"},
    {Leaf::kEpa, LeafClass::kEncls, 0xA, "EPA"},
    {Leaf::kEwb, LeafClass::kEncls, 0xB, "EWB"},
    {Leaf::kEtrack, LeafClass::kEncls, 0xC, "ETRACK"},
    {Leaf::kEaug, LeafClass::kEncls, 0xD, "EAUG"},
    {Leaf::kEmodpr, LeafClass::kEncls, 0xE, "EMODPR"},
    {Leaf::kEmodt, LeafClass::kEncls, 0xF, "EMODT"},
    {Leaf::kEreport, LeafClass::kEnclu, 0x0, "EREPORT"},
    {Leaf::kEgetkey, LeafClass::kEnclu, 0x1, "EGETKEY"},
    {Leaf::kEenter, LeafClass::kEnclu, 0x2, "EENTER"},
    {Leaf::kEresume, LeafClass::kEnclu, 0x3, "ERESUME"},
    {Leaf::kEexit, LeafClass::kEnclu, 0x4, "EEXIT"},
    {Leaf::kEaccept, LeafClass::kEnclu, 0x5, "EACCEPT"},
    {Leaf::kEmodpe, LeafClass::kEnclu, 0x6, "EMODPE"},
    {Leaf::kEacceptcopy, LeafClass::kEnclu, 0x7, "EACCEPTCOPY"},
    {Leaf::kEdeccssa, LeafClass::kEnclu, 0x9, "EDECCSSA"},
}};

constexpr const LeafInfo& leaf_info(Leaf l) { return kLeaves[static_cast<std::size_t>(l)]; }
constexpr std::string_view to_string(Leaf l) { return leaf_info(l).name; }
constexpr std::uint8_t leaf_number(Leaf l) { return leaf_info(l).number; }

constexpr std::optional<Leaf> decode_leaf(LeafClass cls, std::uint64_t number) {
  for (const auto& info : kLeaves) {
    if (info.cls == cls && info.number == number) return info.leaf;
  }
  return std::nullopt;
}

constexpr std::optional<Leaf> leaf_from_string(std::string_view name) {
  for (const auto& info : kLeaves) {
    if (info.name == name) return info.leaf;
  }
  return std::nullopt;
}

// SMC function identifiers placed in x0 before the trap gadget.
inline constexpr std::uint64_t kSmcEncls = 0xC300CC01;
inline constexpr std::uint64_t kSmcEnclu = 0xC300CC02;
inline constexpr std::uint64_t kSmcCpuid = 0xC300CC03;

}  // namespace ccx
