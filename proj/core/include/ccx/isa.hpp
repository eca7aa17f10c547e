#pragma once

// Fixture instruction set run by the vCPU interpreter. Every instruction is
// eight bytes: [op][rd][rn][rm][imm32 little endian]. Register 31 is sp.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ccx/types.hpp"

namespace ccx {

enum class Op : std::uint8_t {
  kHalt = 0,
  kNop,
  kMovi,   // rd = sext(imm)
  kMovw,   // rd = zext(imm)
  kMov,    // rd = rn
  kAdd,
  kSub,
  kMul,
  kEor,
  kOrr,
  kAnd,
  kAddi,   // rd = rn + sext(imm)
  kLsli,
  kLsri,
  kLdr,    // rd = mem64[rn + imm]
  kStr,    // mem64[rn + imm] = rd
  kCbz,    // if rn == 0: pc += imm
  kCbnz,
  kB,
  kBl,     // x30 = pc + 8
  kBr,     // pc = rn
  kBlr,
  kRet,    // pc = x30
  kBeq,    // if rn == rm: pc += imm
  kBne,
  kBltu,
  kAdr,    // rd = pc + imm
  kMrsTpidr,
  kGadget,  // ENCLU/SMC trap gadget
  kTcall,   // trusted runtime helper #imm
};

inline constexpr std::size_t kInsnBytes = 8;
inline constexpr std::uint8_t kRegSp = 31;
inline constexpr std::uint8_t kRegLr = 30;

struct Insn {
  Op op = Op::kHalt;
  std::uint8_t rd = 0;
  std::uint8_t rn = 0;
  std::uint8_t rm = 0;
  std::int32_t imm = 0;

  std::array<std::uint8_t, kInsnBytes> encode() const noexcept;
  // nullopt for an unknown opcode or register index.
  static std::optional<Insn> decode(std::span<const std::uint8_t> bytes) noexcept;
  friend bool operator==(const Insn&, const Insn&) = default;
};

std::string_view mnemonic(Op op) noexcept;
std::string disassemble(const Insn& insn);

struct AsmError {
  int line = 0;
  std::string message;
};

struct Program {
  Bytes image;
  std::map<std::string, std::uint64_t, std::less<>> symbols;  // label -> image offset

  std::uint64_t symbol(std::string_view name) const;
};

// Two-pass assembler. Labels resolve to image offsets; branches are encoded
// pc-relative. Directives: .quad, .zero, .align, .equ.
Expected<Program, AsmError> assemble(std::string_view source);

}  // namespace ccx
