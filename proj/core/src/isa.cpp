#include "ccx/isa.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <stdexcept>
#include <vector>

#include "ccx/bytes.hpp"

namespace ccx {
namespace {

struct OpName {
  Op op;
  std::string_view name;
};

constexpr std::array<OpName, 30> kOps = {{
    {Op::kHalt, "halt"},   {Op::kNop, "nop"},     {Op::kMovi, "movi"},   {Op::kMovw, "movw"},
    {Op::kMov, "mov"},     {Op::kAdd, "add"},     {Op::kSub, "sub"},     {Op::kMul, "mul"},
    {Op::kEor, "eor"},     {Op::kOrr, "orr"},     {Op::kAnd, "and"},     {Op::kAddi, "addi"},
    {Op::kLsli, "lsli"},   {Op::kLsri, "lsri"},   {Op::kLdr, "ldr"},     {Op::kStr, "str"},
    {Op::kCbz, "cbz"},     {Op::kCbnz, "cbnz"},   {Op::kB, "b"},         {Op::kBl, "bl"},
    {Op::kBr, "br"},       {Op::kBlr, "blr"},     {Op::kRet, "ret"},     {Op::kBeq, "beq"},
    {Op::kBne, "bne"},     {Op::kBltu, "bltu"},   {Op::kAdr, "adr"},     {Op::kMrsTpidr, "mrs"},
    {Op::kGadget, "gadget"}, {Op::kTcall, "tcall"},
}};

std::optional<Op> op_from_name(std::string_view s) {
  for (const auto& o : kOps) {
    if (o.name == s) return o.op;
  }
  return std::nullopt;
}

// Operand shapes.
enum class Shape { kNone, kRdImm, kRdRn, kRdRnRm, kRdRnImm, kRdMem, kRnLabel, kLabel, kRn,
                   kRnRmLabel, kRdLabel, kRdSys, kImm };

Shape shape_of(Op op) {
  switch (op) {
    case Op::kHalt:
    case Op::kNop:
    case Op::kRet:
    case Op::kGadget: return Shape::kNone;
    case Op::kMovi:
    case Op::kMovw: return Shape::kRdImm;
    case Op::kMov: return Shape::kRdRn;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kEor:
    case Op::kOrr:
    case Op::kAnd: return Shape::kRdRnRm;
    case Op::kAddi:
    case Op::kLsli:
    case Op::kLsri: return Shape::kRdRnImm;
    case Op::kLdr:
    case Op::kStr: return Shape::kRdMem;
    case Op::kCbz:
    case Op::kCbnz: return Shape::kRnLabel;
    case Op::kB:
    case Op::kBl: return Shape::kLabel;
    case Op::kBr:
    case Op::kBlr: return Shape::kRn;
    case Op::kBeq:
    case Op::kBne:
    case Op::kBltu: return Shape::kRnRmLabel;
    case Op::kAdr: return Shape::kRdLabel;
    case Op::kMrsTpidr: return Shape::kRdSys;
    case Op::kTcall: return Shape::kImm;
  }
  return Shape::kNone;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_ident(std::string_view s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '.';
  });
}

struct Fail {
  std::string message;
};

class Assembler {
 public:
  explicit Assembler(std::string_view src) {
    std::size_t start = 0;
    while (start <= src.size()) {
      std::size_t nl = src.find('\n', start);
      if (nl == std::string_view::npos) nl = src.size();
      lines_.push_back(src.substr(start, nl - start));
      start = nl + 1;
    }
  }

  Expected<Program, AsmError> run() {
    for (pass_ = 1; pass_ <= 2; ++pass_) {
      pc_ = 0;
      for (std::size_t i = 0; i < lines_.size(); ++i) {
        line_no_ = static_cast<int>(i + 1);
        try {
          line(lines_[i]);
        } catch (const Fail& f) {
          return Unexpected(AsmError{line_no_, f.message});
        }
      }
    }
    prog_.symbols = labels_;
    return std::move(prog_);
  }

 private:
  void line(std::string_view raw) {
    std::string_view s = raw;
    for (std::string_view marker : {std::string_view(";"), std::string_view("//")}) {
      if (auto p = s.find(marker); p != std::string_view::npos) s = s.substr(0, p);
    }
    s = trim(s);
    while (!s.empty()) {
      auto colon = s.find(':');
      if (colon == std::string_view::npos) break;
      std::string_view label = trim(s.substr(0, colon));
      if (!is_ident(label)) break;
      define_label(std::string(label));
      s = trim(s.substr(colon + 1));
    }
    if (s.empty()) return;

    std::size_t sp = 0;
    while (sp < s.size() && !std::isspace(static_cast<unsigned char>(s[sp]))) ++sp;
    const std::string head = lower(s.substr(0, sp));
    const std::string_view rest = trim(s.substr(sp));
    if (!head.empty() && head.front() == '.') {
      directive(head, rest);
      return;
    }
    auto op = op_from_name(head);
    if (!op) throw Fail{"unknown mnemonic '" + head + "'"};
    instruction(*op, split_operands(rest));
  }

  void define_label(const std::string& name) {
    if (pass_ == 1) {
      if (labels_.count(name) || equs_.count(name)) throw Fail{"duplicate symbol '" + name + "'"};
      labels_[name] = pc_;
    }
  }

  void directive(const std::string& d, std::string_view rest) {
    if (d == ".equ") {
      auto ops = split_operands(rest);
      if (ops.size() != 2 || !is_ident(ops[0])) throw Fail{".equ expects NAME, value"};
      if (pass_ == 1) {
        const std::string name(ops[0]);
        if (labels_.count(name) || equs_.count(name)) throw Fail{"duplicate symbol '" + name + "'"};
        equs_[name] = value(ops[1], false);
      }
    } else if (d == ".quad") {
      for (auto v : split_operands(rest)) {
        const std::uint64_t x = pass_ == 2 ? static_cast<std::uint64_t>(value(v, true)) : 0;
        std::array<std::uint8_t, 8> b{};
        store_u64(b, 0, x);
        emit(b);
      }
    } else if (d == ".zero") {
      const auto n = value(rest, false);
      if (n < 0) throw Fail{".zero needs a non-negative count"};
      emit(Bytes(static_cast<std::size_t>(n), 0));
    } else if (d == ".align") {
      const auto n = value(rest, false);
      if (n <= 0 || (n & (n - 1)) != 0) throw Fail{".align needs a power of two"};
      const auto a = static_cast<std::uint64_t>(n);
      emit(Bytes((a - pc_ % a) % a, 0));
    } else {
      throw Fail{"unknown directive '" + d + "'"};
    }
  }

  std::vector<std::string_view> split_operands(std::string_view s) {
    std::vector<std::string_view> out;
    s = trim(s);
    if (s.empty()) return out;
    std::size_t depth = 0, start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '[') ++depth;
      if (s[i] == ']') {
        if (depth == 0) throw Fail{"unbalanced ']'"};
        --depth;
      }
      if (s[i] == ',' && depth == 0) {
        out.push_back(trim(s.substr(start, i - start)));
        start = i + 1;
      }
    }
    if (depth != 0) throw Fail{"unbalanced '['"};
    out.push_back(trim(s.substr(start)));
    return out;
  }

  std::int64_t value(std::string_view s, bool allow_labels) {
    s = trim(s);
    if (!s.empty() && s.front() == '#') s = trim(s.substr(1));
    if (s.empty()) throw Fail{"missing value"};
    bool neg = false;
    std::string_view digits = s;
    if (digits.front() == '-') {
      neg = true;
      digits.remove_prefix(1);
    }
    if (!digits.empty() && std::isdigit(static_cast<unsigned char>(digits.front()))) {
      int base = 10;
      if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
        base = 16;
        digits.remove_prefix(2);
      }
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v, base);
      if (ec != std::errc{} || p != digits.data() + digits.size()) {
        throw Fail{"bad number '" + std::string(s) + "'"};
      }
      const auto sv = static_cast<std::int64_t>(v);
      return neg ? -sv : sv;
    }
    const std::string name(digits);
    if (auto it = equs_.find(name); it != equs_.end()) return neg ? -it->second : it->second;
    if (allow_labels) {
      if (pass_ == 1) return 0;
      if (auto it = labels_.find(name); it != labels_.end()) {
        const auto v = static_cast<std::int64_t>(it->second);
        return neg ? -v : v;
      }
    }
    throw Fail{"undefined symbol '" + name + "'"};
  }

  std::int32_t imm32(std::string_view s) {
    if (trim(s).empty() || trim(s).front() != '#') throw Fail{"expected immediate '#...'"};
    const auto v = value(s, false);
    if (v < INT32_MIN || v > static_cast<std::int64_t>(UINT32_MAX)) {
      throw Fail{"immediate out of range"};
    }
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(v));
  }

  std::uint8_t reg(std::string_view s) {
    const std::string r = lower(trim(s));
    if (r == "sp") return kRegSp;
    if (r == "lr") return kRegLr;
    if (r.size() >= 2 && r[0] == 'x') {
      unsigned n = 0;
      auto [p, ec] = std::from_chars(r.data() + 1, r.data() + r.size(), n);
      if (ec == std::errc{} && p == r.data() + r.size() && n <= 30) {
        return static_cast<std::uint8_t>(n);
      }
    }
    throw Fail{"bad register '" + std::string(s) + "'"};
  }

  std::int32_t branch(std::string_view s) {
    if (pass_ == 1) return 0;
    const std::string name(trim(s));
    auto it = labels_.find(name);
    if (it == labels_.end()) throw Fail{"undefined label '" + name + "'"};
    return static_cast<std::int32_t>(static_cast<std::int64_t>(it->second) -
                                     static_cast<std::int64_t>(pc_));
  }

  void instruction(Op op, const std::vector<std::string_view>& ops) {
    Insn in;
    in.op = op;
    auto want = [&](std::size_t n) {
      if (ops.size() != n) {
        throw Fail{std::string(mnemonic(op)) + " expects " + std::to_string(n) + " operand(s)"};
      }
    };
    switch (shape_of(op)) {
      case Shape::kNone: want(0); break;
      case Shape::kRdImm: want(2); in.rd = reg(ops[0]); in.imm = imm32(ops[1]); break;
      case Shape::kRdRn: want(2); in.rd = reg(ops[0]); in.rn = reg(ops[1]); break;
      case Shape::kRdRnRm:
        want(3);
        in.rd = reg(ops[0]);
        in.rn = reg(ops[1]);
        in.rm = reg(ops[2]);
        break;
      case Shape::kRdRnImm:
        want(3);
        in.rd = reg(ops[0]);
        in.rn = reg(ops[1]);
        in.imm = imm32(ops[2]);
        break;
      case Shape::kRdMem: {
        want(2);
        in.rd = reg(ops[0]);
        std::string_view m = ops[1];
        if (m.size() < 2 || m.front() != '[' || m.back() != ']') throw Fail{"expected [xN, #off]"};
        auto parts = split_operands(m.substr(1, m.size() - 2));
        if (parts.empty() || parts.size() > 2) throw Fail{"expected [xN, #off]"};
        in.rn = reg(parts[0]);
        if (parts.size() == 2) in.imm = imm32(parts[1]);
        break;
      }
      case Shape::kRnLabel: want(2); in.rn = reg(ops[0]); in.imm = branch(ops[1]); break;
      case Shape::kLabel: want(1); in.imm = branch(ops[0]); break;
      case Shape::kRn: want(1); in.rn = reg(ops[0]); break;
      case Shape::kRnRmLabel:
        want(3);
        in.rn = reg(ops[0]);
        in.rm = reg(ops[1]);
        in.imm = branch(ops[2]);
        break;
      case Shape::kRdLabel: want(2); in.rd = reg(ops[0]); in.imm = branch(ops[1]); break;
      case Shape::kRdSys:
        want(2);
        in.rd = reg(ops[0]);
        if (lower(ops[1]) != "tpidr_el0") throw Fail{"only tpidr_el0 can be read"};
        break;
      case Shape::kImm: want(1); in.imm = imm32(ops[0]); break;
    }
    emit(in.encode());
  }

  void emit(std::span<const std::uint8_t> b) {
    if (pass_ == 2) prog_.image.insert(prog_.image.end(), b.begin(), b.end());
    pc_ += b.size();
  }

  std::vector<std::string_view> lines_;
  int pass_ = 1;
  int line_no_ = 0;
  std::uint64_t pc_ = 0;
  std::map<std::string, std::uint64_t, std::less<>> labels_;
  std::map<std::string, std::int64_t, std::less<>> equs_;
  Program prog_;
};

}  // namespace

std::array<std::uint8_t, kInsnBytes> Insn::encode() const noexcept {
  std::array<std::uint8_t, kInsnBytes> b{};
  b[0] = static_cast<std::uint8_t>(op);
  b[1] = rd;
  b[2] = rn;
  b[3] = rm;
  const auto u = static_cast<std::uint32_t>(imm);
  for (int i = 0; i < 4; ++i) b[4 + i] = static_cast<std::uint8_t>(u >> (8 * i));
  return b;
}

std::optional<Insn> Insn::decode(std::span<const std::uint8_t> b) noexcept {
  if (b.size() < kInsnBytes || b[0] > static_cast<std::uint8_t>(Op::kTcall)) return std::nullopt;
  if (b[1] > kRegSp || b[2] > kRegSp || b[3] > kRegSp) return std::nullopt;
  Insn in;
  in.op = static_cast<Op>(b[0]);
  in.rd = b[1];
  in.rn = b[2];
  in.rm = b[3];
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= std::uint32_t{b[4 + i]} << (8 * i);
  in.imm = static_cast<std::int32_t>(u);
  return in;
}

std::string_view mnemonic(Op op) noexcept {
  for (const auto& o : kOps) {
    if (o.op == op) return o.name;
  }
  return "?";
}

std::string disassemble(const Insn& in) {
  auto r = [](std::uint8_t n) { return n == kRegSp ? std::string("sp") : "x" + std::to_string(n); };
  auto i = [](std::int32_t v) { return "#" + std::to_string(v); };
  std::string s(mnemonic(in.op));
  switch (shape_of(in.op)) {
    case Shape::kNone: break;
    case Shape::kRdImm: s += " " + r(in.rd) + ", " + i(in.imm); break;
    case Shape::kRdRn: s += " " + r(in.rd) + ", " + r(in.rn); break;
    case Shape::kRdRnRm: s += " " + r(in.rd) + ", " + r(in.rn) + ", " + r(in.rm); break;
    case Shape::kRdRnImm: s += " " + r(in.rd) + ", " + r(in.rn) + ", " + i(in.imm); break;
    case Shape::kRdMem: s += " " + r(in.rd) + ", [" + r(in.rn) + ", " + i(in.imm) + "]"; break;
    case Shape::kRnLabel: s += " " + r(in.rn) + ", " + i(in.imm); break;
    case Shape::kLabel: s += " " + i(in.imm); break;
    case Shape::kRn: s += " " + r(in.rn); break;
    case Shape::kRnRmLabel: s += " " + r(in.rn) + ", " + r(in.rm) + ", " + i(in.imm); break;
    case Shape::kRdLabel: s += " " + r(in.rd) + ", " + i(in.imm); break;
    case Shape::kRdSys: s += " " + r(in.rd) + ", tpidr_el0"; break;
    case Shape::kImm: s += " " + i(in.imm); break;
  }
  return s;
}

std::uint64_t Program::symbol(std::string_view name) const {
  auto it = symbols.find(name);
  if (it == symbols.end()) throw std::out_of_range("no symbol " + std::string(name));
  return it->second;
}

Expected<Program, AsmError> assemble(std::string_view source) { return Assembler(source).run(); }

}  // namespace ccx
