#include "truncdse/isa.hpp"

#include "truncdse/bitvec.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace truncdse::isa {

namespace {

constexpr std::array<const char*, kNumRegs> kNames64 = {
    "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
    "r8",  "r9",  "r10", "r11", "r12", "r13", "r14", "r15"};
constexpr std::array<const char*, kNumRegs> kNames32 = {
    "eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi",
    "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d"};
constexpr std::array<const char*, kNumRegs> kNames16 = {
    "ax", "cx", "dx", "bx", "sp", "bp", "si", "di",
    "r8w", "r9w", "r10w", "r11w", "r12w", "r13w", "r14w", "r15w"};
constexpr std::array<const char*, kNumRegs> kNames8 = {
    "al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil",
    "r8b", "r9b", "r10b", "r11b", "r12b", "r13b", "r14b", "r15b"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

bool is_ident(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '.'))
    return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '.';
  });
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s = trim(s.substr(1));
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty())
    return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size())
    return std::nullopt;
  return negative ? static_cast<std::int64_t>(~v + 1) : static_cast<std::int64_t>(v);
}

struct MnemonicInfo {
  Op op;
  ReadHint hint = ReadHint::None;
  unsigned read_bits = 0;
};

std::optional<MnemonicInfo> lookup_mnemonic(const std::string& m) {
  static const std::map<std::string, Op> table = {
      {"mov", Op::Mov},   {"movsx", Op::Movsx}, {"movsxd", Op::Movsx}, {"movzx", Op::Movzx},
      {"cbw", Op::Cbw},   {"cwde", Op::Cwde},   {"cdqe", Op::Cdqe},    {"push", Op::Push},
      {"pop", Op::Pop},   {"add", Op::Add},     {"sub", Op::Sub},      {"and", Op::And},
      {"or", Op::Or},     {"xor", Op::Xor},     {"cmp", Op::Cmp},      {"test", Op::Test},
      {"shl", Op::Shl},   {"sal", Op::Shl},     {"shr", Op::Shr},      {"sar", Op::Sar},
      {"imul", Op::Imul}, {"inc", Op::Inc},     {"dec", Op::Dec},      {"neg", Op::Neg},
      {"not", Op::Not},   {"jmp", Op::Jmp},     {"je", Op::Je},        {"jz", Op::Je},
      {"jne", Op::Jne},   {"jnz", Op::Jne},     {"jl", Op::Jl},        {"jnge", Op::Jl},
      {"jle", Op::Jle},   {"jng", Op::Jle},     {"jg", Op::Jg},        {"jnle", Op::Jg},
      {"jge", Op::Jge},   {"jnl", Op::Jge},     {"jb", Op::Jb},        {"jnae", Op::Jb},
      {"jc", Op::Jb},     {"jbe", Op::Jbe},     {"jna", Op::Jbe},      {"ja", Op::Ja},
      {"jnbe", Op::Ja},   {"jae", Op::Jae},     {"jnb", Op::Jae},      {"jnc", Op::Jae},
      {"call", Op::Call}, {"ret", Op::Ret},     {"print", Op::Print},  {"exit", Op::Exit},
      {"nop", Op::Nop},
  };
  if (auto it = table.find(m); it != table.end())
    return MnemonicInfo{it->second};
  // read_<i|u|b><8|16|32|64>
  if (m.size() >= 7 && m.rfind("read_", 0) == 0) {
    ReadHint hint;
    switch (m[5]) {
    case 'i': hint = ReadHint::Signed; break;
    case 'u': hint = ReadHint::Unsigned; break;
    case 'b': hint = ReadHint::None; break;
    default: return std::nullopt;
    }
    std::string bits = m.substr(6);
    if (bits == "8" || bits == "16" || bits == "32" || bits == "64")
      return MnemonicInfo{Op::Read, hint, static_cast<unsigned>(std::stoul(bits))};
  }
  return std::nullopt;
}

unsigned size_keyword(const std::string& kw) {
  if (kw == "byte") return 1;
  if (kw == "word") return 2;
  if (kw == "dword") return 4;
  if (kw == "qword") return 8;
  return 0;
}

/// Parses one operand; memory operands without a size keyword get size 0.
Operand parse_operand(std::string_view raw, std::size_t line) {
  std::string_view s = trim(raw);
  if (s.empty())
    throw ParseError(line, "empty operand");
  auto bracket = s.find('[');
  if (bracket != std::string_view::npos) {
    unsigned size = 0;
    std::string prefix = lower(trim(s.substr(0, bracket)));
    if (!prefix.empty()) {
      std::istringstream ps(prefix);
      std::string kw, ptr, extra;
      ps >> kw >> ptr >> extra;
      size = size_keyword(kw);
      if (size == 0 || ptr != "ptr" || !extra.empty())
        throw ParseError(line, "bad memory size prefix '" + prefix + "'");
    }
    auto close = s.find(']', bracket);
    if (close == std::string_view::npos || !trim(s.substr(close + 1)).empty())
      throw ParseError(line, "malformed memory operand '" + std::string(s) + "'");
    std::string inner = lower(trim(s.substr(bracket + 1, close - bracket - 1)));
    std::size_t split = inner.find_first_of("+-");
    std::string base_name(trim(inner.substr(0, split)));
    auto base = find_reg_slice(base_name);
    if (!base)
      throw ParseError(line, "unknown base register '" + base_name + "'");
    std::int64_t disp = 0;
    if (split != std::string::npos) {
      auto d = parse_int(inner.substr(split));
      if (!d)
        throw ParseError(line, "bad displacement in '" + inner + "'");
      disp = *d;
    }
    return MemRef{*base, disp, size};
  }
  std::string low = lower(s);
  if (auto r = find_reg_slice(low))
    return *r;
  if (auto v = parse_int(s))
    return Imm{*v};
  if (is_ident(s))
    return LabelRef{std::string(s), 0};
  throw ParseError(line, "cannot parse operand '" + std::string(s) + "'");
}

std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty())
    return out;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[')
      ++depth;
    else if (s[i] == ']')
      --depth;
    else if (s[i] == ',' && depth == 0) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(s.substr(start));
  return out;
}

bool is_reg(const Operand& o) { return std::holds_alternative<RegisterSlice>(o); }
bool is_mem(const Operand& o) { return std::holds_alternative<MemRef>(o); }
bool is_imm(const Operand& o) { return std::holds_alternative<Imm>(o); }
bool is_label(const Operand& o) { return std::holds_alternative<LabelRef>(o); }
bool is_rm(const Operand& o) { return is_reg(o) || is_mem(o); }

unsigned raw_size(const Operand& o) {
  if (auto r = std::get_if<RegisterSlice>(&o))
    return r->bytes();
  if (auto m = std::get_if<MemRef>(&o))
    return m->size;
  return 0;
}

void set_mem_size(Operand& o, unsigned size) {
  if (auto m = std::get_if<MemRef>(&o); m && m->size == 0)
    m->size = size;
}

void require_mem_size(const Operand& o, std::size_t line) {
  if (auto m = std::get_if<MemRef>(&o); m && m->size == 0)
    throw ParseError(line, "memory operand needs a BYTE/WORD/DWORD/QWORD PTR size");
}

void check_imm_fits(const Operand& o, unsigned size, std::size_t line) {
  auto imm = std::get_if<Imm>(&o);
  if (!imm || size >= 8)
    return;
  std::int64_t v = imm->value;
  std::int64_t lo = -(std::int64_t{1} << (8 * size - 1));
  std::int64_t hi = static_cast<std::int64_t>(bv::mask(8 * size));
  if (v < lo || v > hi)
    throw ParseError(line, "immediate " + std::to_string(v) + " does not fit in " +
                               std::to_string(size) + " bytes");
}

void validate(Instruction& insn) {
  auto& ops = insn.operands;
  const std::size_t line = insn.line;
  auto want = [&](std::size_t n) {
    if (ops.size() != n)
      throw ParseError(line, "'" + insn.mnemonic + "' takes " + std::to_string(n) +
                                 " operand(s), got " + std::to_string(ops.size()));
  };
  auto bad = [&](const std::string& why) {
    throw ParseError(line, "bad operands for '" + insn.mnemonic + "': " + why);
  };
  // Two-operand forms that need matching sizes.
  auto same_size_pair = [&](bool allow_imm_src) {
    want(2);
    if (!is_rm(ops[0]))
      bad("destination must be a register or memory");
    if (!(is_rm(ops[1]) || (allow_imm_src && is_imm(ops[1]))))
      bad("invalid source operand");
    if (is_mem(ops[0]) && is_mem(ops[1]))
      bad("two memory operands");
    unsigned s0 = raw_size(ops[0]), s1 = raw_size(ops[1]);
    if (s0 == 0 && s1 != 0)
      set_mem_size(ops[0], s1);
    if (s1 == 0 && s0 != 0 && is_mem(ops[1]))
      set_mem_size(ops[1], s0);
    require_mem_size(ops[0], line);
    require_mem_size(ops[1], line);
    if (!is_imm(ops[1]) && raw_size(ops[0]) != raw_size(ops[1]))
      bad("operand sizes differ");
    check_imm_fits(ops[1], raw_size(ops[0]), line);
  };

  switch (insn.op) {
  case Op::Mov:
  case Op::Add: case Op::Sub: case Op::And: case Op::Or: case Op::Xor:
  case Op::Cmp: case Op::Test:
    same_size_pair(true);
    break;
  case Op::Imul:
    same_size_pair(true);
    if (!is_reg(ops[0]))
      bad("destination must be a register");
    break;
  case Op::Movsx:
  case Op::Movzx:
    want(2);
    if (!is_reg(ops[0]) || !is_rm(ops[1]))
      bad("expected register, register/memory");
    require_mem_size(ops[1], line);
    if (raw_size(ops[1]) >= raw_size(ops[0]))
      bad("source must be narrower than destination");
    break;
  case Op::Shl: case Op::Shr: case Op::Sar:
    want(2);
    if (!is_rm(ops[0]) || !is_imm(ops[1]))
      bad("expected register/memory, immediate count");
    require_mem_size(ops[0], line);
    if (std::get<Imm>(ops[1]).value < 0 || std::get<Imm>(ops[1]).value > 63)
      bad("shift count out of range");
    break;
  case Op::Inc: case Op::Dec: case Op::Neg: case Op::Not:
    want(1);
    if (!is_rm(ops[0]))
      bad("expected register or memory");
    require_mem_size(ops[0], line);
    break;
  case Op::Push:
    want(1);
    if (!(is_rm(ops[0]) || is_imm(ops[0])))
      bad("expected register, memory or immediate");
    require_mem_size(ops[0], line);
    if (!is_imm(ops[0]) && raw_size(ops[0]) == 1)
      bad("cannot push a byte");
    break;
  case Op::Pop:
    want(1);
    if (!is_rm(ops[0]))
      bad("expected register or memory");
    require_mem_size(ops[0], line);
    if (raw_size(ops[0]) == 1)
      bad("cannot pop a byte");
    break;
  case Op::Jmp: case Op::Je: case Op::Jne: case Op::Jl: case Op::Jle: case Op::Jg:
  case Op::Jge: case Op::Jb: case Op::Jbe: case Op::Ja: case Op::Jae: case Op::Call:
    want(1);
    if (!is_label(ops[0]))
      bad("expected a label");
    break;
  case Op::Cbw: case Op::Cwde: case Op::Cdqe: case Op::Ret: case Op::Exit: case Op::Nop:
    want(0);
    break;
  case Op::Read:
    want(1);
    if (!is_rm(ops[0]))
      bad("expected register or memory destination");
    set_mem_size(ops[0], insn.read_bits / 8);
    if (raw_size(ops[0]) != insn.read_bits / 8)
      bad("destination size does not match read width");
    break;
  case Op::Print:
    want(1);
    if (!(is_rm(ops[0]) || is_imm(ops[0])))
      bad("expected register, memory or immediate");
    require_mem_size(ops[0], line);
    break;
  }
}

}  // namespace

const char* reg_name(Reg r) { return kNames64[static_cast<std::size_t>(r)]; }

std::optional<RegisterSlice> find_reg_slice(std::string_view name) {
  std::string n = lower(name);
  for (std::size_t i = 0; i < kNumRegs; ++i) {
    Reg r = static_cast<Reg>(i);
    if (n == kNames64[i]) return RegisterSlice{r, 63, 0};
    if (n == kNames32[i]) return RegisterSlice{r, 31, 0};
    if (n == kNames16[i]) return RegisterSlice{r, 15, 0};
    if (n == kNames8[i]) return RegisterSlice{r, 7, 0};
  }
  return std::nullopt;
}

RegisterSlice reg_slice(std::string_view name) {
  if (auto r = find_reg_slice(name))
    return *r;
  throw std::invalid_argument("unknown register '" + std::string(name) + "'");
}

std::string slice_name(const RegisterSlice& s) {
  auto i = static_cast<std::size_t>(s.reg);
  switch (s.bits()) {
  case 64: return kNames64[i];
  case 32: return kNames32[i];
  case 16: return kNames16[i];
  default: return kNames8[i];
  }
}

bool is_conditional_jump(Op op) { return op >= Op::Je && op <= Op::Jae; }
bool is_signed_jump(Op op) { return op >= Op::Jl && op <= Op::Jge; }
bool is_unsigned_jump(Op op) { return op >= Op::Jb && op <= Op::Jae; }
bool is_mov_family(Op op) { return op == Op::Mov || op == Op::Movsx || op == Op::Movzx; }
bool is_conversion(Op op) { return op == Op::Cbw || op == Op::Cwde || op == Op::Cdqe; }

Program parse_program(std::string_view text) {
  Program prog;
  std::vector<std::string> pending_labels;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos)
      eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    // Leading labels.
    for (;;) {
      auto colon = line.find(':');
      if (colon == std::string_view::npos)
        break;
      std::string_view name = trim(line.substr(0, colon));
      if (!is_ident(name) || name.find(' ') != std::string_view::npos)
        break;
      std::string label(name);
      if (prog.labels.count(label) ||
          std::find(pending_labels.begin(), pending_labels.end(), label) != pending_labels.end())
        throw ParseError(line_no, "duplicate label '" + label + "'");
      pending_labels.push_back(label);
      line = trim(line.substr(colon + 1));
    }
    if (line.empty())
      continue;

    Instruction insn;
    insn.index = prog.insns.size();
    insn.line = line_no;
    insn.text = std::string(line);
    auto space = line.find_first_of(" \t");
    insn.mnemonic = lower(line.substr(0, space));
    auto info = lookup_mnemonic(insn.mnemonic);
    if (!info)
      throw ParseError(line_no, "unknown mnemonic '" + insn.mnemonic + "'");
    insn.op = info->op;
    insn.read_hint = info->hint;
    insn.read_bits = info->read_bits;
    if (space != std::string_view::npos)
      for (auto raw : split_operands(line.substr(space)))
        insn.operands.push_back(parse_operand(raw, line_no));
    validate(insn);
    for (auto& l : pending_labels)
      prog.labels.emplace(l, insn.index);
    insn.labels = std::move(pending_labels);
    pending_labels.clear();
    prog.insns.push_back(std::move(insn));
    if (eol == text.size())
      break;
  }
  for (auto& l : pending_labels)
    prog.labels.emplace(l, prog.insns.size());

  for (auto& insn : prog.insns)
    for (auto& op : insn.operands)
      if (auto lr = std::get_if<LabelRef>(&op)) {
        auto it = prog.labels.find(lr->name);
        if (it == prog.labels.end())
          throw ParseError(insn.line, "unresolved label '" + lr->name + "'");
        lr->target = it->second;
      }
  if (auto it = prog.labels.find("main"); it != prog.labels.end())
    prog.entry = it->second;
  return prog;
}

unsigned operand_size(const Instruction& insn, std::size_t i) {
  const Operand& o = insn.operands.at(i);
  if (unsigned s = raw_size(o))
    return s;
  if (is_imm(o)) {
    if (insn.op == Op::Push || insn.op == Op::Print)
      return 8;
    for (std::size_t j = 0; j < insn.operands.size(); ++j)
      if (j != i && raw_size(insn.operands[j]))
        return raw_size(insn.operands[j]);
    return 8;
  }
  return 0;
}

// Memory.

Memory::Memory() : stack_(kStackSize, 0), data_(kDataSize, 0) {}

const std::uint8_t* Memory::locate(std::uint64_t addr, unsigned size) const {
  const std::uint64_t stack_lo = kStackTop - kStackSize;
  if (addr >= stack_lo && addr + size <= kStackTop && addr + size > addr)
    return stack_.data() + (addr - stack_lo);
  if (addr >= kDataBase && addr + size <= kDataBase + kDataSize && addr + size > addr)
    return data_.data() + (addr - kDataBase);
  return nullptr;
}

bool Memory::valid(std::uint64_t addr, unsigned size) const { return locate(addr, size) != nullptr; }

std::uint8_t Memory::byte(std::uint64_t addr) const { return static_cast<std::uint8_t>(load(addr, 1)); }

void Memory::set_byte(std::uint64_t addr, std::uint8_t v) { store(addr, 1, v); }

std::uint64_t Memory::load(std::uint64_t addr, unsigned size) const {
  const std::uint8_t* p = locate(addr, size);
  if (!p) {
    std::ostringstream os;
    os << "memory read of " << size << " bytes at 0x" << std::hex << addr << " outside mapped windows";
    throw MemoryFault(os.str());
  }
  std::uint64_t v = 0;
  for (unsigned i = 0; i < size; ++i)
    v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

void Memory::store(std::uint64_t addr, unsigned size, std::uint64_t v) {
  auto* p = const_cast<std::uint8_t*>(locate(addr, size));
  if (!p) {
    std::ostringstream os;
    os << "memory write of " << size << " bytes at 0x" << std::hex << addr << " outside mapped windows";
    throw MemoryFault(os.str());
  }
  for (unsigned i = 0; i < size; ++i)
    p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Execution.

CpuState initial_state(const Program& p) {
  CpuState s;
  s.reg(Reg::rsp) = kStackTop;
  s.pc = p.entry;
  return s;
}

std::uint64_t read_slice(const CpuState& s, const RegisterSlice& r) {
  return (s.reg(r.reg) >> r.low) & bv::mask(r.bits());
}

void write_slice(CpuState& s, const RegisterSlice& r, std::uint64_t v) {
  std::uint64_t& full = s.reg(r.reg);
  const std::uint64_t m = bv::mask(r.bits());
  if (r.bits() == 64)
    full = v;
  else if (r.bits() == 32)
    full = v & m;
  else
    full = (full & ~(m << r.low)) | ((v & m) << r.low);
}

std::uint64_t effective_address(const CpuState& s, const MemRef& m) {
  return read_slice(s, m.base) + static_cast<std::uint64_t>(m.disp);
}

std::uint64_t read_operand(const CpuState& s, const Operand& op, unsigned size) {
  if (auto r = std::get_if<RegisterSlice>(&op))
    return read_slice(s, *r);
  if (auto m = std::get_if<MemRef>(&op))
    return s.mem.load(effective_address(s, *m), m->size);
  if (auto i = std::get_if<Imm>(&op))
    return static_cast<std::uint64_t>(i->value) & bv::mask(8 * size);
  throw std::logic_error("read_operand: label operand has no value");
}

bool branch_taken(Op op, const Flags& f) {
  switch (op) {
  case Op::Jmp: return true;
  case Op::Je: return f.zf;
  case Op::Jne: return !f.zf;
  case Op::Jl: return f.sf != f.of;
  case Op::Jle: return f.zf || f.sf != f.of;
  case Op::Jg: return !f.zf && f.sf == f.of;
  case Op::Jge: return f.sf == f.of;
  case Op::Jb: return f.cf;
  case Op::Jbe: return f.cf || f.zf;
  case Op::Ja: return !f.cf && !f.zf;
  case Op::Jae: return !f.cf;
  default: return false;
  }
}

namespace {

void write_operand(CpuState& s, const Operand& op, std::uint64_t v) {
  if (auto r = std::get_if<RegisterSlice>(&op))
    write_slice(s, *r, v);
  else if (auto m = std::get_if<MemRef>(&op))
    s.mem.store(effective_address(s, *m), m->size, v);
  else
    throw std::logic_error("write_operand: not a destination");
}

bool msb(std::uint64_t v, unsigned bits) { return (v >> (bits - 1)) & 1; }

void set_zs(Flags& f, std::uint64_t r, unsigned bits) {
  f.zf = (r & bv::mask(bits)) == 0;
  f.sf = msb(r, bits);
}

void push_value(CpuState& s, unsigned size, std::uint64_t v) {
  s.reg(Reg::rsp) -= size;
  s.mem.store(s.reg(Reg::rsp), size, v);
}

std::uint64_t pop_value(CpuState& s, unsigned size) {
  std::uint64_t v = s.mem.load(s.reg(Reg::rsp), size);
  s.reg(Reg::rsp) += size;
  return v;
}

StepEvent execute(CpuState& s, const Instruction& insn, InputCursor& in) {
  const auto& ops = insn.operands;
  std::size_t next = insn.index + 1;
  auto size0 = [&]() { return operand_size(insn, 0); };
  auto val = [&](std::size_t i) { return read_operand(s, ops[i], operand_size(insn, i)); };
  StepEvent ev = StepEvent::Continue;

  switch (insn.op) {
  case Op::Mov:
    write_operand(s, ops[0], val(1));
    break;
  case Op::Movzx:
    write_operand(s, ops[0], val(1));
    break;
  case Op::Movsx: {
    unsigned src_bits = 8 * operand_size(insn, 1);
    write_operand(s, ops[0], static_cast<std::uint64_t>(bv::to_signed(val(1), src_bits)));
    break;
  }
  case Op::Cbw:
    write_slice(s, {Reg::rax, 15, 0}, static_cast<std::uint64_t>(bv::to_signed(s.reg(Reg::rax), 8)));
    break;
  case Op::Cwde:
    write_slice(s, {Reg::rax, 31, 0}, static_cast<std::uint64_t>(bv::to_signed(s.reg(Reg::rax), 16)));
    break;
  case Op::Cdqe:
    write_slice(s, {Reg::rax, 63, 0}, static_cast<std::uint64_t>(bv::to_signed(s.reg(Reg::rax), 32)));
    break;
  case Op::Push: {
    unsigned size = size0();
    push_value(s, size, val(0));
    break;
  }
  case Op::Pop: {
    unsigned size = size0();
    std::uint64_t v = pop_value(s, size);
    write_operand(s, ops[0], v);
    break;
  }
  case Op::Add:
  case Op::Sub:
  case Op::Cmp: {
    const unsigned bits = 8 * size0();
    const std::uint64_t m = bv::mask(bits);
    std::uint64_t a = val(0), b = val(1);
    bool is_add = insn.op == Op::Add;
    std::uint64_t r = (is_add ? a + b : a - b) & m;
    s.flags.cf = is_add ? r < a : a < b;
    bool sa = msb(a, bits), sb = msb(b, bits), sr = msb(r, bits);
    s.flags.of = is_add ? (sa == sb && sr != sa) : (sa != sb && sr != sa);
    set_zs(s.flags, r, bits);
    if (insn.op != Op::Cmp)
      write_operand(s, ops[0], r);
    break;
  }
  case Op::And:
  case Op::Or:
  case Op::Xor:
  case Op::Test: {
    const unsigned bits = 8 * size0();
    std::uint64_t a = val(0), b = val(1);
    std::uint64_t r = insn.op == Op::Or ? a | b : insn.op == Op::Xor ? a ^ b : a & b;
    s.flags.cf = s.flags.of = false;
    set_zs(s.flags, r, bits);
    if (insn.op != Op::Test)
      write_operand(s, ops[0], r);
    break;
  }
  case Op::Inc:
  case Op::Dec: {
    const unsigned bits = 8 * size0();
    std::uint64_t a = val(0);
    std::uint64_t r = (insn.op == Op::Inc ? a + 1 : a - 1) & bv::mask(bits);
    s.flags.of = insn.op == Op::Inc ? (!msb(a, bits) && msb(r, bits)) : (msb(a, bits) && !msb(r, bits));
    set_zs(s.flags, r, bits);
    write_operand(s, ops[0], r);
    break;
  }
  case Op::Neg: {
    const unsigned bits = 8 * size0();
    std::uint64_t a = val(0);
    std::uint64_t r = (~a + 1) & bv::mask(bits);
    s.flags.cf = a != 0;
    s.flags.of = a == (std::uint64_t{1} << (bits - 1));
    set_zs(s.flags, r, bits);
    write_operand(s, ops[0], r);
    break;
  }
  case Op::Not:
    write_operand(s, ops[0], ~val(0) & bv::mask(8 * size0()));
    break;
  case Op::Shl:
  case Op::Shr:
  case Op::Sar: {
    const unsigned bits = 8 * size0();
    const std::uint64_t m = bv::mask(bits);
    unsigned count = static_cast<unsigned>(std::get<Imm>(ops[1]).value) & (bits == 64 ? 63 : 31);
    std::uint64_t a = val(0);
    if (count == 0) {
      // flags unchanged
      write_operand(s, ops[0], a);
      break;
    }
    std::uint64_t r;
    bool cf;
    if (insn.op == Op::Shl) {
      r = count >= bits ? 0 : (a << count) & m;
      cf = count <= bits ? ((a >> (bits - count)) & 1) : false;
      s.flags.of = count == 1 ? (msb(r, bits) != cf) : false;
    } else if (insn.op == Op::Shr) {
      r = count >= bits ? 0 : a >> count;
      cf = count <= bits ? ((a >> (count - 1)) & 1) : false;
      s.flags.of = count == 1 ? msb(a, bits) : false;
    } else {
      std::int64_t sa = bv::to_signed(a, bits);
      r = static_cast<std::uint64_t>(count >= bits ? (sa < 0 ? -1 : 0) : sa >> count) & m;
      cf = (static_cast<std::uint64_t>(sa >> std::min(count - 1, 63u))) & 1;
      s.flags.of = false;
    }
    s.flags.cf = cf;
    set_zs(s.flags, r, bits);
    write_operand(s, ops[0], r);
    break;
  }
  case Op::Imul: {
    const unsigned bits = 8 * size0();
    __int128 full = static_cast<__int128>(bv::to_signed(val(0), bits)) *
                    static_cast<__int128>(bv::to_signed(val(1), bits));
    std::uint64_t r = static_cast<std::uint64_t>(full) & bv::mask(bits);
    bool overflow = static_cast<__int128>(bv::to_signed(r, bits)) != full;
    s.flags.cf = s.flags.of = overflow;
    set_zs(s.flags, r, bits);
    write_operand(s, ops[0], r);
    break;
  }
  case Op::Jmp: case Op::Je: case Op::Jne: case Op::Jl: case Op::Jle: case Op::Jg:
  case Op::Jge: case Op::Jb: case Op::Jbe: case Op::Ja: case Op::Jae:
    if (branch_taken(insn.op, s.flags))
      next = std::get<LabelRef>(ops[0]).target;
    break;
  case Op::Call:
    push_value(s, 8, insn.index + 1);
    ++s.depth;
    next = std::get<LabelRef>(ops[0]).target;
    break;
  case Op::Ret:
    if (s.depth == 0) {
      ev = StepEvent::ReturnFromEntry;
      break;
    }
    next = static_cast<std::size_t>(pop_value(s, 8));
    --s.depth;
    break;
  case Op::Read: {
    const unsigned nbytes = insn.read_bits / 8;
    std::uint64_t v = 0;
    for (unsigned i = 0; i < nbytes; ++i) {
      std::uint8_t b = 0;
      if (in.pos < in.bytes.size())
        b = in.bytes[in.pos];
      else
        in.short_read = true;
      ++in.pos;
      v |= std::uint64_t{b} << (8 * i);
    }
    ++in.reads;
    write_operand(s, ops[0], v);
    break;
  }
  case Op::Print: {
    unsigned size = operand_size(insn, 0);
    s.output.push_back(bv::to_signed(val(0), 8 * size));
    break;
  }
  case Op::Exit:
    ev = StepEvent::Exit;
    break;
  case Op::Nop:
    break;
  }
  s.pc = next;
  return ev;
}

}  // namespace

StepEvent step_concrete(CpuState& s, const Instruction& insn, InputCursor& in) {
  try {
    return execute(s, insn, in);
  } catch (const MemoryFault& e) {
    throw Trap(insn.index, e.what());
  }
}

}  // namespace truncdse::isa
