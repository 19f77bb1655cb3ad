#ifndef TRUNCDSE_ISA_HPP
#define TRUNCDSE_ISA_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace truncdse::isa {

enum class Reg : std::uint8_t {
  rax, rcx, rdx, rbx, rsp, rbp, rsi, rdi,
  r8, r9, r10, r11, r12, r13, r14, r15,
};
inline constexpr std::size_t kNumRegs = 16;

const char* reg_name(Reg r);

/// An x86 register alias: bits high..low of a full 64-bit register. Only
/// the 64/32/16/low-8 aliases exist; ah/bh/ch/dh are not part of the ISA.
struct RegisterSlice {
  Reg reg = Reg::rax;
  unsigned high = 63;
  unsigned low = 0;

  unsigned bits() const { return high - low + 1; }
  unsigned bytes() const { return bits() / 8; }
  bool full() const { return bits() == 64; }
  bool operator==(const RegisterSlice&) const = default;
};

std::optional<RegisterSlice> find_reg_slice(std::string_view name);
/// Throws std::invalid_argument for unknown names.
RegisterSlice reg_slice(std::string_view name);
std::string slice_name(const RegisterSlice& s);

struct MemRef {
  RegisterSlice base;
  std::int64_t disp = 0;
  unsigned size = 0;  // bytes: 1, 2, 4 or 8
  bool operator==(const MemRef&) const = default;
};

struct Imm {
  std::int64_t value = 0;
  bool operator==(const Imm&) const = default;
};

struct LabelRef {
  std::string name;
  std::size_t target = 0;
  bool operator==(const LabelRef&) const = default;
};

using Operand = std::variant<RegisterSlice, MemRef, Imm, LabelRef>;

enum class Op : std::uint8_t {
  Mov, Movsx, Movzx, Cbw, Cwde, Cdqe,
  Push, Pop,
  Add, Sub, And, Or, Xor, Cmp, Test, Shl, Shr, Sar, Imul, Inc, Dec, Neg, Not,
  Jmp, Je, Jne, Jl, Jle, Jg, Jge, Jb, Jbe, Ja, Jae,
  Call, Ret,
  Read, Print, Exit, Nop,
};

bool is_conditional_jump(Op op);
bool is_signed_jump(Op op);
bool is_unsigned_jump(Op op);
bool is_mov_family(Op op);
bool is_conversion(Op op);

/// Signedness hint carried by a read intrinsic.
enum class ReadHint : std::uint8_t { Signed, Unsigned, None };

struct Instruction {
  std::size_t index = 0;
  std::vector<std::string> labels;
  Op op = Op::Nop;
  std::string mnemonic;  // lower-case, as written
  std::vector<Operand> operands;
  std::size_t line = 0;  // 1-based source line
  std::string text;      // source text without comment
  ReadHint read_hint = ReadHint::None;
  unsigned read_bits = 0;
};

struct Program {
  std::vector<Instruction> insns;
  std::map<std::string, std::size_t> labels;
  std::size_t entry = 0;
};

class ParseError : public std::runtime_error {
public:
  ParseError(std::size_t line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line), message_(msg) {}
  std::size_t line() const { return line_; }
  const std::string& message() const { return message_; }

private:
  std::size_t line_;
  std::string message_;
};

/// One instruction per line: `[label:] mnemonic [op1[, op2]]`, `#` comments,
/// memory operands `BYTE|WORD|DWORD|QWORD PTR [reg±disp]`. The entry point
/// is label `main` when present, instruction 0 otherwise.
Program parse_program(std::string_view text);

/// Operand width in bytes (immediates take the width of their partner).
unsigned operand_size(const Instruction& insn, std::size_t i);

// Machine.

inline constexpr std::uint64_t kStackTop = 0x7FFF0000;
inline constexpr std::uint64_t kStackSize = 0x10000;
inline constexpr std::uint64_t kDataBase = 0x10000000;
inline constexpr std::uint64_t kDataSize = 0x10000;

class Trap : public std::runtime_error {
public:
  Trap(std::size_t index, const std::string& msg)
      : std::runtime_error("trap at instruction " + std::to_string(index) + ": " + msg),
        index_(index) {}
  std::size_t index() const { return index_; }

private:
  std::size_t index_;
};

class MemoryFault : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

/// Stack window [kStackTop - kStackSize, kStackTop) and a data window
/// [kDataBase, kDataBase + kDataSize). Everything else faults.
class Memory {
public:
  Memory();
  std::uint8_t byte(std::uint64_t addr) const;
  void set_byte(std::uint64_t addr, std::uint8_t v);
  std::uint64_t load(std::uint64_t addr, unsigned size) const;
  void store(std::uint64_t addr, unsigned size, std::uint64_t v);
  bool valid(std::uint64_t addr, unsigned size) const;

private:
  const std::uint8_t* locate(std::uint64_t addr, unsigned size) const;
  std::vector<std::uint8_t> stack_;
  std::vector<std::uint8_t> data_;
};

struct Flags {
  bool cf = false, zf = false, sf = false, of = false;
};

struct CpuState {
  std::array<std::uint64_t, kNumRegs> regs{};
  Flags flags;
  Memory mem;
  std::size_t pc = 0;
  unsigned depth = 0;  // call depth
  std::vector<std::int64_t> output;

  std::uint64_t reg(Reg r) const { return regs[static_cast<std::size_t>(r)]; }
  std::uint64_t& reg(Reg r) { return regs[static_cast<std::size_t>(r)]; }
};

/// Input bytes consumed by read intrinsics in order.
struct InputCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  std::size_t reads = 0;
  bool short_read = false;
};

CpuState initial_state(const Program& p);

std::uint64_t read_slice(const CpuState& s, const RegisterSlice& r);
/// x86 write rules: 32-bit writes zero bits 63..32; 16/8-bit writes merge.
void write_slice(CpuState& s, const RegisterSlice& r, std::uint64_t v);
std::uint64_t effective_address(const CpuState& s, const MemRef& m);
std::uint64_t read_operand(const CpuState& s, const Operand& op, unsigned size);

bool branch_taken(Op op, const Flags& f);

enum class StepEvent { Continue, Exit, ReturnFromEntry };

/// Executes one instruction and advances pc. Throws Trap on memory faults.
StepEvent step_concrete(CpuState& s, const Instruction& insn, InputCursor& in);

}  // namespace truncdse::isa

#endif  // TRUNCDSE_ISA_HPP
