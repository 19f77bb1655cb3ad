#ifndef TRUNCDSE_STATE_HPP
#define TRUNCDSE_STATE_HPP

#include "truncdse/bitvec.hpp"
#include "truncdse/isa.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace truncdse::engine {

/// A fresh symbolic variable created by one read intrinsic.
struct InputVariable {
  std::uint32_t id = 0;
  std::string name;
  unsigned width = 0;
  std::size_t read_index = 0;
  std::size_t byte_offset = 0;
  isa::ReadHint hint = isa::ReadHint::None;
  std::uint64_t seed_value = 0;
};

/// One conditional jump on the executed path. `condition` is oriented so
/// that it holds on that path.
struct BranchRecord {
  std::size_t insn = 0;
  isa::Op op = isa::Op::Je;
  std::string mnemonic;
  bool taken = false;
  bv::Expr condition;
  std::set<std::uint32_t> vars;
};

/// Concrete machine plus symbolic shadows of registers (64-bit formulas)
/// and memory (8-bit formulas per byte). Absent entries are concrete.
struct MachineState {
  isa::CpuState cpu;
  std::array<std::optional<bv::Expr>, isa::kNumRegs> sym_regs;
  std::map<std::uint64_t, bv::Expr> sym_mem;
  std::vector<BranchRecord> path;
  std::vector<InputVariable> inputs;
  isa::InputCursor cursor;

  const std::optional<bv::Expr>& reg_expr(isa::Reg r) const {
    return sym_regs[static_cast<std::size_t>(r)];
  }
  std::optional<bv::Expr>& reg_expr(isa::Reg r) { return sym_regs[static_cast<std::size_t>(r)]; }

  /// extract(high, low, phi_reg) for a symbolic register, nullopt otherwise.
  std::optional<bv::Expr> slice_expr(const isa::RegisterSlice& s) const;
  /// Little-endian concatenation of `size` bytes; nullopt when all concrete.
  std::optional<bv::Expr> mem_expr(std::uint64_t addr, unsigned size) const;
  /// Symbolic value of operand `i` in the current (pre-step) state.
  std::optional<bv::Expr> operand_sym(const isa::Instruction& insn, std::size_t i) const;
  /// Symbolic value or constant of operand `i` (width = 8 * operand size).
  bv::Expr operand_expr(const isa::Instruction& insn, std::size_t i) const;

  bool mem_symbolic(std::uint64_t addr, unsigned size) const;

  /// Binds every input variable to its seed value.
  bv::Assignment seed_assignment() const;
  const InputVariable* find_input(std::uint32_t id) const;
};

}  // namespace truncdse::engine

#endif  // TRUNCDSE_STATE_HPP
