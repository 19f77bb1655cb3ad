#include "truncdse/state.hpp"

namespace truncdse::engine {

std::optional<bv::Expr> MachineState::slice_expr(const isa::RegisterSlice& s) const {
  const auto& full = reg_expr(s.reg);
  if (!full)
    return std::nullopt;
  if (s.full())
    return *full;
  return bv::extract(s.high, s.low, *full);
}

bool MachineState::mem_symbolic(std::uint64_t addr, unsigned size) const {
  auto it = sym_mem.lower_bound(addr);
  return it != sym_mem.end() && it->first < addr + size;
}

std::optional<bv::Expr> MachineState::mem_expr(std::uint64_t addr, unsigned size) const {
  if (!mem_symbolic(addr, size))
    return std::nullopt;
  std::vector<bv::Expr> bytes;
  bytes.reserve(size);
  for (unsigned i = 0; i < size; ++i) {
    auto it = sym_mem.find(addr + i);
    bytes.push_back(it != sym_mem.end() ? it->second : bv::constant(cpu.mem.byte(addr + i), 8));
  }
  // Bytes that are exactly the slices of one value stored earlier read back
  // as that value.
  if (size > 1 && bytes[0].kind() == bv::Kind::Extract) {
    const bv::Node* whole = bytes[0]->kids[0].get();
    bool intact = whole->width == 8 * size;
    for (unsigned i = 0; intact && i < size; ++i)
      intact = bytes[i].kind() == bv::Kind::Extract && bytes[i]->kids[0].get() == whole &&
               bytes[i]->lo == 8 * i && bytes[i]->hi == 8 * i + 7;
    if (intact)
      return bytes[0]->kids[0];
  }
  bv::Expr e = bytes[size - 1];
  for (unsigned i = size - 1; i-- > 0;)
    e = bv::concat(e, bytes[i]);
  return e;
}

std::optional<bv::Expr> MachineState::operand_sym(const isa::Instruction& insn, std::size_t i) const {
  const auto& op = insn.operands.at(i);
  if (auto r = std::get_if<isa::RegisterSlice>(&op))
    return slice_expr(*r);
  if (auto m = std::get_if<isa::MemRef>(&op))
    return mem_expr(isa::effective_address(cpu, *m), m->size);
  return std::nullopt;
}

bv::Expr MachineState::operand_expr(const isa::Instruction& insn, std::size_t i) const {
  if (auto s = operand_sym(insn, i))
    return *s;
  unsigned size = isa::operand_size(insn, i);
  return bv::constant(isa::read_operand(cpu, insn.operands[i], size) & bv::mask(8 * size), 8 * size);
}

bv::Assignment MachineState::seed_assignment() const {
  bv::Assignment a;
  for (const auto& v : inputs)
    a.set(v.id, v.seed_value);
  return a;
}

const InputVariable* MachineState::find_input(std::uint32_t id) const {
  for (const auto& v : inputs)
    if (v.id == id)
      return &v;
  return nullptr;
}

}  // namespace truncdse::engine
