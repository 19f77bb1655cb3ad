#include "truncdse/engine.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace truncdse::engine {

using isa::Op;
using isa::Reg;

const char* end_reason_name(EndReason r) {
  switch (r) {
  case EndReason::Exit: return "exit";
  case EndReason::ReturnFromEntry: return "return-from-entry";
  case EndReason::EndOfProgram: return "end-of-program";
  case EndReason::Trap: return "trap";
  case EndReason::StepLimit: return "step-limit";
  }
  return "?";
}

std::vector<const TruncationWarning*> RunReport::sat_warnings() const {
  std::vector<const TruncationWarning*> out;
  for (const auto& w : warnings)
    if (w.verdict.status == solver::Status::Sat)
      out.push_back(&w);
  return out;
}

// SymbolicStepper

SymbolicStepper::Pre SymbolicStepper::capture(const isa::Instruction& insn) const {
  Pre pre;
  pre.regs = st_.cpu.regs;
  pre.flags = st_.cpu.flags;
  pre.depth = st_.cpu.depth;
  pre.input_pos = st_.cursor.pos;
  const std::size_t n = insn.operands.size();
  pre.sym.resize(n);
  pre.exprs.resize(n);
  pre.addrs.resize(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& op = insn.operands[i];
    if (std::holds_alternative<isa::LabelRef>(op))
      continue;
    if (auto m = std::get_if<isa::MemRef>(&op)) {
      pre.addrs[i] = isa::effective_address(st_.cpu, *m);
      if (!st_.cpu.mem.valid(pre.addrs[i], m->size))
        continue;  // the concrete step traps
    }
    pre.sym[i] = st_.operand_sym(insn, i);
    pre.exprs[i] = pre.sym[i] ? *pre.sym[i] : st_.operand_expr(insn, i);
  }
  if (insn.op == Op::Pop) {
    unsigned size = isa::operand_size(insn, 0);
    std::uint64_t sp = st_.cpu.reg(Reg::rsp);
    if (st_.cpu.mem.valid(sp, size))
      pre.stack_sym = st_.mem_expr(sp, size);
  }
  return pre;
}

void SymbolicStepper::write_reg(const isa::RegisterSlice& s, const std::optional<bv::Expr>& v) {
  auto& cur = st_.reg_expr(s.reg);
  if (s.bits() == 64) {
    cur = v;
    return;
  }
  if (s.bits() == 32) {
    cur = v ? std::optional<bv::Expr>(bv::zero_extend(32, *v)) : std::nullopt;
    return;
  }
  // 16/8-bit writes keep bits 63..bits of the register.
  if (!v && !cur)
    return;
  const unsigned bits = s.bits();
  bv::Expr upper = cur ? bv::extract(63, bits, *cur)
                       : bv::constant(st_.cpu.reg(s.reg) >> bits, 64 - bits);
  bv::Expr lower = v ? *v : bv::constant(isa::read_slice(st_.cpu, s), bits);
  cur = bv::concat(upper, lower);
}

void SymbolicStepper::write_mem(std::uint64_t addr, unsigned size, const std::optional<bv::Expr>& v) {
  for (unsigned i = 0; i < size; ++i) {
    if (v)
      st_.sym_mem[addr + i] = size == 1 ? *v : bv::extract(8 * i + 7, 8 * i, *v);
    else
      st_.sym_mem.erase(addr + i);
  }
}

void SymbolicStepper::write_dest(const isa::Instruction& insn, const Pre& pre,
                                 const std::optional<bv::Expr>& v) {
  const auto& dst = insn.operands.at(0);
  if (auto r = std::get_if<isa::RegisterSlice>(&dst))
    write_reg(*r, v);
  else if (auto m = std::get_if<isa::MemRef>(&dst))
    write_mem(pre.addrs[0], m->size, v);
}

std::optional<bv::Expr> SymbolicStepper::jump_condition(Op op) const {
  const auto& f = flags_;
  auto k = [&](bv::Kind kind, const bv::Expr& a, const bv::Expr& b) { return bv::compare(kind, a, b); };
  switch (f.kind) {
  case FlagSource::None:
    return std::nullopt;
  case FlagSource::Sub:
    switch (op) {
    case Op::Je: return k(bv::Kind::Eq, f.a, f.b);
    case Op::Jne: return k(bv::Kind::Ne, f.a, f.b);
    case Op::Jl: return k(bv::Kind::SLt, f.a, f.b);
    case Op::Jle: return k(bv::Kind::SLe, f.a, f.b);
    case Op::Jg: return k(bv::Kind::SGt, f.a, f.b);
    case Op::Jge: return k(bv::Kind::SGe, f.a, f.b);
    case Op::Jb: return k(bv::Kind::ULt, f.a, f.b);
    case Op::Jbe: return k(bv::Kind::ULe, f.a, f.b);
    case Op::Ja: return k(bv::Kind::UGt, f.a, f.b);
    case Op::Jae: return k(bv::Kind::UGe, f.a, f.b);
    default: return std::nullopt;
    }
  case FlagSource::Logic: {
    bv::Expr zero = bv::zeros(f.r.width());
    switch (op) {
    case Op::Je: case Op::Jbe: return k(bv::Kind::Eq, f.r, zero);
    case Op::Jne: case Op::Ja: return k(bv::Kind::Ne, f.r, zero);
    case Op::Jl: return k(bv::Kind::SLt, f.r, zero);
    case Op::Jle: return k(bv::Kind::SLe, f.r, zero);
    case Op::Jg: return k(bv::Kind::SGt, f.r, zero);
    case Op::Jge: return k(bv::Kind::SGe, f.r, zero);
    default: return std::nullopt;  // jb/jae are constant: CF is 0
    }
  }
  case FlagSource::Add:
  case FlagSource::Other: {
    bv::Expr zero = bv::zeros(f.r.width());
    bv::Expr zf = bv::eq(f.r, zero);
    if (op == Op::Je)
      return zf;
    if (op == Op::Jne)
      return bv::ne(f.r, zero);
    if (f.kind != FlagSource::Add)
      return std::nullopt;
    bv::Expr sf = bv::slt(f.r, zero);
    bv::Expr sa = bv::slt(f.a, bv::zeros(f.a.width()));
    bv::Expr sb = bv::slt(f.b, bv::zeros(f.b.width()));
    bv::Expr of = bv::bool_and(bv::eq(sa, sb), bv::ne(sf, sa));
    bv::Expr cf = bv::ult(f.r, f.a);
    switch (op) {
    case Op::Jb: return cf;
    case Op::Jae: return bv::bool_not(cf);
    case Op::Jbe: return bv::bool_or(cf, zf);
    case Op::Ja: return bv::bool_not(bv::bool_or(cf, zf));
    case Op::Jl: return bv::ne(sf, of);
    case Op::Jge: return bv::eq(sf, of);
    case Op::Jle: return bv::bool_or(zf, bv::ne(sf, of));
    case Op::Jg: return bv::bool_and(bv::bool_not(zf), bv::eq(sf, of));
    default: return std::nullopt;
    }
  }
  }
  return std::nullopt;
}

void SymbolicStepper::apply(const isa::Instruction& insn, const Pre& pre,
                            std::vector<std::string>& diagnostics) {
  const auto& ops = insn.operands;
  auto reg_of = [&](std::size_t i) -> std::optional<Reg> {
    if (auto r = std::get_if<isa::RegisterSlice>(&ops.at(i)))
      return r->reg;
    return std::nullopt;
  };
  auto addr_of = [&](std::size_t i) -> std::optional<std::uint64_t> {
    if (std::holds_alternative<isa::MemRef>(ops.at(i)))
      return pre.addrs[i];
    return std::nullopt;
  };

  switch (insn.op) {
  case Op::Mov:
  case Op::Movzx:
  case Op::Movsx: {
    const unsigned dst_size = isa::operand_size(insn, 0);
    const unsigned src_size = isa::operand_size(insn, 1);
    std::optional<bv::Expr> v = pre.sym[1];
    if (v && insn.op != Op::Mov) {
      unsigned extra = 8 * (dst_size - src_size);
      v = insn.op == Op::Movzx ? bv::zero_extend(extra, *v) : bv::sign_extend(extra, *v);
    }
    write_dest(insn, pre, v);
    if (auto dst = reg_of(0))
      sh_.on_load(*dst, reg_of(1), addr_of(1), src_size, pre.sym[1].has_value());
    else
      sh_.on_store(pre.addrs[0], reg_of(1), src_size, pre.sym[1].has_value());
    break;
  }
  case Op::Cbw:
  case Op::Cwde:
  case Op::Cdqe: {
    const unsigned from = insn.op == Op::Cbw ? 8 : insn.op == Op::Cwde ? 16 : 32;
    const auto& rax = st_.reg_expr(Reg::rax);
    if (rax) {
      bv::Expr ext = bv::sign_extend(from, bv::extract(from - 1, 0, *rax));
      write_reg(isa::RegisterSlice{Reg::rax, 2 * from - 1, 0}, ext);
    }
    sh_.on_conversion(insn.op, st_.reg_expr(Reg::rax).has_value());
    break;
  }
  case Op::Push: {
    const unsigned size = isa::operand_size(insn, 0);
    const std::uint64_t sp = pre.regs[static_cast<std::size_t>(Reg::rsp)] - size;
    write_mem(sp, size, pre.sym[0]);
    sh_.on_push(sp, reg_of(0), addr_of(0), size, pre.sym[0].has_value());
    break;
  }
  case Op::Pop: {
    const unsigned size = isa::operand_size(insn, 0);
    const std::uint64_t sp = pre.regs[static_cast<std::size_t>(Reg::rsp)];
    const bool symbolic = pre.stack_sym.has_value();
    if (auto r = std::get_if<isa::RegisterSlice>(&ops[0])) {
      write_reg(*r, pre.stack_sym);
      sh_.on_pop(r->reg, sp, symbolic);
    } else {
      // x86 computes a pop destination address after incrementing rsp
      const std::uint64_t dst = isa::effective_address(st_.cpu, std::get<isa::MemRef>(ops[0]));
      write_mem(dst, size, pre.stack_sym);
      auto tracked = sh_.lookup_memory(sp);
      if (symbolic && tracked)
        sh_.set_memory(dst, *tracked);
      else
        sh_.clear_range(dst, size);
    }
    break;
  }
  case Op::Add: case Op::Sub: case Op::And: case Op::Or: case Op::Xor: case Op::Imul:
  case Op::Shl: case Op::Shr: case Op::Sar: case Op::Inc: case Op::Dec: case Op::Neg:
  case Op::Not: {
    const unsigned size = isa::operand_size(insn, 0);
    const unsigned bits = 8 * size;
    bool symbolic = pre.sym[0] || (ops.size() > 1 && pre.sym[1]);
    // xor r, r and sub r, r always produce zero
    if ((insn.op == Op::Xor || insn.op == Op::Sub) && ops[0] == ops[1])
      symbolic = false;
    std::optional<bv::Expr> result;
    FlagSource fs;
    if (symbolic) {
      const bv::Expr& a = pre.exprs[0];
      bv::Expr b;
      if (insn.op == Op::Shl || insn.op == Op::Shr || insn.op == Op::Sar) {
        auto count = static_cast<std::uint64_t>(std::get<isa::Imm>(ops[1]).value) & (bits == 64 ? 63 : 31);
        b = bv::constant(count, bits);
      } else if (insn.op == Op::Inc || insn.op == Op::Dec) {
        b = bv::constant(1, bits);
      } else if (ops.size() > 1) {
        b = pre.exprs[1];
      }
      switch (insn.op) {
      case Op::Add: result = bv::add(a, b); fs = {FlagSource::Add, a, b, *result}; break;
      case Op::Sub: result = bv::sub(a, b); fs = {FlagSource::Sub, a, b, *result}; break;
      case Op::And: result = bv::bit_and(a, b); fs = {FlagSource::Logic, a, b, *result}; break;
      case Op::Or: result = bv::bit_or(a, b); fs = {FlagSource::Logic, a, b, *result}; break;
      case Op::Xor: result = bv::bit_xor(a, b); fs = {FlagSource::Logic, a, b, *result}; break;
      case Op::Imul: result = bv::mul(a, b); fs = {FlagSource::Other, a, b, *result}; break;
      case Op::Shl: result = bv::shl(a, b); fs = {FlagSource::Other, a, b, *result}; break;
      case Op::Shr: result = bv::lshr(a, b); fs = {FlagSource::Other, a, b, *result}; break;
      case Op::Sar: result = bv::ashr(a, b); fs = {FlagSource::Other, a, b, *result}; break;
      case Op::Inc: result = bv::add(a, b); fs = {FlagSource::Other, a, b, *result}; break;
      case Op::Dec: result = bv::sub(a, b); fs = {FlagSource::Other, a, b, *result}; break;
      case Op::Neg: result = bv::neg(a); fs = {FlagSource::Other, a, a, *result}; break;
      case Op::Not: result = bv::bit_not(a); break;
      default: break;
      }
    }
    write_dest(insn, pre, result);
    if (insn.op != Op::Not) {
      bool count_zero = (insn.op == Op::Shl || insn.op == Op::Shr || insn.op == Op::Sar) &&
                        (std::get<isa::Imm>(ops[1]).value & (bits == 64 ? 63 : 31)) == 0;
      if (!count_zero)
        flags_ = fs;
    }
    if (auto dst = reg_of(0))
      sh_.on_other_write(*dst, size, result.has_value());
    else
      sh_.clear_range(pre.addrs[0], size);
    break;
  }
  case Op::Cmp:
  case Op::Test: {
    if (pre.sym[0] || pre.sym[1]) {
      const bv::Expr& a = pre.exprs[0];
      const bv::Expr& b = pre.exprs[1];
      if (insn.op == Op::Cmp)
        flags_ = {FlagSource::Sub, a, b, bv::sub(a, b)};
      else
        flags_ = {FlagSource::Logic, a, b, bv::bit_and(a, b)};
    } else {
      flags_ = {};
    }
    break;
  }
  case Op::Je: case Op::Jne: case Op::Jl: case Op::Jle: case Op::Jg: case Op::Jge:
  case Op::Jb: case Op::Jbe: case Op::Ja: case Op::Jae: {
    if (flags_.kind == FlagSource::None)
      break;
    auto cond = jump_condition(insn.op);
    if (!cond) {
      diagnostics.push_back("insn " + std::to_string(insn.index) + ": '" + insn.mnemonic +
                            "' after an unmodeled flag setter; branch condition not recorded");
      break;
    }
    const bool taken = isa::branch_taken(insn.op, pre.flags);
    BranchRecord rec;
    rec.insn = insn.index;
    rec.op = insn.op;
    rec.mnemonic = insn.mnemonic;
    rec.taken = taken;
    rec.condition = taken ? *cond : bv::negate(*cond);
    rec.vars = bv::var_ids(rec.condition);
    if (!rec.vars.empty())
      st_.path.push_back(std::move(rec));
    break;
  }
  case Op::Call: {
    const std::uint64_t ret_slot = pre.regs[static_cast<std::size_t>(Reg::rsp)] - 8;
    write_mem(ret_slot, 8, std::nullopt);
    sh_.clear_range(ret_slot, 8);
    sh_.on_call(st_.cpu.reg(Reg::rsp));
    break;
  }
  case Op::Ret:
    if (pre.depth > 0)
      sh_.on_ret();
    break;
  case Op::Read: {
    const unsigned size = insn.read_bits / 8;
    InputVariable in;
    in.id = static_cast<std::uint32_t>(st_.inputs.size());
    in.read_index = st_.cursor.reads - 1;
    in.name = "in" + std::to_string(in.read_index);
    in.width = insn.read_bits;
    in.byte_offset = pre.input_pos;
    in.hint = insn.read_hint;
    if (auto r = std::get_if<isa::RegisterSlice>(&ops[0]))
      in.seed_value = isa::read_slice(st_.cpu, *r);
    else
      in.seed_value = st_.cpu.mem.load(pre.addrs[0], size);
    if (pre.input_pos + size > st_.cursor.bytes.size())
      diagnostics.push_back("insn " + std::to_string(insn.index) + ": input exhausted, read " +
                            std::to_string(in.read_index) + " zero-filled");
    bv::Expr v = bv::var(in.id, in.name, in.width);
    st_.inputs.push_back(in);
    write_dest(insn, pre, v);
    if (auto dst = reg_of(0))
      sh_.on_modeled_function_return(*dst, true, size, true);
    else
      sh_.set_memory(pre.addrs[0], size);
    break;
  }
  case Op::Print:
    sh_.on_modeled_function_return(Reg::rax, false, 0, st_.reg_expr(Reg::rax).has_value());
    break;
  case Op::Jmp: case Op::Exit: case Op::Nop:
    break;
  }
}

std::vector<std::string> check_agreement(const MachineState& st, const bv::Assignment& a) {
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < isa::kNumRegs; ++i) {
    const auto& e = st.sym_regs[i];
    if (!e)
      continue;
    std::uint64_t sym = bv::eval(*e, a);
    if (sym != st.cpu.regs[i]) {
      std::ostringstream os;
      os << isa::reg_name(static_cast<Reg>(i)) << ": symbolic 0x" << std::hex << sym
         << " != concrete 0x" << st.cpu.regs[i];
      bad.push_back(os.str());
    }
  }
  for (const auto& [addr, e] : st.sym_mem) {
    std::uint64_t sym = bv::eval(e, a);
    std::uint64_t conc = st.cpu.mem.byte(addr);
    if (sym != conc) {
      std::ostringstream os;
      os << "mem[0x" << std::hex << addr << "]: symbolic 0x" << sym << " != concrete 0x" << conc;
      bad.push_back(os.str());
    }
  }
  for (const auto& rec : st.path)
    if (bv::eval(rec.condition, a) != 1)
      bad.push_back("branch at insn " + std::to_string(rec.insn) + " does not hold on the seed");
  return bad;
}

RunReport run(const isa::Program& program, std::span<const std::uint8_t> input,
              const EngineConfig& config) {
  MachineState st;
  st.cpu = isa::initial_state(program);
  st.cursor.bytes = input;
  shadow::ShadowTracker sh;
  solver::JobQueue queue(config.solver);
  checker::TruncationChecker checker(queue);
  SymbolicStepper stepper(st, sh);
  RunReport rep;

  auto note_agreement = [&](std::size_t index) {
    auto bad = check_agreement(st, st.seed_assignment());
    rep.agreement_violations += bad.size();
    for (auto& m : bad)
      if (rep.agreement_messages.size() < 32)
        rep.agreement_messages.push_back("after insn " + std::to_string(index) + ": " + m);
  };

  for (;;) {
    if (st.cpu.pc >= program.insns.size()) {
      rep.end = EndReason::EndOfProgram;
      break;
    }
    if (rep.steps >= config.step_limit) {
      rep.end = EndReason::StepLimit;
      rep.complete = false;
      rep.diagnostics.push_back("step limit of " + std::to_string(config.step_limit) + " reached");
      break;
    }
    const isa::Instruction& insn = program.insns[st.cpu.pc];

    if (auto p = checker.inspect(insn, st, sh)) {
      std::ostringstream os;
      os << "job " << p->job_id << ": insn " << insn.index << " line " << insn.line << " '"
         << insn.text << "' " << checker::signedness_name(p->site.sign) << " ("
         << checker::provenance_name(p->site.sign_from) << ") bits [" << p->site.low << ","
         << p->site.high << "]";
      rep.job_log.push_back(os.str());
    }

    auto pre = stepper.capture(insn);
    isa::StepEvent ev;
    try {
      ev = isa::step_concrete(st.cpu, insn, st.cursor);
    } catch (const isa::Trap& t) {
      rep.end = EndReason::Trap;
      rep.complete = false;
      rep.diagnostics.push_back(t.what());
      break;
    }
    ++rep.steps;
    stepper.apply(insn, pre, rep.diagnostics);

    if (config.trace_shadow)
      rep.shadow_trace.push_back(std::to_string(insn.index) + " " + sh.dump());
    if (config.check_agreement)
      note_agreement(insn.index);
    if (ev == isa::StepEvent::Exit) {
      rep.end = EndReason::Exit;
      break;
    }
    if (ev == isa::StepEvent::ReturnFromEntry) {
      rep.end = EndReason::ReturnFromEntry;
      break;
    }
  }

  queue.drain(config.solver_workers);

  std::vector<std::uint8_t> seed(input.begin(), input.end());
  for (const auto& p : checker.pending()) {
    TruncationWarning w;
    w.site = p.site;
    w.job_id = p.job_id;
    w.verdict = queue.results().at(p.job_id);
    const auto& insn = program.insns[p.site.insn];
    w.line = insn.line;
    w.text = insn.text;
    if (w.verdict.status == solver::Status::Sat) {
      w.input = solver::model_to_input_bytes(w.verdict.model, queue.jobs()[p.job_id].layout, seed);
      if (!config.input_dir.empty()) {
        std::filesystem::create_directories(config.input_dir);
        auto path = config.input_dir / ("trunc_" + std::to_string(p.site.insn) + "_" +
                                        checker::signedness_name(p.site.sign) + ".bin");
        std::ofstream out(path, std::ios::binary);
        out.write(reinterpret_cast<const char*>(w.input.data()),
                  static_cast<std::streamsize>(w.input.size()));
        if (!out)
          throw std::runtime_error("cannot write " + path.string());
        w.input_path = path;
      }
    }
    std::ostringstream os;
    os << checker::signedness_name(p.site.sign) << " truncation of bits [" << p.site.low << ".."
       << p.site.high << "] at insn " << p.site.insn << " (line " << insn.line << ": " << insn.text
       << "): " << solver::status_name(w.verdict.status);
    w.message = os.str();
    rep.warnings.push_back(std::move(w));
  }
  std::stable_sort(rep.warnings.begin(), rep.warnings.end(),
                   [](const TruncationWarning& a, const TruncationWarning& b) {
                     return a.site.insn < b.site.insn;
                   });

  rep.path = st.path;
  rep.inputs = st.inputs;
  rep.output = st.cpu.output;
  return rep;
}

}  // namespace truncdse::engine
