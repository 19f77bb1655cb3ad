#include "truncdse/checker.hpp"

#include <algorithm>

namespace truncdse::checker {

using engine::BranchRecord;
using engine::InputVariable;
using engine::MachineState;
using isa::Instruction;
using isa::Op;

const char* signedness_name(Signedness s) { return s == Signedness::Signed ? "signed" : "unsigned"; }

const char* provenance_name(SignednessSource s) {
  switch (s) {
  case SignednessSource::Hint: return "hint";
  case SignednessSource::BranchSlice: return "branch-slice";
  case SignednessSource::Default: return "default";
  }
  return "?";
}

bv::Expr cropped_bits(const TruncationSite& site) { return bv::extract(site.high, site.low, site.var); }

bv::Expr build_predicate(const TruncationSite& site) {
  if (site.kept_size >= site.actual_size || site.low > site.high)
    throw bv::BuildError("build_predicate: site keeps every significant byte");
  bv::Expr trunc = cropped_bits(site);
  const unsigned sz = site.high - site.low + 1;
  bv::Expr all_zero = bv::eq(trunc, bv::zeros(sz));
  if (site.sign == Signedness::Unsigned)
    return bv::bool_not(all_zero);
  return bv::bool_not(bv::bool_or(all_zero, bv::eq(trunc, bv::ones(sz))));
}

bool concrete_truncation(std::uint64_t cropped, unsigned bits, Signedness s) {
  cropped &= bv::mask(bits);
  if (cropped == 0)
    return false;
  return s == Signedness::Unsigned || cropped != bv::mask(bits);
}

std::pair<Signedness, SignednessSource> infer_signedness(const bv::Expr& var,
                                                         std::span<const BranchRecord> path,
                                                         std::span<const InputVariable> inputs) {
  const auto vars = bv::var_ids(var);
  const InputVariable* latest = nullptr;
  for (const auto& in : inputs)
    if (vars.count(in.id) && in.hint != isa::ReadHint::None &&
        (!latest || in.read_index > latest->read_index))
      latest = &in;
  if (latest)
    return {latest->hint == isa::ReadHint::Signed ? Signedness::Signed : Signedness::Unsigned,
            SignednessSource::Hint};

  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    bool related = std::any_of(it->vars.begin(), it->vars.end(),
                               [&](std::uint32_t id) { return vars.count(id) != 0; });
    if (!related)
      continue;
    if (isa::is_signed_jump(it->op))
      return {Signedness::Signed, SignednessSource::BranchSlice};
    if (isa::is_unsigned_jump(it->op))
      return {Signedness::Unsigned, SignednessSource::BranchSlice};
  }
  return {Signedness::Signed, SignednessSource::Default};
}

namespace {

TruncationSite make_site(const Instruction& insn, const MachineState& st, SourceKind kind,
                         bv::Expr var, unsigned actual, unsigned kept) {
  TruncationSite site;
  site.insn = insn.index;
  site.source = kind;
  site.actual_size = actual;
  site.kept_size = kept;
  site.high = 8 * actual - 1;
  site.low = 8 * kept;
  site.var = std::move(var);
  auto [sign, from] = infer_signedness(site.var, st.path, st.inputs);
  site.sign = sign;
  site.sign_from = from;
  return site;
}

/// The low `bytes` bytes of a 64-bit register formula.
bv::Expr low_bytes(const bv::Expr& full, unsigned bytes) {
  return bytes == 8 ? full : bv::extract(8 * bytes - 1, 0, full);
}

}  // namespace

std::optional<TruncationSite> check_mov_from_mem(const Instruction& insn, const MachineState& st,
                                                 const shadow::ShadowTracker& sh) {
  if (!isa::is_mov_family(insn.op))
    return std::nullopt;
  auto mem = std::get_if<isa::MemRef>(&insn.operands.at(1));
  if (!mem)
    return std::nullopt;
  const std::uint64_t addr = isa::effective_address(st.cpu, *mem);
  if (!st.mem_symbolic(addr, mem->size))
    return std::nullopt;
  auto tracked = sh.lookup_memory(addr);
  if (!tracked || mem->size >= *tracked)
    return std::nullopt;
  auto var = st.mem_expr(addr, *tracked);
  if (!var)
    return std::nullopt;
  return make_site(insn, st, SourceKind::Memory, *var, *tracked, mem->size);
}

std::optional<TruncationSite> check_mov_from_reg(const Instruction& insn, const MachineState& st,
                                                 const shadow::ShadowTracker& sh) {
  if (!isa::is_mov_family(insn.op))
    return std::nullopt;
  auto slice = std::get_if<isa::RegisterSlice>(&insn.operands.at(1));
  if (!slice)
    return std::nullopt;
  const auto& full = st.reg_expr(slice->reg);
  if (!full)
    return std::nullopt;
  const unsigned size = slice->bytes();
  if (auto tracked = sh.lookup_register(slice->reg)) {
    if (size >= *tracked)
      return std::nullopt;
    return make_site(insn, st, SourceKind::Register, low_bytes(*full, *tracked), *tracked, size);
  }
  // Unknown size: only a strict subregister whose formula is an extract
  // can lose bits.
  if (slice->full())
    return std::nullopt;
  auto source = st.slice_expr(*slice);
  auto match = bv::match_extract(*source);
  if (!match || match->low != 0)
    return std::nullopt;
  const unsigned width = match->inner.width();
  if (width % 8 != 0 || width / 8 <= size)
    return std::nullopt;
  return make_site(insn, st, SourceKind::Register, match->inner, width / 8, size);
}

std::optional<TruncationSite> check_conversion(const Instruction& insn, const MachineState& st,
                                               const shadow::ShadowTracker& sh) {
  if (!isa::is_conversion(insn.op))
    return std::nullopt;
  const auto& rax = st.reg_expr(isa::Reg::rax);
  if (!rax)
    return std::nullopt;
  auto tracked = sh.lookup_register(isa::Reg::rax);
  if (!tracked)
    return std::nullopt;
  const unsigned extended = insn.op == Op::Cbw ? 1 : insn.op == Op::Cwde ? 2 : 4;
  if (*tracked <= extended)
    return std::nullopt;
  return make_site(insn, st, SourceKind::Conversion, low_bytes(*rax, *tracked), *tracked, extended);
}

std::optional<TruncationSite> check_instruction(const Instruction& insn, const MachineState& st,
                                                const shadow::ShadowTracker& sh) {
  if (isa::is_conversion(insn.op))
    return check_conversion(insn, st, sh);
  if (!isa::is_mov_family(insn.op))
    return std::nullopt;
  if (std::holds_alternative<isa::MemRef>(insn.operands.at(1)))
    return check_mov_from_mem(insn, st, sh);
  return check_mov_from_reg(insn, st, sh);
}

solver::SolverJob make_job(const TruncationSite& site, const MachineState& st) {
  solver::SolverJob job;
  bv::Expr predicate = build_predicate(site);
  std::set<std::uint32_t> vars = bv::var_ids(predicate);
  std::vector<bool> included(st.path.size(), false);
  for (bool grew = true; grew;) {
    grew = false;
    for (std::size_t i = 0; i < st.path.size(); ++i) {
      if (included[i])
        continue;
      const auto& rec = st.path[i];
      if (std::none_of(rec.vars.begin(), rec.vars.end(),
                       [&](std::uint32_t id) { return vars.count(id) != 0; }))
        continue;
      included[i] = true;
      vars.insert(rec.vars.begin(), rec.vars.end());
      grew = true;
    }
  }
  for (std::size_t i = 0; i < st.path.size(); ++i)
    if (included[i])
      job.constraints.push_back(st.path[i].condition);
  job.constraints.push_back(predicate);
  for (const auto& in : st.inputs)
    if (vars.count(in.id))
      job.layout.push_back(solver::InputSlot{in.id, in.width, in.read_index, in.byte_offset,
                                             in.seed_value});
  return job;
}

std::optional<PendingSite> TruncationChecker::inspect(const Instruction& insn, const MachineState& st,
                                                      const shadow::ShadowTracker& sh) {
  auto site = check_instruction(insn, st, sh);
  if (!site)
    return std::nullopt;
  if (!seen_.emplace(site->insn, site->sign).second)
    return std::nullopt;
  solver::SolverJob job = make_job(*site, st);
  job.warning_id = pending_.size();
  PendingSite p{*site, queue_.push(std::move(job))};
  pending_.push_back(p);
  return p;
}

}  // namespace truncdse::checker
