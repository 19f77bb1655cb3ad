#include "truncdse/shadow.hpp"

#include <algorithm>
#include <sstream>

namespace truncdse::shadow {

using isa::Reg;

ShadowTracker::ShadowTracker() { frames_.push_back(Frame{isa::kStackTop, {}}); }

std::optional<unsigned> ShadowTracker::lookup_memory(std::uint64_t addr) const {
  const Frame& cur = frames_.back();
  if (auto it = cur.sizes.find(addr); it != cur.sizes.end())
    return it->second;
  if (frames_.size() > 1 && addr >= cur.entry_sp) {
    const Frame& parent = frames_[frames_.size() - 2];
    if (auto it = parent.sizes.find(addr); it != parent.sizes.end())
      return it->second;
  }
  return std::nullopt;
}

std::optional<unsigned> ShadowTracker::lookup_register(Reg r) const {
  if (auto it = regs_.find(r); it != regs_.end())
    return it->second;
  return std::nullopt;
}

void ShadowTracker::clear_range(std::uint64_t addr, unsigned size) {
  auto& sizes = frames_.back().sizes;
  // Entries start at most 7 bytes below addr (sizes are <= 8).
  auto it = sizes.lower_bound(addr >= 7 ? addr - 7 : 0);
  while (it != sizes.end() && it->first < addr + size) {
    if (it->first + it->second > addr)
      it = sizes.erase(it);
    else
      ++it;
  }
}

void ShadowTracker::set_memory(std::uint64_t addr, unsigned size) {
  clear_range(addr, size);
  frames_.back().sizes[addr] = size;
}

void ShadowTracker::on_store(std::uint64_t addr, std::optional<Reg> src_reg, unsigned src_size,
                             bool src_symbolic) {
  if (!src_symbolic) {
    clear_range(addr, src_size);
    return;
  }
  unsigned size = src_size;
  if (src_reg)
    if (auto tracked = lookup_register(*src_reg))
      size = std::min(*tracked, src_size);
  clear_range(addr, src_size);
  frames_.back().sizes[addr] = size;
}

void ShadowTracker::on_push(std::uint64_t sp_after_push, std::optional<Reg> src_reg,
                            std::optional<std::uint64_t> src_addr, unsigned size, bool symbolic) {
  if (!symbolic) {
    clear_range(sp_after_push, size);
    return;
  }
  unsigned recorded = size;
  std::optional<unsigned> tracked;
  if (src_reg)
    tracked = lookup_register(*src_reg);
  else if (src_addr)
    tracked = lookup_memory(*src_addr);
  if (tracked)
    recorded = std::min(*tracked, size);
  clear_range(sp_after_push, size);
  frames_.back().sizes[sp_after_push] = recorded;
}

void ShadowTracker::on_load(Reg dest, std::optional<Reg> src_reg, std::optional<std::uint64_t> src_addr,
                            unsigned src_size, bool src_symbolic) {
  if (!src_symbolic) {
    regs_.erase(dest);
    return;
  }
  std::optional<unsigned> tracked;
  if (src_reg)
    tracked = lookup_register(*src_reg);
  else if (src_addr)
    tracked = lookup_memory(*src_addr);
  regs_[dest] = tracked ? std::min(*tracked, src_size) : src_size;
}

void ShadowTracker::on_pop(Reg dest, std::uint64_t sp_before_pop, bool value_symbolic) {
  auto tracked = lookup_memory(sp_before_pop);
  if (tracked && value_symbolic)
    regs_[dest] = *tracked;
  else
    regs_.erase(dest);
}

void ShadowTracker::on_conversion(isa::Op op, bool rax_symbolic) {
  if (!rax_symbolic) {
    regs_.erase(Reg::rax);
    return;
  }
  unsigned extended = op == isa::Op::Cbw ? 1 : op == isa::Op::Cwde ? 2 : 4;
  regs_[Reg::rax] = extended;
}

void ShadowTracker::on_other_write(Reg reg, unsigned dest_size, bool symbolic) {
  if (symbolic)
    regs_[reg] = dest_size;
  else
    regs_.erase(reg);
}

void ShadowTracker::on_modeled_function_return(Reg reg, bool returns_value, unsigned return_size,
                                               bool reg_symbolic) {
  if (returns_value && reg_symbolic)
    regs_[reg] = return_size;
  else
    regs_.erase(reg);
}

void ShadowTracker::on_call(std::uint64_t callee_entry_sp) {
  frames_.push_back(Frame{callee_entry_sp, {}});
}

void ShadowTracker::on_ret() {
  if (frames_.size() > 1)
    frames_.pop_back();
}

std::string ShadowTracker::dump() const {
  std::ostringstream os;
  os << "shadow: regs{";
  bool first = true;
  for (auto [r, s] : regs_) {
    os << (first ? "" : ",") << isa::reg_name(r) << ":" << s;
    first = false;
  }
  os << "}";
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    os << " frame" << i << "{";
    first = true;
    for (auto [a, s] : frames_[i].sizes) {
      os << (first ? "" : ",") << "0x" << std::hex << a << std::dec << ":" << s;
      first = false;
    }
    os << "}";
  }
  return os.str();
}

}  // namespace truncdse::shadow
