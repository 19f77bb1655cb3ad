#ifndef TRUNCDSE_SHADOW_HPP
#define TRUNCDSE_SHADOW_HPP

#include "truncdse/isa.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace truncdse::shadow {

/// Actual sizes (in bytes) of symbolic values held in stack memory and in
/// registers. A size records how many low bytes of the value are
/// significant; a missing entry means the size is unknown.
///
/// The stack part is a stack of frames, one per active call. Lookups use
/// the current frame, except that a miss at or above the frame's entry rsp
/// (the caller's outgoing arguments) falls through to the parent frame.
class ShadowTracker {
public:
  struct Frame {
    std::uint64_t entry_sp = 0;
    std::map<std::uint64_t, unsigned> sizes;
  };

  ShadowTracker();

  // Stack rules.

  /// mov/movsx/movzx with a memory destination. `src_reg` is set when the
  /// source is a register; the recorded size is min(shadow size, src_size).
  void on_store(std::uint64_t addr, std::optional<isa::Reg> src_reg, unsigned src_size,
                bool src_symbolic);
  /// push: same rule as on_store at the new stack pointer. A memory source
  /// propagates the size looked up at `src_addr`.
  void on_push(std::uint64_t sp_after_push, std::optional<isa::Reg> src_reg,
               std::optional<std::uint64_t> src_addr, unsigned size, bool symbolic);

  // Register rules.

  /// mov/movsx/movzx with a register destination. Exactly one of `src_reg`
  /// or `src_addr` describes the source.
  void on_load(isa::Reg dest, std::optional<isa::Reg> src_reg, std::optional<std::uint64_t> src_addr,
               unsigned src_size, bool src_symbolic);
  void on_pop(isa::Reg dest, std::uint64_t sp_before_pop, bool value_symbolic);
  void on_conversion(isa::Op op, bool rax_symbolic);
  /// Any other instruction writing `reg`: its new size is the destination
  /// operand size when the result is symbolic.
  void on_other_write(isa::Reg reg, unsigned dest_size, bool symbolic);
  /// Modeled function (read/print intrinsics) returning into `reg`.
  void on_modeled_function_return(isa::Reg reg, bool returns_value, unsigned return_size,
                                  bool reg_symbolic);

  // Frames.

  void on_call(std::uint64_t callee_entry_sp);
  void on_ret();

  /// Erases every entry of the current frame overlapping [addr, addr+size).
  void clear_range(std::uint64_t addr, unsigned size);
  /// Records `size` for a value written at `addr` (clears overlaps first).
  void set_memory(std::uint64_t addr, unsigned size);

  std::optional<unsigned> lookup_memory(std::uint64_t addr) const;
  std::optional<unsigned> lookup_register(isa::Reg r) const;

  std::size_t depth() const { return frames_.size(); }
  const std::vector<Frame>& frames() const { return frames_; }
  const std::map<isa::Reg, unsigned>& registers() const { return regs_; }

  /// `shadow: regs{rax:2,...} frame0{0x7ffeff00:1,...}`
  std::string dump() const;

private:
  std::vector<Frame> frames_;
  std::map<isa::Reg, unsigned> regs_;
};

}  // namespace truncdse::shadow

#endif  // TRUNCDSE_SHADOW_HPP
