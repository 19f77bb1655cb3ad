#ifndef TRUNCDSE_ENGINE_HPP
#define TRUNCDSE_ENGINE_HPP

#include "truncdse/checker.hpp"
#include "truncdse/isa.hpp"
#include "truncdse/shadow.hpp"
#include "truncdse/solver.hpp"
#include "truncdse/state.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace truncdse::engine {

struct EngineConfig {
  std::uint64_t step_limit = 1'000'000;
  solver::SolverOptions solver;
  unsigned solver_workers = 1;
  /// Re-evaluate every symbolic register and byte against the concrete
  /// state after each step and count mismatches.
  bool check_agreement = false;
  /// Record ShadowTracker::dump() after every instruction.
  bool trace_shadow = false;
  /// Directory for generated inputs; empty keeps them in memory only.
  std::filesystem::path input_dir;
};

enum class EndReason { Exit, ReturnFromEntry, EndOfProgram, Trap, StepLimit };
const char* end_reason_name(EndReason r);

struct TruncationWarning {
  checker::TruncationSite site;
  std::uint64_t job_id = 0;
  solver::SolverVerdict verdict;
  std::vector<std::uint8_t> input;  // reproducer bytes, Sat only
  std::optional<std::filesystem::path> input_path;
  std::size_t line = 0;
  std::string text;
  std::string message;
};

struct RunReport {
  std::size_t steps = 0;
  bool complete = true;
  EndReason end = EndReason::Exit;
  std::vector<std::string> diagnostics;
  std::vector<BranchRecord> path;
  std::vector<InputVariable> inputs;
  /// Every queued site in instruction order, whatever the verdict.
  std::vector<TruncationWarning> warnings;
  std::vector<std::string> job_log;
  std::vector<std::string> shadow_trace;
  std::vector<std::int64_t> output;
  std::size_t agreement_violations = 0;
  std::vector<std::string> agreement_messages;

  /// Only the Sat warnings (the default report).
  std::vector<const TruncationWarning*> sat_warnings() const;
};

/// Symbolic transfer function for one instruction, applied after the
/// concrete step. Formulas are built from the symbolic state before the
/// step; `pre` is the register file and flags before the step.
class SymbolicStepper {
public:
  SymbolicStepper(MachineState& st, shadow::ShadowTracker& sh) : st_(st), sh_(sh) {}

  struct Pre {
    std::array<std::uint64_t, isa::kNumRegs> regs{};
    isa::Flags flags;
    std::vector<std::optional<bv::Expr>> sym;  // operand_sym for every operand
    std::vector<bv::Expr> exprs;                // operand_expr for every operand
    std::vector<std::uint64_t> addrs;           // effective address per operand
    std::size_t input_pos = 0;
    unsigned depth = 0;
    std::optional<bv::Expr> stack_sym;
  };

  /// Captures everything the update needs before the concrete step runs.
  Pre capture(const isa::Instruction& insn) const;
  void apply(const isa::Instruction& insn, const Pre& pre, std::vector<std::string>& diagnostics);

private:
  struct FlagSource {
    enum Kind { None, Sub, Add, Logic, Other } kind = None;
    bv::Expr a, b, r;
  };

  void write_reg(const isa::RegisterSlice& s, const std::optional<bv::Expr>& v);
  void write_mem(std::uint64_t addr, unsigned size, const std::optional<bv::Expr>& v);
  void write_dest(const isa::Instruction& insn, const Pre& pre, const std::optional<bv::Expr>& v);
  std::optional<bv::Expr> jump_condition(isa::Op op) const;

  MachineState& st_;
  shadow::ShadowTracker& sh_;
  FlagSource flags_;
};

/// Runs `program` on `input`, collecting the path predicate and
/// truncation warnings. Warnings are sorted by instruction index.
RunReport run(const isa::Program& program, std::span<const std::uint8_t> input,
              const EngineConfig& config);

/// Checks that every symbolic register/byte evaluates to the concrete
/// value under `a`; returns a description of each mismatch.
std::vector<std::string> check_agreement(const MachineState& st, const bv::Assignment& a);

}  // namespace truncdse::engine

#endif  // TRUNCDSE_ENGINE_HPP
