#ifndef TRUNCDSE_CHECKER_HPP
#define TRUNCDSE_CHECKER_HPP

#include "truncdse/bitvec.hpp"
#include "truncdse/isa.hpp"
#include "truncdse/shadow.hpp"
#include "truncdse/solver.hpp"
#include "truncdse/state.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace truncdse::checker {

enum class Signedness { Signed, Unsigned };
enum class SignednessSource { Hint, BranchSlice, Default };
enum class SourceKind { Memory, Register, Conversion };

const char* signedness_name(Signedness s);
const char* provenance_name(SignednessSource s);

/// A narrowing instruction whose cropped bits low..high of `var` may hold
/// significant data.
struct TruncationSite {
  std::size_t insn = 0;
  SourceKind source = SourceKind::Register;
  bv::Expr var;        // the full-width symbolic value being narrowed
  unsigned high = 0;   // 8 * actual size - 1
  unsigned low = 0;    // 8 * kept size
  unsigned actual_size = 0;
  unsigned kept_size = 0;
  Signedness sign = Signedness::Signed;
  SignednessSource sign_from = SignednessSource::Default;
};

/// Cropped bits: extract(high, low, var).
bv::Expr cropped_bits(const TruncationSite& site);

/// Signed:   not(trunc == 0...0 or trunc == 1...1)
/// Unsigned: not(trunc == 0...0)
/// "bv(1, sz)" is read as the all-ones vector, so a signed value whose
/// cropped bits are a pure sign extension is never reported.
bv::Expr build_predicate(const TruncationSite& site);

/// The same test on a concrete cropped-bits value of `bits` width.
bool concrete_truncation(std::uint64_t cropped, unsigned bits, Signedness s);

std::pair<Signedness, SignednessSource> infer_signedness(
    const bv::Expr& var, std::span<const engine::BranchRecord> path,
    std::span<const engine::InputVariable> inputs);

// Checking scenarios, evaluated on the state BEFORE `insn` executes.
std::optional<TruncationSite> check_mov_from_mem(const isa::Instruction& insn,
                                                 const engine::MachineState& st,
                                                 const shadow::ShadowTracker& sh);
std::optional<TruncationSite> check_mov_from_reg(const isa::Instruction& insn,
                                                 const engine::MachineState& st,
                                                 const shadow::ShadowTracker& sh);
std::optional<TruncationSite> check_conversion(const isa::Instruction& insn,
                                               const engine::MachineState& st,
                                               const shadow::ShadowTracker& sh);
/// Dispatches to the scenario matching `insn`.
std::optional<TruncationSite> check_instruction(const isa::Instruction& insn,
                                                const engine::MachineState& st,
                                                const shadow::ShadowTracker& sh);

/// Predicate plus the path conditions transitively sharing variables with
/// it; the layout lists exactly the variables of those constraints.
solver::SolverJob make_job(const TruncationSite& site, const engine::MachineState& st);

/// A site with a job queued; completed into a warning once solved.
struct PendingSite {
  TruncationSite site;
  std::uint64_t job_id = 0;
};

/// Detects sites and enqueues one solver job per (instruction, signedness).
class TruncationChecker {
public:
  explicit TruncationChecker(solver::JobQueue& queue) : queue_(queue) {}

  /// Returns the site when a new job was queued.
  std::optional<PendingSite> inspect(const isa::Instruction& insn, const engine::MachineState& st,
                                     const shadow::ShadowTracker& sh);

  const std::vector<PendingSite>& pending() const { return pending_; }

private:
  solver::JobQueue& queue_;
  std::set<std::pair<std::size_t, Signedness>> seen_;
  std::vector<PendingSite> pending_;
};

}  // namespace truncdse::checker

#endif  // TRUNCDSE_CHECKER_HPP
