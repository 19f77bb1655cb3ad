#ifndef TRUNCDSE_SOLVER_HPP
#define TRUNCDSE_SOLVER_HPP

#include "truncdse/bitvec.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace truncdse::solver {

/// One symbolic input variable: where its bytes came from in the input file.
struct InputSlot {
  std::uint32_t var_id = 0;
  unsigned width = 0;          // bits, multiple of 8
  std::size_t read_index = 0;  // ordinal of the read intrinsic that created it
  std::size_t byte_offset = 0; // first byte in the input file
  std::uint64_t seed_value = 0;
};

struct SolverJob {
  std::uint64_t id = 0;
  std::vector<bv::Expr> constraints;
  std::vector<InputSlot> layout;  // ordered by read_index
  std::uint64_t warning_id = 0;
};

enum class Status { Sat, Unsat, Unknown };

enum class UnknownReason { None, BudgetExceeded, EmittedSmtlib };

struct SolverVerdict {
  Status status = Status::Unknown;
  bv::Assignment model;  // meaningful for Sat
  UnknownReason reason = UnknownReason::None;
  std::filesystem::path smtlib_path;  // set when reason == EmittedSmtlib
  std::uint64_t evaluations = 0;
};

const char* status_name(Status s);

struct SolverOptions {
  std::uint64_t budget = std::uint64_t{1} << 20;
  /// Where fallback scripts are written; empty disables writing them.
  std::filesystem::path smtlib_dir;
};

class SolverError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Sum of layout widths in bits.
unsigned total_width(const SolverJob& job);

/// Decides the conjunction of the job's constraints.
///
/// When 2^W <= budget the whole input space is enumerated in lexicographic
/// layout order (first slot most significant) and the first model is
/// returned. Larger spaces get a deterministic boundary-value search under
/// the same budget; if that fails the job is written out as `<id>.smt2` and
/// reported Unknown. Sat models are re-checked with bv::eval.
SolverVerdict solve(const SolverJob& job, const SolverOptions& opts);

/// Little-endian bytes for every slot, written over a copy of `seed` (which
/// is zero-extended when shorter than the layout needs).
std::vector<std::uint8_t> model_to_input_bytes(const bv::Assignment& model,
                                               const std::vector<InputSlot>& layout,
                                               std::vector<std::uint8_t> seed = {});

/// Jobs pushed by the engine and drained by N worker threads. Results are
/// keyed by job id so the order in which workers finish never matters.
class JobQueue {
public:
  explicit JobQueue(SolverOptions opts) : opts_(std::move(opts)) {}

  std::uint64_t push(SolverJob job);
  std::size_t size() const;

  /// Solves every pending job. workers <= 1 runs on the calling thread.
  void drain(unsigned workers);

  const std::map<std::uint64_t, SolverVerdict>& results() const { return results_; }
  const std::vector<SolverJob>& jobs() const { return jobs_; }

private:
  SolverOptions opts_;
  std::vector<SolverJob> jobs_;
  std::size_t next_ = 0;
  std::map<std::uint64_t, SolverVerdict> results_;
  mutable std::mutex mu_;
};

}  // namespace truncdse::solver

#endif  // TRUNCDSE_SOLVER_HPP
