#ifndef TRUNCDSE_CLI_HPP
#define TRUNCDSE_CLI_HPP

#include "truncdse/checker.hpp"
#include "truncdse/engine.hpp"
#include "truncdse/isa.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace truncdse::cli {

namespace fs = std::filesystem;

class CliError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  engine::EngineConfig engine;
  fs::path out = "truncdse-out";
  bool verbose = false;
};

isa::Program load_program(const fs::path& path);
std::vector<std::uint8_t> read_bytes(const fs::path& path);

/// One line of warnings.jsonl.
struct WarningRecord {
  std::size_t insn = 0;
  std::size_t line = 0;
  checker::Signedness sign = checker::Signedness::Signed;
  unsigned low = 0;
  unsigned high = 0;
  std::string verdict;
  std::string input;  // reproducer file, empty unless sat
};

WarningRecord make_record(const engine::TruncationWarning& w);
std::string record_to_json(const WarningRecord& r);
/// Throws CliError on malformed records.
WarningRecord record_from_json(const std::string& line);

/// Analyzes `program` on `input`. Writes warnings.jsonl and the generated
/// inputs to opts.out, prints a summary to `out`.
/// Exit code: 0 clean, 1 sat warnings present, 2 engine error.
int cmd_run(const fs::path& program, const fs::path& input, const RunOptions& opts,
            std::ostream& out, std::ostream& err);

struct ReproduceResult {
  bool verified = false;
  std::size_t visits = 0;                // times the flagged instruction executed
  std::optional<std::uint64_t> cropped;  // cropped bits at the first verifying visit
  std::optional<std::uint64_t> stored;   // value the instruction wrote on that visit
  std::string reason;
};

/// Replays `program` concretely on `input` and applies the concrete
/// truncation test to the source value each time the flagged instruction
/// is about to execute.
ReproduceResult reproduce(const isa::Program& program, std::span<const std::uint8_t> input,
                          const WarningRecord& rec, std::uint64_t step_limit = 1'000'000);

/// `record` is one warnings.jsonl line; `input` overrides the record's file.
/// Exit code: 0 verified, 1 not verified, 2 error.
int cmd_reproduce(const fs::path& program, const std::string& record,
                  const std::optional<fs::path>& input, std::ostream& out, std::ostream& err);

struct CorpusCase {
  fs::path program;
  fs::path seed;
  bool has_error = false;
  std::vector<std::size_t> insns;  // expected error sites, empty if unknown
  std::size_t manifest_line = 0;
};

/// `program, seed, expect=error|clean[, insns=i1;i2]`, paths relative to
/// the manifest, `#` comments. Throws CliError on an empty or bad manifest.
std::vector<CorpusCase> parse_manifest(const fs::path& manifest);

enum class Outcome { TP, FP, FN, TN };
const char* outcome_name(Outcome o);

/// A sat warning of one case after reproduction.
struct CheckedWarning {
  std::size_t insn = 0;
  checker::Signedness sign = checker::Signedness::Signed;
  bool verified = false;
};

struct CaseRun {
  std::vector<CheckedWarning> warnings;
  std::string error;  // engine failure, counted as a missed or false report
};

/// Error case: TP iff every sat warning verifies and the warned
/// instructions equal the expected ones (any warning if none listed).
/// Clean case: TN iff no sat warning.
Outcome classify(const CorpusCase& c, const CaseRun& run);

struct CaseResult {
  CorpusCase c;
  CaseRun run;
  Outcome outcome = Outcome::TN;
};

struct AccuracyReport {
  std::vector<CaseResult> cases;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::optional<double> tpr() const;
  std::optional<double> tnr() const;
  double accuracy() const;
};

using CaseRunner = std::function<CaseRun(const CorpusCase&)>;

/// Runs the engine on the seed and reproduces every sat warning.
CaseRunner engine_runner(const RunOptions& opts);

AccuracyReport run_corpus(const std::vector<CorpusCase>& cases, const CaseRunner& runner);
void print_report(const AccuracyReport& rep, std::ostream& out);

/// Exit code: 0 accuracy 1.00, 1 otherwise, 2 error.
int cmd_corpus(const fs::path& manifest, const RunOptions& opts, std::ostream& out,
               std::ostream& err);

}  // namespace truncdse::cli

#endif  // TRUNCDSE_CLI_HPP
