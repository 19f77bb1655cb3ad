#include "truncdse/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace truncdse;

namespace {

void add_engine_flags(CLI::App* app, cli::RunOptions& opts, std::string& smt2_dir) {
  app->add_option("--solver-budget", opts.engine.solver.budget,
                  "maximum assignments evaluated per solver job")
      ->check(CLI::PositiveNumber);
  app->add_option("--solver-workers", opts.engine.solver_workers, "solver threads")
      ->check(CLI::Range(1u, 256u));
  app->add_option("--step-limit", opts.engine.step_limit, "maximum instructions executed")
      ->check(CLI::PositiveNumber);
  app->add_option("--smt2-dir", smt2_dir, "write SMT-LIB2 scripts for jobs the solver gives up on");
  app->add_flag("--verbose,-v", opts.verbose, "print job log and path predicate");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concolic detection of numeric truncation errors"};
  app.require_subcommand(1);

  cli::RunOptions opts;
  std::string smt2_dir;
  std::string program, input, out_dir = opts.out.string(), record, manifest;
  bool trace_shadow = false, agreement = false;

  auto* run = app.add_subcommand("run", "analyze a program on a seed input");
  run->add_option("program", program, "assembly file")->required()->check(CLI::ExistingFile);
  run->add_option("input", input, "seed input bytes")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "directory for warnings.jsonl and generated inputs");
  run->add_flag("--trace-shadow", trace_shadow, "print the shadow state after every instruction");
  run->add_flag("--check-agreement", agreement,
                "check symbolic formulas against concrete values after every step");
  add_engine_flags(run, opts, smt2_dir);

  auto* rep = app.add_subcommand("reproduce", "replay a generated input and test the warning");
  rep->add_option("program", program, "assembly file")->required()->check(CLI::ExistingFile);
  rep->add_option("record", record, "warnings.jsonl file or a single JSON record")->required();
  rep->add_option("--input", input, "input file instead of the record's");
  std::size_t record_index = 0;
  rep->add_option("--index", record_index, "which record of a warnings.jsonl file");

  auto* corpus = app.add_subcommand("corpus", "run the accuracy harness over a manifest");
  corpus->add_option("manifest", manifest, "manifest file")->required()->check(CLI::ExistingFile);
  corpus->add_option("--out", out_dir, "directory for generated inputs, one subdirectory per case");
  add_engine_flags(corpus, opts, smt2_dir);

  CLI11_PARSE(app, argc, argv);

  opts.out = out_dir;
  opts.engine.trace_shadow = trace_shadow;
  opts.engine.check_agreement = agreement;
  if (!smt2_dir.empty())
    opts.engine.solver.smtlib_dir = smt2_dir;

  if (*run)
    return cli::cmd_run(program, input, opts, std::cout, std::cerr);
  if (*corpus)
    return cli::cmd_corpus(manifest, opts, std::cout, std::cerr);

  std::string line = record;
  if (std::filesystem::is_regular_file(record)) {
    std::ifstream in(record);
    for (std::size_t i = 0; std::getline(in, line); ++i)
      if (i == record_index)
        break;
    if (!in) {
      std::cerr << "error: " << record << " has no record " << record_index << "\n";
      return 2;
    }
  }
  std::optional<std::filesystem::path> override_input;
  if (!input.empty())
    override_input = input;
  return cli::cmd_reproduce(program, line, override_input, std::cout, std::cerr);
}
