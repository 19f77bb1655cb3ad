#include "truncdse/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace truncdse::cli {

using checker::Signedness;
using nlohmann::json;

isa::Program load_program(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw CliError("cannot open program " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return isa::parse_program(ss.str());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CliError("cannot open input " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

WarningRecord make_record(const engine::TruncationWarning& w) {
  WarningRecord r;
  r.insn = w.site.insn;
  r.line = w.line;
  r.sign = w.site.sign;
  r.low = w.site.low;
  r.high = w.site.high;
  r.verdict = solver::status_name(w.verdict.status);
  if (w.input_path)
    r.input = w.input_path->string();
  return r;
}

std::string record_to_json(const WarningRecord& r) {
  json j = {{"insn", r.insn},
            {"line", r.line},
            {"kind", checker::signedness_name(r.sign)},
            {"bits", {r.low, r.high}},
            {"verdict", r.verdict},
            {"input", r.input}};
  return j.dump();
}

WarningRecord record_from_json(const std::string& line) {
  WarningRecord r;
  try {
    json j = json::parse(line);
    r.insn = j.at("insn").get<std::size_t>();
    r.line = j.value("line", std::size_t{0});
    auto kind = j.at("kind").get<std::string>();
    if (kind == "signed")
      r.sign = Signedness::Signed;
    else if (kind == "unsigned")
      r.sign = Signedness::Unsigned;
    else
      throw CliError("warning record: unknown kind '" + kind + "'");
    const auto& bits = j.at("bits");
    if (!bits.is_array() || bits.size() != 2)
      throw CliError("warning record: bits must be [low, high]");
    r.low = bits[0].get<unsigned>();
    r.high = bits[1].get<unsigned>();
    r.verdict = j.value("verdict", std::string("sat"));
    r.input = j.value("input", std::string());
  } catch (const json::exception& e) {
    throw CliError(std::string("warning record: ") + e.what());
  }
  if (r.low > r.high || r.high > 63 || r.low % 8 != 0 || (r.high + 1) % 8 != 0)
    throw CliError("warning record: bad bit range");
  return r;
}

int cmd_run(const fs::path& program_path, const fs::path& input_path, const RunOptions& opts,
            std::ostream& out, std::ostream& err) {
  engine::RunReport rep;
  try {
    auto program = load_program(program_path);
    auto input = read_bytes(input_path);
    auto cfg = opts.engine;
    cfg.input_dir = opts.out;
    fs::create_directories(opts.out);
    rep = engine::run(program, input, cfg);
  } catch (const isa::ParseError& e) {
    err << program_path.string() << ":" << e.line() << ": " << e.message() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  const auto jsonl = opts.out / "warnings.jsonl";
  std::ofstream wout(jsonl);
  for (const auto& w : rep.warnings)
    wout << record_to_json(make_record(w)) << "\n";
  if (!wout) {
    err << "error: cannot write " << jsonl.string() << "\n";
    return 2;
  }

  if (opts.verbose) {
    for (const auto& l : rep.job_log)
      out << l << "\n";
    for (const auto& b : rep.path)
      out << "branch insn " << b.insn << " " << b.mnemonic << (b.taken ? " taken" : " not taken")
          << ": " << bv::to_string(b.condition) << "\n";
    for (const auto& l : rep.shadow_trace)
      out << l << "\n";
    for (const auto& m : rep.agreement_messages)
      out << "agreement: " << m << "\n";
  }
  for (const auto& d : rep.diagnostics)
    err << "note: " << d << "\n";

  std::size_t sat = 0;
  for (const auto& w : rep.warnings) {
    if (w.verdict.status == solver::Status::Sat) {
      ++sat;
      out << "warning: " << w.message;
      if (w.input_path)
        out << " -> " << w.input_path->string();
      out << "\n";
    } else if (opts.verbose || w.verdict.status == solver::Status::Unknown) {
      out << "note: " << w.message;
      if (!w.verdict.smtlib_path.empty())
        out << " (" << w.verdict.smtlib_path.string() << ")";
      out << "\n";
    }
  }
  out << rep.steps << " steps, end: " << engine::end_reason_name(rep.end) << ", "
      << rep.warnings.size() << " jobs, " << sat << " warnings\n";
  if (opts.engine.check_agreement)
    out << "agreement violations: " << rep.agreement_violations << "\n";
  if (!rep.complete)
    return 2;
  return sat ? 1 : 0;
}

namespace {

std::optional<std::uint64_t> source_value(const isa::CpuState& s, const isa::Instruction& insn,
                                          unsigned actual) {
  if (isa::is_conversion(insn.op))
    return s.reg(isa::Reg::rax);
  if (!isa::is_mov_family(insn.op) || insn.operands.size() != 2)
    return std::nullopt;
  const auto& src = insn.operands[1];
  if (auto m = std::get_if<isa::MemRef>(&src)) {
    auto addr = isa::effective_address(s, *m);
    if (!s.mem.valid(addr, actual))
      return std::nullopt;
    return s.mem.load(addr, actual);
  }
  if (auto r = std::get_if<isa::RegisterSlice>(&src))
    return s.reg(r->reg);
  return std::nullopt;
}

std::uint64_t written_value(const isa::CpuState& s, const isa::Instruction& insn) {
  if (isa::is_conversion(insn.op))
    return s.reg(isa::Reg::rax);
  return isa::read_operand(s, insn.operands[0], isa::operand_size(insn, 0));
}

}  // namespace

ReproduceResult reproduce(const isa::Program& program, std::span<const std::uint8_t> input,
                          const WarningRecord& rec, std::uint64_t step_limit) {
  ReproduceResult res;
  if (rec.insn >= program.insns.size()) {
    res.reason = "instruction " + std::to_string(rec.insn) + " not in program";
    return res;
  }
  const unsigned bits = rec.high - rec.low + 1;
  const unsigned actual = (rec.high + 1) / 8;
  auto cpu = isa::initial_state(program);
  isa::InputCursor cursor;
  cursor.bytes = input;
  bool pending_store = false;
  try {
    for (std::uint64_t steps = 0; cpu.pc < program.insns.size(); ++steps) {
      if (steps >= step_limit) {
        res.reason = "step limit reached";
        break;
      }
      const auto& insn = program.insns[cpu.pc];
      if (insn.index == rec.insn) {
        ++res.visits;
        auto v = source_value(cpu, insn, actual);
        if (v) {
          std::uint64_t cropped = (*v >> rec.low) & bv::mask(bits);
          if (!res.verified && checker::concrete_truncation(cropped, bits, rec.sign)) {
            res.verified = true;
            res.cropped = cropped;
            pending_store = true;
          }
        }
      }
      auto ev = isa::step_concrete(cpu, insn, cursor);
      if (pending_store) {
        res.stored = written_value(cpu, insn);
        pending_store = false;
      }
      if (ev != isa::StepEvent::Continue)
        break;
    }
  } catch (const isa::Trap& t) {
    if (!res.verified)
      res.reason = t.what();
  }
  if (res.verified)
    res.reason = "cropped bits hold significant data";
  else if (res.visits == 0 && res.reason.empty())
    res.reason = "unreached";
  else if (res.reason.empty())
    res.reason = "cropped bits are a plain extension on every visit";
  return res;
}

int cmd_reproduce(const fs::path& program_path, const std::string& record,
                  const std::optional<fs::path>& input, std::ostream& out, std::ostream& err) {
  try {
    auto program = load_program(program_path);
    auto rec = record_from_json(record);
    fs::path in = input ? *input : fs::path(rec.input);
    if (in.empty())
      throw CliError("no input file for instruction " + std::to_string(rec.insn));
    auto bytes = read_bytes(in);
    auto res = reproduce(program, bytes, rec);
    out << (res.verified ? "verified" : "not-verified") << ": insn " << rec.insn << " "
        << checker::signedness_name(rec.sign) << " bits [" << rec.low << "," << rec.high
        << "]: " << res.reason;
    if (res.cropped)
      out << std::hex << " (cropped 0x" << *res.cropped << ", stored 0x" << res.stored.value_or(0)
          << ")" << std::dec;
    out << "\n";
    return res.verified ? 0 : 1;
  } catch (const isa::ParseError& e) {
    err << program_path.string() << ":" << e.line() << ": " << e.message() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 2;
}

namespace {

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep))
    parts.push_back(trim(cur));
  return parts;
}

}  // namespace

std::vector<CorpusCase> parse_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in)
    throw CliError("cannot open manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::vector<CorpusCase> cases;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    auto where = [&] { return manifest.string() + ":" + std::to_string(no) + ": "; };
    auto parts = split(line, ',');
    if (parts.size() < 3 || parts.size() > 4)
      throw CliError(where() + "expected 'program, seed, expect=...[, insns=...]'");
    CorpusCase c;
    c.manifest_line = no;
    c.program = base / parts[0];
    c.seed = base / parts[1];
    if (parts[2] == "expect=error")
      c.has_error = true;
    else if (parts[2] != "expect=clean")
      throw CliError(where() + "expect must be error or clean");
    if (parts.size() == 4) {
      if (parts[3].rfind("insns=", 0) != 0)
        throw CliError(where() + "fourth field must be insns=i1;i2");
      for (const auto& s : split(parts[3].substr(6), ';')) {
        try {
          std::size_t used = 0;
          c.insns.push_back(std::stoul(s, &used));
          if (used != s.size())
            throw std::invalid_argument(s);
        } catch (const std::logic_error&) {
          throw CliError(where() + "bad instruction index '" + s + "'");
        }
      }
      if (!c.has_error && !c.insns.empty())
        throw CliError(where() + "clean case lists error instructions");
    }
    for (const auto& p : {c.program, c.seed})
      if (!fs::exists(p))
        throw CliError(where() + "missing file " + p.string());
    cases.push_back(std::move(c));
  }
  if (cases.empty())
    throw CliError("manifest " + manifest.string() + " lists no cases");
  return cases;
}

const char* outcome_name(Outcome o) {
  switch (o) {
  case Outcome::TP: return "TP";
  case Outcome::FP: return "FP";
  case Outcome::FN: return "FN";
  case Outcome::TN: return "TN";
  }
  return "?";
}

Outcome classify(const CorpusCase& c, const CaseRun& run) {
  if (!c.has_error)
    return run.warnings.empty() && run.error.empty() ? Outcome::TN : Outcome::FP;
  if (!run.error.empty() || run.warnings.empty())
    return Outcome::FN;
  std::set<std::size_t> got;
  for (const auto& w : run.warnings) {
    if (!w.verified)
      return Outcome::FN;
    got.insert(w.insn);
  }
  if (!c.insns.empty() && got != std::set<std::size_t>(c.insns.begin(), c.insns.end()))
    return Outcome::FN;
  return Outcome::TP;
}

std::optional<double> AccuracyReport::tpr() const {
  if (tp + fn == 0)
    return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> AccuracyReport::tnr() const {
  if (tn + fp == 0)
    return std::nullopt;
  return static_cast<double>(tn) / static_cast<double>(tn + fp);
}

double AccuracyReport::accuracy() const {
  const auto n = tp + fp + fn + tn;
  return n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
}

CaseRunner engine_runner(const RunOptions& opts) {
  return [opts](const CorpusCase& c) {
    CaseRun run;
    try {
      auto program = load_program(c.program);
      auto seed = read_bytes(c.seed);
      auto cfg = opts.engine;
      cfg.input_dir = opts.out.empty() ? fs::path() : opts.out / c.program.stem();
      auto rep = engine::run(program, seed, cfg);
      if (!rep.complete)
        run.error = rep.diagnostics.empty() ? "incomplete run" : rep.diagnostics.back();
      for (const auto* w : rep.sat_warnings()) {
        CheckedWarning cw;
        cw.insn = w->site.insn;
        cw.sign = w->site.sign;
        cw.verified = reproduce(program, w->input, make_record(*w), cfg.step_limit).verified;
        run.warnings.push_back(cw);
      }
    } catch (const std::exception& e) {
      run.error = e.what();
    }
    return run;
  };
}

AccuracyReport run_corpus(const std::vector<CorpusCase>& cases, const CaseRunner& runner) {
  AccuracyReport rep;
  for (const auto& c : cases) {
    CaseResult r{c, runner(c)};
    r.outcome = classify(c, r.run);
    switch (r.outcome) {
    case Outcome::TP: ++rep.tp; break;
    case Outcome::FP: ++rep.fp; break;
    case Outcome::FN: ++rep.fn; break;
    case Outcome::TN: ++rep.tn; break;
    }
    rep.cases.push_back(std::move(r));
  }
  return rep;
}

void print_report(const AccuracyReport& rep, std::ostream& out) {
  auto rate = [](std::optional<double> r) {
    std::ostringstream os;
    if (r)
      os << std::fixed << std::setprecision(2) << *r;
    else
      os << "n/a";
    return os.str();
  };
  out << std::left << std::setw(28) << "case" << std::setw(8) << "expect" << std::setw(10)
      << "warnings" << std::setw(10) << "verified" << "outcome\n";
  for (const auto& r : rep.cases) {
    std::size_t verified = 0;
    std::ostringstream sites;
    for (const auto& w : r.run.warnings) {
      verified += w.verified;
      sites << (sites.tellp() > 0 ? ";" : "") << w.insn;
    }
    out << std::left << std::setw(28) << r.c.program.filename().string() << std::setw(8)
        << (r.c.has_error ? "error" : "clean") << std::setw(10) << r.run.warnings.size()
        << std::setw(10) << verified << outcome_name(r.outcome);
    if (!sites.str().empty())
      out << "  insns=" << sites.str();
    if (!r.run.error.empty())
      out << "  error: " << r.run.error;
    out << "\n";
  }
  out << "TP=" << rep.tp << " FP=" << rep.fp << " FN=" << rep.fn << " TN=" << rep.tn << "\n";
  out << "TPR=" << rate(rep.tpr()) << " TNR=" << rate(rep.tnr())
      << " accuracy=" << rate(rep.accuracy()) << "\n";
}

int cmd_corpus(const fs::path& manifest, const RunOptions& opts, std::ostream& out,
               std::ostream& err) {
  try {
    auto rep = run_corpus(parse_manifest(manifest), engine_runner(opts));
    print_report(rep, out);
    return rep.fp + rep.fn == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace truncdse::cli
