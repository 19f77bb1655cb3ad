#include "truncdse/checker.hpp"
#include <fstream>
#include <sstream>
#include "truncdse/engine.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace truncdse;
using checker::Signedness;
using checker::SignednessSource;
using checker::TruncationSite;

namespace {

TruncationSite site16to8(Signedness s) {
  TruncationSite site;
  site.var = bv::var(1, "x", 16);
  site.actual_size = 2;
  site.kept_size = 1;
  site.high = 15;
  site.low = 8;
  site.sign = s;
  return site;
}

engine::RunReport run(const std::string& text, std::vector<std::uint8_t> input) {
  return engine::run(isa::parse_program(text), input, {});
}

std::vector<std::size_t> warned_insns(const engine::RunReport& rep) {
  std::vector<std::size_t> v;
  for (const auto& w : rep.warnings)
    v.push_back(w.site.insn);
  return v;
}

}  // namespace

TEST(Predicate, SignedTruthTable) {
  auto pred = checker::build_predicate(site16to8(Signedness::Signed));
  int count = 0;
  for (std::uint64_t c = 0; c < 256; ++c) {
    bv::Assignment a;
    a.set(1, c << 8);
    const bool want = c != 0x00 && c != 0xFF;
    ASSERT_EQ(bv::eval(pred, a) == 1, want) << c;
    ASSERT_EQ(checker::concrete_truncation(c, 8, Signedness::Signed), want);
    count += want;
  }
  EXPECT_EQ(count, 254);
}

TEST(Predicate, UnsignedTruthTable) {
  auto pred = checker::build_predicate(site16to8(Signedness::Unsigned));
  int count = 0;
  for (std::uint64_t c = 0; c < 256; ++c) {
    bv::Assignment a;
    a.set(1, (c << 8) | 0x5A);
    const bool want = c != 0;
    ASSERT_EQ(bv::eval(pred, a) == 1, want) << c;
    ASSERT_EQ(checker::concrete_truncation(c, 8, Signedness::Unsigned), want);
    count += want;
  }
  EXPECT_EQ(count, 255);
}

TEST(Predicate, LowBitsIgnored) {
  auto pred = checker::build_predicate(site16to8(Signedness::Signed));
  for (std::uint64_t lo = 0; lo < 256; ++lo) {
    bv::Assignment a;
    a.set(1, 0x0100 | lo);
    ASSERT_EQ(bv::eval(pred, a), 1u);
    a.set(1, lo);
    ASSERT_EQ(bv::eval(pred, a), 0u);
  }
}

// A negative value whose cropped bits are all ones is not reported even
// when the kept byte's sign bit disagrees (0xFF7F -> +127).
TEST(Predicate, AllOnesCroppedNeverReported) {
  auto pred = checker::build_predicate(site16to8(Signedness::Signed));
  bv::Assignment a;
  a.set(1, 0xFF7F);
  EXPECT_EQ(bv::eval(pred, a), 0u);
}

TEST(Predicate, Structure) {
  auto s = site16to8(Signedness::Unsigned);
  auto p = checker::build_predicate(s);
  EXPECT_EQ(p.kind(), bv::Kind::BoolNot);
  EXPECT_EQ(p->kids[0].kind(), bv::Kind::Eq);
  auto crop = checker::cropped_bits(s);
  auto m = bv::match_extract(crop);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->high, 15u);
  EXPECT_EQ(m->low, 8u);
  auto bad = s;
  bad.kept_size = 2;
  EXPECT_THROW(checker::build_predicate(bad), bv::BuildError);
}

TEST(Signedness, HintWins) {
  auto rep = run("read_u32 eax\ncmp eax, 5\njl out\nmov WORD PTR [rsp-8], ax\nout: exit\n", {9, 0, 0, 0});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.warnings[0].site.sign, Signedness::Unsigned);
  EXPECT_EQ(rep.warnings[0].site.sign_from, SignednessSource::Hint);
}

TEST(Signedness, MostRecentReadWins) {
  auto rep = run(
      "read_i8 al\nread_u8 bl\nmovzx eax, al\nmovzx ebx, bl\nadd eax, ebx\n"
      "mov BYTE PTR [rsp-8], al\nexit\n",
      {1, 2});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.warnings[0].site.sign, Signedness::Unsigned);
}

TEST(Signedness, BranchSliceLastRelatedJump) {
  const char* prog =
      "read_b32 eax\nread_b32 ebx\n"
      "cmp eax, 5\n%s over\nover:\n"
      "cmp ebx, 7\njl skip\nskip:\n"
      "mov WORD PTR [rsp-8], ax\nexit\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, prog, "ja");
  auto rep = run(buf, {9, 0, 0, 0, 9, 0, 0, 0});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.warnings[0].site.sign, Signedness::Unsigned);
  EXPECT_EQ(rep.warnings[0].site.sign_from, SignednessSource::BranchSlice);

  std::snprintf(buf, sizeof buf, prog, "jg");
  rep = run(buf, {9, 0, 0, 0, 9, 0, 0, 0});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.warnings[0].site.sign, Signedness::Signed);
  EXPECT_EQ(rep.warnings[0].site.sign_from, SignednessSource::BranchSlice);
}

TEST(Signedness, DefaultSigned) {
  auto rep = run("read_b32 eax\nmov WORD PTR [rsp-8], ax\nexit\n", {9, 0, 0, 0});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.warnings[0].site.sign, Signedness::Signed);
  EXPECT_EQ(rep.warnings[0].site.sign_from, SignednessSource::Default);
}

TEST(Scenario, MemorySourceNarrowerThanTracked) {
  auto rep = run("read_i32 DWORD PTR [rsp-8]\nmov ax, WORD PTR [rsp-8]\nexit\n", {1, 0, 0, 0});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.warnings[0].site.source, checker::SourceKind::Memory);
  EXPECT_EQ(rep.warnings[0].site.low, 16u);
  EXPECT_EQ(rep.warnings[0].site.high, 31u);
}

TEST(Scenario, MemorySourceSameWidthIsSilent) {
  auto rep = run("read_i32 DWORD PTR [rsp-8]\nmov eax, DWORD PTR [rsp-8]\nmovsx rbx, DWORD PTR [rsp-8]\nexit\n",
                 {1, 0, 0, 0});
  EXPECT_TRUE(rep.warnings.empty());
}

TEST(Scenario, RegisterTrackedNarrowing) {
  auto rep = run("read_i32 eax\nmov bx, ax\nmov cl, bl\nexit\n", {1, 0, 0, 0});
  // mov bx, ax narrows 4 -> 2; rbx is then tracked at 2 and mov cl, bl narrows 2 -> 1
  EXPECT_EQ(warned_insns(rep), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(rep.warnings[1].site.high, 15u);
  EXPECT_EQ(rep.warnings[1].site.low, 8u);
}

TEST(Scenario, UntrackedSubregisterNeedsExtract) {
  // pop of a symbolic value with no stack entry leaves rax untracked
  auto rep = run(
      "read_i32 DWORD PTR [rsp-8]\nmov eax, DWORD PTR [rsp-8]\nmov DWORD PTR [rsp-16], eax\n"
      "sub rsp, 16\npop rbx\nadd rsp, 8\nmov cx, bx\nexit\n",
      {1, 0, 0, 0});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.warnings[0].site.insn, 6u);
  // bx reads the low half of the popped bytes, which is the 32-bit input
  EXPECT_EQ(rep.warnings[0].site.actual_size, 4u);
}

TEST(Scenario, ConversionNarrowerThanTracked) {
  auto rep = run("read_i32 eax\ncwde\ncbw\nexit\n", {1, 0, 0, 0});
  EXPECT_EQ(warned_insns(rep), (std::vector<std::size_t>{1, 2}));
  auto rep2 = run("read_i8 al\ncbw\ncwde\ncdqe\nexit\n", {1});
  EXPECT_TRUE(rep2.warnings.empty());
}

TEST(Scenario, ConcreteValuesIgnored) {
  auto rep = run("mov eax, 70000\nmov WORD PTR [rsp-8], ax\ncwde\nexit\n", {});
  EXPECT_TRUE(rep.warnings.empty());
  EXPECT_TRUE(rep.job_log.empty());
}

TEST(Dedup, OneJobPerInstructionAndSign) {
  auto rep = run(
      "mov ecx, 0\nloop:\nread_i32 eax\nmov WORD PTR [rsp-8], ax\nadd ecx, 1\ncmp ecx, 5\njl loop\nexit\n",
      std::vector<std::uint8_t>(20, 1));
  EXPECT_EQ(rep.job_log.size(), 1u);
  EXPECT_EQ(rep.warnings.size(), 1u);
}

TEST(Job, SliceKeepsOnlyRelatedBranches) {
  auto rep = run(
      "read_u8 al\nread_u8 bl\nread_u8 cl\n"
      "cmp bl, 3\nja a\na:\n"      // unrelated to rax
      "cmp al, cl\njb b\nb:\n"     // links rax to rcx
      "cmp cl, 5\njb c\nc:\n"      // related through rcx
      "movzx eax, al\nadd eax, 250\nmov BYTE PTR [rsp-8], al\nexit\n",
      {2, 10, 4});
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.path.size(), 3u);
  // a + 250 > 255 needs a >= 6 but a < c < 5. With b in the job the space
  // would be 24 bits and too large to refute.
  EXPECT_EQ(rep.warnings[0].verdict.status, solver::Status::Unsat);
  EXPECT_EQ(rep.warnings[0].verdict.evaluations, 65536u);
}

TEST(Job, LayoutHoldsPredicateVariables) {
  engine::MachineState st;
  st.inputs = {{1, "a", 16, 0, 0, isa::ReadHint::Unsigned, 3}, {2, "b", 16, 1, 2, isa::ReadHint::Unsigned, 4}};
  auto a = bv::var(1, "a", 16);
  auto site = site16to8(Signedness::Unsigned);
  site.var = a;
  auto job = checker::make_job(site, st);
  ASSERT_EQ(job.layout.size(), 1u);
  EXPECT_EQ(job.layout[0].var_id, 1u);
  EXPECT_EQ(job.layout[0].seed_value, 3u);
  EXPECT_EQ(job.constraints.size(), 1u);
}

// The call-argument false-positive trap: only the caller's narrowing
// instructions get jobs; the callee's stores get none.
TEST(FalsePositiveTrap, OnlyCallerSites) {
  std::ifstream in(std::string(TRUNCDSE_CORPUS_DIR) + "/05_call_args.asm");
  std::stringstream ss;
  ss << in.rdbuf();
  auto prog = isa::parse_program(ss.str());
  auto rep = engine::run(prog, std::vector<std::uint8_t>{5, 0, 0, 0}, {});
  ASSERT_EQ(rep.job_log.size(), 2u);
  EXPECT_EQ(warned_insns(rep), (std::vector<std::size_t>{5, 7}));
  EXPECT_EQ(prog.insns[5].text, "movsx edx, al");
  EXPECT_EQ(prog.insns[7].text, "cwde");
  for (const auto& w : rep.warnings)
    EXPECT_EQ(w.verdict.status, solver::Status::Sat);
  const std::size_t foo = prog.labels.at("foo");
  for (const auto& w : rep.warnings)
    EXPECT_LT(w.site.insn, foo);
}

// Without the shadow structures the callee's stores look like narrowing of
// an extract; check that the trap really is one.
TEST(FalsePositiveTrap, CalleeStoresAreNarrowingsOfExtracts) {
  auto rep = run(
      "read_i32 eax\nmovsx edx, al\npush rdx\npop rcx\nmov BYTE PTR [rsp-8], cl\nexit\n", {5, 0, 0, 0});
  EXPECT_EQ(warned_insns(rep), (std::vector<std::size_t>{1}));
}
