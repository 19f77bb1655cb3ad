#include "truncdse/engine.hpp"
#include "truncdse/shadow.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace truncdse;
using isa::Op;
using isa::Reg;
using shadow::ShadowTracker;

namespace {

constexpr std::uint64_t kBp = isa::kStackTop - 0x20;

/// Runs `text` and returns the shadow dump after instruction `after`.
std::string dump_after(const std::string& text, std::size_t after, std::vector<std::uint8_t> input = {}) {
  engine::EngineConfig cfg;
  cfg.trace_shadow = true;
  auto rep = engine::run(isa::parse_program(text), input, cfg);
  for (const auto& l : rep.shadow_trace)
    if (l.rfind(std::to_string(after) + " ", 0) == 0)
      return l.substr(l.find(' ') + 1);
  return "";
}

}  // namespace

// Stack rule 1: stores take min(shadow register size, source size).

TEST(ShadowStore, MinOfRegisterAndOperand) {
  ShadowTracker sh;
  sh.on_load(Reg::rdx, Reg::rax, std::nullopt, 1, true);  // rdx holds 1 significant byte
  sh.on_store(kBp - 0xc, Reg::rdx, 2, true);               // mov WORD PTR [ebp-0xc], dx
  EXPECT_EQ(sh.lookup_memory(kBp - 0xc), 1u);
}

TEST(ShadowStore, ConcreteSourceRemovesEntry) {
  ShadowTracker sh;
  sh.set_memory(kBp - 8, 4);
  sh.on_store(kBp - 8, Reg::rcx, 4, false);
  EXPECT_FALSE(sh.lookup_memory(kBp - 8));
}

TEST(ShadowStore, UnknownRegisterUsesOperandSize) {
  ShadowTracker sh;
  sh.on_store(kBp - 8, Reg::rcx, 4, true);  // mov DWORD PTR [rbp-8], ecx
  EXPECT_EQ(sh.lookup_memory(kBp - 8), 4u);
}

TEST(ShadowStore, OverlappingEntriesCleared) {
  ShadowTracker sh;
  sh.set_memory(kBp - 8, 8);
  sh.set_memory(kBp - 12, 2);
  sh.on_store(kBp - 4, Reg::rax, 1, true);
  EXPECT_FALSE(sh.lookup_memory(kBp - 8));
  EXPECT_EQ(sh.lookup_memory(kBp - 12), 2u);
  EXPECT_EQ(sh.lookup_memory(kBp - 4), 1u);
}

// Stack rule 2: push records at the new stack pointer.

TEST(ShadowPush, TruncatedRegisters) {
  ShadowTracker sh;
  sh.on_load(Reg::rdx, Reg::rax, std::nullopt, 1, true);  // movsx edx, al
  sh.on_conversion(Op::Cwde, true);                        // cwde
  sh.on_push(kBp - 8, Reg::rdx, std::nullopt, 8, true);    // push edx
  sh.on_push(kBp - 16, Reg::rax, std::nullopt, 8, true);   // push eax
  EXPECT_EQ(sh.lookup_memory(kBp - 8), 1u);
  EXPECT_EQ(sh.lookup_memory(kBp - 16), 2u);
}

TEST(ShadowPush, ConcreteImmediate) {
  ShadowTracker sh;
  sh.set_memory(kBp - 8, 4);
  sh.on_push(kBp - 8, std::nullopt, std::nullopt, 8, false);
  EXPECT_FALSE(sh.lookup_memory(kBp - 8));
}

TEST(ShadowPush, MemorySourcePropagates) {
  ShadowTracker sh;
  sh.set_memory(kBp - 4, 2);
  sh.on_push(kBp - 16, std::nullopt, kBp - 4, 8, true);
  EXPECT_EQ(sh.lookup_memory(kBp - 16), 2u);
}

// Register rule 1: loads take min(shadow size, source size).

TEST(ShadowLoad, CalleeReloadsTruncatedArgument) {
  ShadowTracker sh;
  sh.set_memory(kBp + 0x10, 1);
  sh.on_load(Reg::rdx, std::nullopt, kBp + 0x10, 4, true);  // mov edx, DWORD PTR [ebp+0x8]
  EXPECT_EQ(sh.lookup_register(Reg::rdx), 1u);
}

TEST(ShadowLoad, UnknownRegisterSource) {
  ShadowTracker sh;
  sh.on_load(Reg::rcx, Reg::rbx, std::nullopt, 4, true);  // mov ecx, ebx
  EXPECT_EQ(sh.lookup_register(Reg::rcx), 4u);
}

TEST(ShadowLoad, ConcreteSourceRemoves) {
  ShadowTracker sh;
  sh.on_other_write(Reg::rax, 4, true);
  sh.on_load(Reg::rax, std::nullopt, std::nullopt, 1, false);  // mov al, 7
  EXPECT_FALSE(sh.lookup_register(Reg::rax));
}

TEST(ShadowLoad, ExtensionKeepsSourceSize) {
  ShadowTracker sh;
  sh.set_memory(kBp - 2, 2);
  sh.on_load(Reg::rax, std::nullopt, kBp - 2, 2, true);  // movsx eax, WORD PTR [...]
  EXPECT_EQ(sh.lookup_register(Reg::rax), 2u);
}

// Register rule 2: pop reads the size at the old stack pointer.

TEST(ShadowPop, TakesStackSize) {
  ShadowTracker sh;
  sh.set_memory(kBp - 8, 2);
  sh.on_pop(Reg::rax, kBp - 8, true);
  EXPECT_EQ(sh.lookup_register(Reg::rax), 2u);
}

TEST(ShadowPop, NoEntryConcrete) {
  ShadowTracker sh;
  sh.on_other_write(Reg::rax, 4, true);
  sh.on_pop(Reg::rax, kBp - 8, false);
  EXPECT_FALSE(sh.lookup_register(Reg::rax));
}

TEST(ShadowPop, NoEntrySymbolicIsUnknown) {
  ShadowTracker sh;
  sh.on_other_write(Reg::rax, 4, true);
  sh.on_pop(Reg::rax, kBp - 8, true);
  EXPECT_FALSE(sh.lookup_register(Reg::rax));
}

// Register rule 3: conversions set the extended size.

TEST(ShadowConversion, Sizes) {
  ShadowTracker sh;
  sh.on_conversion(Op::Cwde, true);
  EXPECT_EQ(sh.lookup_register(Reg::rax), 2u);
  sh.on_conversion(Op::Cbw, true);
  EXPECT_EQ(sh.lookup_register(Reg::rax), 1u);
  sh.on_conversion(Op::Cdqe, true);
  EXPECT_EQ(sh.lookup_register(Reg::rax), 4u);
  sh.on_conversion(Op::Cdqe, false);
  EXPECT_FALSE(sh.lookup_register(Reg::rax));
}

// Register rule 4: any other write takes the destination size.

TEST(ShadowOtherWrite, AddWidensToDestination) {
  ShadowTracker sh;
  sh.on_conversion(Op::Cbw, true);
  sh.on_other_write(Reg::rax, 4, true);  // add eax, 0xffffff00
  EXPECT_EQ(sh.lookup_register(Reg::rax), 4u);
}

TEST(ShadowOtherWrite, ConcreteResultRemoves) {
  ShadowTracker sh;
  sh.on_other_write(Reg::rax, 4, true);
  sh.on_other_write(Reg::rax, 4, false);  // xor eax, eax
  EXPECT_FALSE(sh.lookup_register(Reg::rax));
}

TEST(ShadowOtherWrite, ByteDestination) {
  ShadowTracker sh;
  sh.on_other_write(Reg::rbx, 1, true);  // sub bl, 1
  EXPECT_EQ(sh.lookup_register(Reg::rbx), 1u);
}

// Register rule 5: modeled functions.

TEST(ShadowModeled, ReturnWidth) {
  ShadowTracker sh;
  sh.on_modeled_function_return(Reg::rax, true, 4, true);  // read_i32 into eax
  EXPECT_EQ(sh.lookup_register(Reg::rax), 4u);
  sh.on_modeled_function_return(Reg::rax, false, 0, true);  // print
  EXPECT_FALSE(sh.lookup_register(Reg::rax));
  sh.on_modeled_function_return(Reg::rax, true, 1, true);  // read_u8 into al
  EXPECT_EQ(sh.lookup_register(Reg::rax), 1u);
}

// Frames.

TEST(ShadowFrames, RetDropsCalleeEntries) {
  ShadowTracker sh;
  sh.on_call(kBp - 0x40);
  sh.set_memory(kBp - 0x50, 4);
  EXPECT_EQ(sh.lookup_memory(kBp - 0x50), 4u);
  sh.on_ret();
  EXPECT_FALSE(sh.lookup_memory(kBp - 0x50));
}

TEST(ShadowFrames, DepthCountsCalls) {
  ShadowTracker sh;
  for (int n = 0; n < 5; ++n) {
    EXPECT_EQ(sh.depth(), static_cast<std::size_t>(n) + 1);
    sh.on_call(kBp - 0x100 * (n + 1));
  }
  EXPECT_EQ(sh.depth(), 6u);
}

TEST(ShadowFrames, ArgumentsVisibleFromCallee) {
  ShadowTracker sh;
  sh.set_memory(kBp - 8, 1);   // caller pushed an argument
  sh.set_memory(kBp + 8, 4);   // caller local
  sh.set_memory(kBp - 64, 2);  // caller entry below the callee's entry rsp
  sh.on_call(kBp - 16);
  EXPECT_EQ(sh.lookup_memory(kBp - 8), 1u);
  EXPECT_EQ(sh.lookup_memory(kBp + 8), 4u);
  EXPECT_FALSE(sh.lookup_memory(kBp - 64));
  sh.on_call(kBp - 48);  // the grandchild sees only its parent
  EXPECT_FALSE(sh.lookup_memory(kBp - 8));
}

TEST(ShadowFrames, CalleeWritesStayInCalleeFrame) {
  ShadowTracker sh;
  sh.on_call(kBp - 16);
  sh.set_memory(kBp - 32, 2);
  EXPECT_TRUE(sh.frames()[0].sizes.empty());
  EXPECT_EQ(sh.frames()[1].sizes.at(kBp - 32), 2u);
}

TEST(ShadowDump, Format) {
  ShadowTracker sh;
  sh.on_conversion(Op::Cwde, true);
  sh.on_other_write(Reg::rcx, 1, true);
  sh.set_memory(0x7ffeff00, 1);
  EXPECT_EQ(sh.dump(), "shadow: regs{rax:2,rcx:1} frame0{0x7ffeff00:1}");
}

// Propagating through any chain of mov/push/pop never grows the size.
TEST(ShadowProperty, MinRuleMonotone) {
  std::mt19937 rng(1);
  const Reg regs[] = {Reg::rax, Reg::rcx, Reg::rdx, Reg::rbx};
  const unsigned sizes[] = {1, 2, 4, 8};
  for (int t = 0; t < 500; ++t) {
    ShadowTracker sh;
    unsigned start = sizes[rng() % 4];
    Reg cur = Reg::rax;
    sh.on_modeled_function_return(cur, true, start, true);
    std::uint64_t sp = kBp;
    for (int k = 0; k < 20; ++k) {
      unsigned before = *sh.lookup_register(cur);
      Reg next = regs[rng() % 4];
      switch (rng() % 3) {
      case 0:
        sh.on_load(next, cur, std::nullopt, sizes[rng() % 4], true);
        break;
      case 1:
        sh.on_store(sp - 8, cur, sizes[rng() % 4], true);
        sh.on_load(next, std::nullopt, sp - 8, sizes[rng() % 4], true);
        break;
      default:
        sh.on_push(sp - 8, cur, std::nullopt, 8, true);
        sh.on_pop(next, sp - 8, true);
        break;
      }
      cur = next;
      ASSERT_LE(*sh.lookup_register(cur), before);
    }
  }
}

// The same rules observed through the engine.

TEST(ShadowEngine, CallerTruncationsReachCallee) {
  const std::string prog =
      "main:\n"
      "  read_i32 eax\n"     // 0
      "  movsx edx, al\n"    // 1
      "  cwde\n"             // 2
      "  push rdx\n"         // 3
      "  push rax\n"         // 4
      "  call foo\n"         // 5
      "  exit\n"             // 6
      "foo:\n"
      "  mov edx, DWORD PTR [rsp+8]\n"   // 7
      "  mov ecx, DWORD PTR [rsp+16]\n"  // 8
      "  ret\n";
  std::vector<std::uint8_t> in = {5, 0, 0, 0};
  EXPECT_EQ(dump_after(prog, 0, in), "shadow: regs{rax:4} frame0{}");
  EXPECT_EQ(dump_after(prog, 1, in), "shadow: regs{rax:4,rdx:1} frame0{}");
  EXPECT_EQ(dump_after(prog, 2, in), "shadow: regs{rax:2,rdx:1} frame0{}");
  EXPECT_EQ(dump_after(prog, 4, in), "shadow: regs{rax:2,rdx:1} frame0{0x7ffefff0:2,0x7ffefff8:1}");
  EXPECT_EQ(dump_after(prog, 8, in),
            "shadow: regs{rax:2,rcx:1,rdx:2} frame0{0x7ffefff0:2,0x7ffefff8:1} frame1{}");
}

TEST(ShadowEngine, ReadIntoRegister) {
  EXPECT_EQ(dump_after("read_u8 al\nexit\n", 0, {1}), "shadow: regs{rax:1} frame0{}");
  EXPECT_EQ(dump_after("read_i32 eax\nprint eax\nexit\n", 1, {1, 0, 0, 0}), "shadow: regs{} frame0{}");
}

TEST(ShadowEngine, AddWidens) {
  EXPECT_EQ(dump_after("read_i8 al\ncbw\nadd eax, 0xffffff00\nexit\n", 2, {1}),
            "shadow: regs{rax:4} frame0{}");
  EXPECT_EQ(dump_after("read_i8 al\nxor eax, eax\nexit\n", 1, {1}), "shadow: regs{} frame0{}");
}
