#include "truncdse/bitvec.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace truncdse::bv;

namespace {

Assignment none() { return {}; }

}  // namespace

TEST(Bitvec, ExtractWidth) {
  auto v = var(0, "v", 32);
  EXPECT_EQ(extract(15, 0, v).width(), 16u);
  EXPECT_EQ(extract(31, 31, v).width(), 1u);
}

TEST(Bitvec, ExtractOfConstants) {
  EXPECT_EQ(eval(extract(15, 0, constant(0x12345678, 32)), none()), 0x5678u);
  EXPECT_EQ(eval(extract(31, 16, constant(0x0001FFFF, 32)), none()), 0x0001u);
}

TEST(Bitvec, ExtractBoundsRejected) {
  auto v = var(0, "v", 16);
  EXPECT_THROW(extract(16, 0, v), BuildError);
  EXPECT_THROW(extract(3, 4, v), BuildError);
  try {
    extract(20, 2, v);
    FAIL();
  } catch (const BuildError& e) {
    EXPECT_NE(std::string(e.what()).find("20"), std::string::npos);
  }
}

TEST(Bitvec, WidthDiscipline) {
  auto a = var(0, "a", 8), b = var(1, "b", 16);
  EXPECT_THROW(add(a, b), BuildError);
  EXPECT_THROW(eq(a, b), BuildError);
  EXPECT_THROW(constant(0x100, 8), BuildError);
  EXPECT_THROW(bool_and(a, a), BuildError);
  EXPECT_EQ(concat(a, b).width(), 24u);
  EXPECT_EQ(zero_extend(8, a).width(), 16u);
  EXPECT_EQ(sign_extend(56, a).width(), 64u);
  EXPECT_EQ(ult(a, a).width(), 1u);
}

TEST(Bitvec, EvalExamples) {
  EXPECT_EQ(eval(eq(constant(5, 8), constant(5, 8)), none()), 1u);
  EXPECT_EQ(eval(add(constant(0xFFFF, 16), constant(1, 16)), none()), 0u);
  EXPECT_EQ(eval(sign_extend(8, constant(0x80, 8)), none()), 0xFF80u);
  EXPECT_EQ(eval(zero_extend(8, constant(0x80, 8)), none()), 0x0080u);
  EXPECT_EQ(eval(concat(constant(0xAB, 8), constant(0xCD, 8)), none()), 0xABCDu);
}

TEST(Bitvec, UnboundVariableNamed) {
  try {
    eval(add(var(7, "size", 16), constant(1, 16)), none());
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_NE(std::string(e.what()).find("size"), std::string::npos);
  }
}

// Every binary operator against plain integer arithmetic on all 8-bit pairs.
TEST(Bitvec, EightBitOperatorsExhaustive) {
  auto x = var(0, "x", 8), y = var(1, "y", 8);
  const std::pair<Expr, std::function<std::uint64_t(std::uint8_t, std::uint8_t)>> ops[] = {
      {add(x, y), [](std::uint8_t a, std::uint8_t b) { return std::uint8_t(a + b); }},
      {sub(x, y), [](std::uint8_t a, std::uint8_t b) { return std::uint8_t(a - b); }},
      {mul(x, y), [](std::uint8_t a, std::uint8_t b) { return std::uint8_t(a * b); }},
      {bit_and(x, y), [](std::uint8_t a, std::uint8_t b) { return std::uint8_t(a & b); }},
      {bit_or(x, y), [](std::uint8_t a, std::uint8_t b) { return std::uint8_t(a | b); }},
      {bit_xor(x, y), [](std::uint8_t a, std::uint8_t b) { return std::uint8_t(a ^ b); }},
      {shl(x, y), [](std::uint8_t a, std::uint8_t b) { return b >= 8 ? 0 : std::uint8_t(a << b); }},
      {lshr(x, y), [](std::uint8_t a, std::uint8_t b) { return b >= 8 ? 0 : std::uint8_t(a >> b); }},
      {ashr(x, y),
       [](std::uint8_t a, std::uint8_t b) {
         int sa = static_cast<std::int8_t>(a);
         return std::uint8_t(b >= 8 ? (sa < 0 ? 0xFF : 0) : (sa >> b));
       }},
      {slt(x, y), [](std::uint8_t a, std::uint8_t b) { return std::int8_t(a) < std::int8_t(b); }},
      {sle(x, y), [](std::uint8_t a, std::uint8_t b) { return std::int8_t(a) <= std::int8_t(b); }},
      {ult(x, y), [](std::uint8_t a, std::uint8_t b) { return a < b; }},
      {ule(x, y), [](std::uint8_t a, std::uint8_t b) { return a <= b; }},
      {ne(x, y), [](std::uint8_t a, std::uint8_t b) { return a != b; }},
      {compare(Kind::SGt, x, y), [](std::uint8_t a, std::uint8_t b) { return std::int8_t(a) > std::int8_t(b); }},
      {compare(Kind::UGe, x, y), [](std::uint8_t a, std::uint8_t b) { return a >= b; }},
  };
  Assignment a;
  for (unsigned i = 0; i < 256; ++i)
    for (unsigned j = 0; j < 256; ++j) {
      a.set(0, i);
      a.set(1, j);
      for (const auto& [e, f] : ops)
        ASSERT_EQ(eval(e, a), static_cast<std::uint64_t>(f(std::uint8_t(i), std::uint8_t(j))))
            << to_string(e) << " at " << i << "," << j;
    }
}

TEST(Bitvec, NegateFlipsTruth) {
  auto x = var(0, "x", 8), y = var(1, "y", 8);
  std::mt19937_64 rng(7);
  for (Kind k : {Kind::Eq, Kind::Ne, Kind::SLt, Kind::SLe, Kind::SGt, Kind::SGe, Kind::ULt, Kind::ULe,
                 Kind::UGt, Kind::UGe}) {
    auto c = compare(k, x, y);
    auto n = negate(c);
    for (int t = 0; t < 200; ++t) {
      Assignment a;
      a.set(0, rng() & 0xFF);
      a.set(1, rng() & 0xFF);
      ASSERT_EQ(eval(c, a) ^ eval(n, a), 1u) << kind_name(k);
    }
  }
}

TEST(Bitvec, MatchExtract) {
  auto v = var(0, "v", 32);
  auto m = match_extract(extract(15, 0, v));
  ASSERT_TRUE(m);
  EXPECT_EQ(m->high, 15u);
  EXPECT_EQ(m->low, 0u);
  EXPECT_TRUE(same(m->inner, v));
  EXPECT_FALSE(match_extract(add(v, v)));
  EXPECT_FALSE(match_extract(zero_extend(32, extract(7, 0, v))));
  auto nested = match_extract(extract(7, 0, extract(15, 0, v)));
  ASSERT_TRUE(nested);
  EXPECT_EQ(nested->high, 7u);
  EXPECT_EQ(nested->low, 0u);
  EXPECT_TRUE(same(nested->inner, v));
}

TEST(Bitvec, ExtractCollapsePreservesValue) {
  std::mt19937_64 rng(42);
  auto v = var(0, "v", 64);
  for (int t = 0; t < 2000; ++t) {
    unsigned l1 = rng() % 64, h1 = l1 + rng() % (64 - l1);
    unsigned w1 = h1 - l1 + 1;
    unsigned l2 = rng() % w1, h2 = l2 + rng() % (w1 - l2);
    auto inner = extract(h1, l1, v);
    auto outer = extract(h2, l2, inner);
    auto m = match_extract(outer);
    ASSERT_TRUE(m);
    auto flat = extract(m->high, m->low, m->inner);
    Assignment a;
    std::uint64_t x = rng();
    a.set(0, x);
    const std::uint64_t by_hand = (((x >> l1) & mask(w1)) >> l2) & mask(h2 - l2 + 1);
    ASSERT_EQ(eval(outer, a), by_hand);
    ASSERT_EQ(eval(flat, a), by_hand);
    ASSERT_EQ(m->low, l1 + l2);
    ASSERT_EQ(m->high, l1 + h2);
  }
}

TEST(Bitvec, ExtractMatchesShift) {
  std::mt19937_64 rng(3);
  auto v = var(0, "v", 64);
  for (int t = 0; t < 2000; ++t) {
    unsigned l = rng() % 64, h = l + rng() % (64 - l);
    std::uint64_t x = rng();
    Assignment a;
    a.set(0, x);
    unsigned w = h - l + 1;
    std::uint64_t expect = w == 64 ? x : (x >> l) % (std::uint64_t{1} << w);
    ASSERT_EQ(eval(extract(h, l, v), a), expect);
  }
}

TEST(Bitvec, Sharing) {
  auto v = var(0, "v", 16);
  Expr e = v;
  for (int i = 0; i < 200; ++i)
    e = add(e, e);  // a DAG of depth 200; a tree walk would never finish
  Assignment a;
  a.set(0, 1);
  EXPECT_EQ(eval(e, a), 0u);
  EXPECT_EQ(collect_vars(std::span<const Expr>(&e, 1)).size(), 1u);
}

TEST(Bitvec, SmtlibSkeleton) {
  auto v = var(3, "v", 8);
  Expr cs[] = {eq(v, constant(3, 8))};
  auto s = to_smtlib(cs);
  EXPECT_EQ(s.rfind("(set-logic QF_BV)", 0), 0u);
  EXPECT_NE(s.find("(declare-const v!3 (_ BitVec 8))"), std::string::npos);
  EXPECT_NE(s.find("(assert (= v!3 (_ bv3 8)))"), std::string::npos);
  EXPECT_NE(s.find("(check-sat)"), std::string::npos);
  EXPECT_NE(s.find("(get-model)"), std::string::npos);
}

TEST(Bitvec, SmtlibEmptyAndErrors) {
  auto s = to_smtlib({});
  EXPECT_EQ(s.find("assert"), std::string::npos);
  EXPECT_NE(s.find("(check-sat)"), std::string::npos);
  Expr bad[] = {var(0, "x", 8)};
  EXPECT_THROW(to_smtlib(bad), BuildError);
}

TEST(Bitvec, SmtlibDeclaresEachVariableOnce) {
  auto x = var(1, "x", 16), y = var(2, "y", 16);
  Expr cs[] = {ult(x, y), ne(add(x, y), constant(0, 16)), eq(extract(0, 0, x), ite(ult(x, y), ones(1), zeros(1)))};
  auto s = to_smtlib(cs);
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1))
      ++n;
    return n;
  };
  EXPECT_EQ(count("declare-const"), 2u);
  EXPECT_EQ(count("(assert"), 3u);
}
