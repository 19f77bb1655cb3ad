#include "truncdse/bitvec.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace truncdse::bv {

namespace {

Expr make(Node n) { return Expr(std::make_shared<const Node>(std::move(n))); }

void check_width(unsigned w, const char* what) {
  if (w == 0 || w > kMaxWidth)
    throw BuildError(std::string(what) + ": width " + std::to_string(w) + " outside 1..64");
}

void require_same_width(const Expr& a, const Expr& b, const char* what) {
  if (!a || !b)
    throw BuildError(std::string(what) + ": null operand");
  if (a.width() != b.width())
    throw BuildError(std::string(what) + ": width mismatch " + std::to_string(a.width()) +
                     " vs " + std::to_string(b.width()));
}

void require_bool(const Expr& a, const char* what) {
  if (!a || a.width() != 1)
    throw BuildError(std::string(what) + ": operand must have width 1");
}

bool is_binary_arith(Kind k) {
  switch (k) {
  case Kind::Add: case Kind::Sub: case Kind::Mul: case Kind::And: case Kind::Or:
  case Kind::Xor: case Kind::Shl: case Kind::LShr: case Kind::AShr:
    return true;
  default:
    return false;
  }
}

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
  case Kind::Var: return "var";
  case Kind::Const: return "const";
  case Kind::Extract: return "extract";
  case Kind::Concat: return "concat";
  case Kind::ZeroExtend: return "zext";
  case Kind::SignExtend: return "sext";
  case Kind::Add: return "add";
  case Kind::Sub: return "sub";
  case Kind::Mul: return "mul";
  case Kind::And: return "and";
  case Kind::Or: return "or";
  case Kind::Xor: return "xor";
  case Kind::Shl: return "shl";
  case Kind::LShr: return "lshr";
  case Kind::AShr: return "ashr";
  case Kind::Not: return "not";
  case Kind::Neg: return "neg";
  case Kind::Eq: return "eq";
  case Kind::Ne: return "ne";
  case Kind::SLt: return "slt";
  case Kind::SLe: return "sle";
  case Kind::SGt: return "sgt";
  case Kind::SGe: return "sge";
  case Kind::ULt: return "ult";
  case Kind::ULe: return "ule";
  case Kind::UGt: return "ugt";
  case Kind::UGe: return "uge";
  case Kind::BoolAnd: return "land";
  case Kind::BoolOr: return "lor";
  case Kind::BoolNot: return "lnot";
  case Kind::Ite: return "ite";
  }
  return "?";
}

bool is_comparison(Kind k) { return k >= Kind::Eq && k <= Kind::UGe; }
bool is_bool_connective(Kind k) {
  return k == Kind::BoolAnd || k == Kind::BoolOr || k == Kind::BoolNot;
}

Expr var(std::uint32_t id, std::string name, unsigned width) {
  check_width(width, "var");
  Node n{Kind::Var, width};
  n.var_id = id;
  n.name = std::move(name);
  return make(std::move(n));
}

Expr constant(std::uint64_t value, unsigned width) {
  check_width(width, "const");
  if ((value & ~mask(width)) != 0)
    throw BuildError("const: value does not fit in " + std::to_string(width) + " bits");
  Node n{Kind::Const, width};
  n.value = value;
  return make(std::move(n));
}

Expr zeros(unsigned width) { return constant(0, width); }
Expr ones(unsigned width) { return constant(mask(width), width); }
Expr bool_const(bool b) { return constant(b ? 1 : 0, 1); }

Expr extract(unsigned high, unsigned low, const Expr& child) {
  if (!child)
    throw BuildError("extract: null operand");
  if (low > high || high >= child.width())
    throw BuildError("extract: bounds [" + std::to_string(high) + ":" + std::to_string(low) +
                     "] invalid for width " + std::to_string(child.width()));
  Node n{Kind::Extract, high - low + 1};
  n.hi = high;
  n.lo = low;
  n.kids = {child};
  return make(std::move(n));
}

Expr concat(const Expr& hi, const Expr& lo) {
  if (!hi || !lo)
    throw BuildError("concat: null operand");
  unsigned w = hi.width() + lo.width();
  check_width(w, "concat");
  Node n{Kind::Concat, w};
  n.kids = {hi, lo};
  return make(std::move(n));
}

static Expr extend(Kind k, unsigned extra, const Expr& child) {
  if (!child)
    throw BuildError("extend: null operand");
  if (extra == 0)
    return child;
  unsigned w = child.width() + extra;
  check_width(w, kind_name(k));
  Node n{k, w};
  n.hi = extra;
  n.kids = {child};
  return make(std::move(n));
}

Expr zero_extend(unsigned extra, const Expr& child) { return extend(Kind::ZeroExtend, extra, child); }
Expr sign_extend(unsigned extra, const Expr& child) { return extend(Kind::SignExtend, extra, child); }

Expr binary(Kind k, const Expr& a, const Expr& b) {
  if (!is_binary_arith(k))
    throw BuildError(std::string("binary: ") + kind_name(k) + " is not a binary bitvector operator");
  require_same_width(a, b, kind_name(k));
  Node n{k, a.width()};
  n.kids = {a, b};
  return make(std::move(n));
}

Expr add(const Expr& a, const Expr& b) { return binary(Kind::Add, a, b); }
Expr sub(const Expr& a, const Expr& b) { return binary(Kind::Sub, a, b); }
Expr mul(const Expr& a, const Expr& b) { return binary(Kind::Mul, a, b); }
Expr bit_and(const Expr& a, const Expr& b) { return binary(Kind::And, a, b); }
Expr bit_or(const Expr& a, const Expr& b) { return binary(Kind::Or, a, b); }
Expr bit_xor(const Expr& a, const Expr& b) { return binary(Kind::Xor, a, b); }
Expr shl(const Expr& a, const Expr& b) { return binary(Kind::Shl, a, b); }
Expr lshr(const Expr& a, const Expr& b) { return binary(Kind::LShr, a, b); }
Expr ashr(const Expr& a, const Expr& b) { return binary(Kind::AShr, a, b); }

Expr bit_not(const Expr& a) {
  if (!a)
    throw BuildError("not: null operand");
  Node n{Kind::Not, a.width()};
  n.kids = {a};
  return make(std::move(n));
}

Expr neg(const Expr& a) {
  if (!a)
    throw BuildError("neg: null operand");
  Node n{Kind::Neg, a.width()};
  n.kids = {a};
  return make(std::move(n));
}

Expr compare(Kind k, const Expr& a, const Expr& b) {
  if (!is_comparison(k))
    throw BuildError(std::string("compare: ") + kind_name(k) + " is not a comparison");
  require_same_width(a, b, kind_name(k));
  Node n{k, 1};
  n.kids = {a, b};
  return make(std::move(n));
}

Expr eq(const Expr& a, const Expr& b) { return compare(Kind::Eq, a, b); }
Expr ne(const Expr& a, const Expr& b) { return compare(Kind::Ne, a, b); }
Expr slt(const Expr& a, const Expr& b) { return compare(Kind::SLt, a, b); }
Expr sle(const Expr& a, const Expr& b) { return compare(Kind::SLe, a, b); }
Expr ult(const Expr& a, const Expr& b) { return compare(Kind::ULt, a, b); }
Expr ule(const Expr& a, const Expr& b) { return compare(Kind::ULe, a, b); }

Expr bool_and(const Expr& a, const Expr& b) {
  require_bool(a, "land");
  require_bool(b, "land");
  Node n{Kind::BoolAnd, 1};
  n.kids = {a, b};
  return make(std::move(n));
}

Expr bool_or(const Expr& a, const Expr& b) {
  require_bool(a, "lor");
  require_bool(b, "lor");
  Node n{Kind::BoolOr, 1};
  n.kids = {a, b};
  return make(std::move(n));
}

Expr bool_not(const Expr& a) {
  require_bool(a, "lnot");
  Node n{Kind::BoolNot, 1};
  n.kids = {a};
  return make(std::move(n));
}

Expr ite(const Expr& cond, const Expr& then_e, const Expr& else_e) {
  require_bool(cond, "ite");
  require_same_width(then_e, else_e, "ite");
  Node n{Kind::Ite, then_e.width()};
  n.kids = {cond, then_e, else_e};
  return make(std::move(n));
}

Expr negate(const Expr& cond) {
  require_bool(cond, "negate");
  auto flip = [&](Kind k) { return compare(k, cond->kids[0], cond->kids[1]); };
  switch (cond.kind()) {
  case Kind::Eq: return flip(Kind::Ne);
  case Kind::Ne: return flip(Kind::Eq);
  case Kind::SLt: return flip(Kind::SGe);
  case Kind::SGe: return flip(Kind::SLt);
  case Kind::SLe: return flip(Kind::SGt);
  case Kind::SGt: return flip(Kind::SLe);
  case Kind::ULt: return flip(Kind::UGe);
  case Kind::UGe: return flip(Kind::ULt);
  case Kind::ULe: return flip(Kind::UGt);
  case Kind::UGt: return flip(Kind::ULe);
  case Kind::BoolNot: return cond->kids[0];
  default: return bool_not(cond);
  }
}

bool same(const Expr& a, const Expr& b) {
  if (a.get() == b.get())
    return true;
  if (!a || !b)
    return false;
  const Node& x = *a;
  const Node& y = *b;
  if (x.kind != y.kind || x.width != y.width || x.var_id != y.var_id || x.value != y.value ||
      x.hi != y.hi || x.lo != y.lo || x.kids.size() != y.kids.size())
    return false;
  for (std::size_t i = 0; i < x.kids.size(); ++i)
    if (!same(x.kids[i], y.kids[i]))
      return false;
  return true;
}

std::optional<ExtractMatch> match_extract(const Expr& e) {
  if (!e || e.kind() != Kind::Extract)
    return std::nullopt;
  unsigned high = e->hi;
  unsigned low = e->lo;
  Expr inner = e->kids[0];
  // extract(h2, l2, extract(h1, l1, x)) == extract(l1 + h2, l1 + l2, x)
  while (inner.kind() == Kind::Extract) {
    high += inner->lo;
    low += inner->lo;
    inner = inner->kids[0];
  }
  return ExtractMatch{high, low, inner};
}

std::uint64_t apply(const Node& n, std::span<const std::uint64_t> k) {
  const unsigned w = n.width;
  const std::uint64_t m = mask(w);
  auto cw = [&](std::size_t i) { return n.kids[i].width(); };
  auto s = [&](std::size_t i) { return to_signed(k[i], cw(i)); };
  switch (n.kind) {
  case Kind::Var:
  case Kind::Const:
    return n.value & m;
  case Kind::Extract:
    return (k[0] >> n.lo) & m;
  case Kind::Concat:
    return ((k[0] << cw(1)) | k[1]) & m;
  case Kind::ZeroExtend:
    return k[0] & m;
  case Kind::SignExtend:
    return static_cast<std::uint64_t>(to_signed(k[0], cw(0))) & m;
  case Kind::Add: return (k[0] + k[1]) & m;
  case Kind::Sub: return (k[0] - k[1]) & m;
  case Kind::Mul: return (k[0] * k[1]) & m;
  case Kind::And: return k[0] & k[1];
  case Kind::Or: return k[0] | k[1];
  case Kind::Xor: return k[0] ^ k[1];
  case Kind::Shl: return k[1] >= w ? 0 : (k[0] << k[1]) & m;
  case Kind::LShr: return k[1] >= w ? 0 : k[0] >> k[1];
  case Kind::AShr: {
    std::int64_t v = s(0);
    return static_cast<std::uint64_t>(k[1] >= w ? (v < 0 ? -1 : 0) : v >> k[1]) & m;
  }
  case Kind::Not: return ~k[0] & m;
  case Kind::Neg: return (~k[0] + 1) & m;
  case Kind::Eq: return k[0] == k[1];
  case Kind::Ne: return k[0] != k[1];
  case Kind::SLt: return s(0) < s(1);
  case Kind::SLe: return s(0) <= s(1);
  case Kind::SGt: return s(0) > s(1);
  case Kind::SGe: return s(0) >= s(1);
  case Kind::ULt: return k[0] < k[1];
  case Kind::ULe: return k[0] <= k[1];
  case Kind::UGt: return k[0] > k[1];
  case Kind::UGe: return k[0] >= k[1];
  case Kind::BoolAnd: return k[0] & k[1] & 1;
  case Kind::BoolOr: return (k[0] | k[1]) & 1;
  case Kind::BoolNot: return ~k[0] & 1;
  case Kind::Ite: return k[0] ? k[1] : k[2];
  }
  throw EvalError("apply: unknown node kind");
}

std::uint64_t eval(const Expr& root, const Assignment& a) {
  std::unordered_map<const Node*, std::uint64_t> memo;
  std::function<std::uint64_t(const Expr&)> go = [&](const Expr& e) -> std::uint64_t {
    if (auto it = memo.find(e.get()); it != memo.end())
      return it->second;
    std::uint64_t v;
    if (e.kind() == Kind::Var) {
      auto bound = a.get(e->var_id);
      if (!bound)
        throw EvalError("eval: unbound variable '" + e->name + "' (id " +
                        std::to_string(e->var_id) + ")");
      v = *bound & mask(e.width());
    } else {
      std::uint64_t kids[3] = {0, 0, 0};
      for (std::size_t i = 0; i < e->kids.size(); ++i)
        kids[i] = go(e->kids[i]);
      v = apply(*e, std::span<const std::uint64_t>(kids, e->kids.size()));
    }
    memo.emplace(e.get(), v);
    return v;
  };
  return go(root);
}

namespace {

template <typename F>
void walk(std::span<const Expr> roots, F&& visit) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack;
  for (const auto& r : roots)
    stack.push_back(r.get());
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second)
      continue;
    visit(*n);
    for (const auto& k : n->kids)
      stack.push_back(k.get());
  }
}

}  // namespace

std::vector<VarInfo> collect_vars(std::span<const Expr> es) {
  std::map<std::uint32_t, VarInfo> vars;
  walk(es, [&](const Node& n) {
    if (n.kind == Kind::Var)
      vars.emplace(n.var_id, VarInfo{n.var_id, n.name, n.width});
  });
  std::vector<VarInfo> out;
  for (auto& [id, v] : vars)
    out.push_back(v);
  return out;
}

std::set<std::uint32_t> var_ids(const Expr& e) {
  std::set<std::uint32_t> ids;
  walk(std::span<const Expr>(&e, 1), [&](const Node& n) {
    if (n.kind == Kind::Var)
      ids.insert(n.var_id);
  });
  return ids;
}

std::vector<std::pair<std::uint64_t, unsigned>> collect_constants(std::span<const Expr> es) {
  std::set<std::pair<std::uint64_t, unsigned>> cs;
  walk(es, [&](const Node& n) {
    if (n.kind == Kind::Const)
      cs.emplace(n.value, n.width);
  });
  return {cs.begin(), cs.end()};
}

std::string to_string(const Expr& e) {
  std::ostringstream os;
  std::function<void(const Expr&)> go = [&](const Expr& x) {
    switch (x.kind()) {
    case Kind::Var:
      os << x->name;
      return;
    case Kind::Const:
      os << "0x" << std::hex << x->value << std::dec << ":" << x.width();
      return;
    case Kind::Extract:
      os << "(extract " << x->hi << " " << x->lo << " ";
      break;
    case Kind::ZeroExtend:
    case Kind::SignExtend:
      os << "(" << kind_name(x.kind()) << " " << x->hi << " ";
      break;
    default:
      os << "(" << kind_name(x.kind()) << " ";
    }
    for (std::size_t i = 0; i < x->kids.size(); ++i) {
      if (i)
        os << " ";
      go(x->kids[i]);
    }
    os << ")";
  };
  go(e);
  return os.str();
}

namespace {

class SmtPrinter {
public:
  explicit SmtPrinter(std::ostream& os) : os_(os) {}

  // Renders `e` as a term of sort (_ BitVec w).
  void bv(const Expr& e) {
    const Node& n = *e;
    switch (n.kind) {
    case Kind::Var:
      os_ << symbol(n);
      return;
    case Kind::Const:
      os_ << "(_ bv" << n.value << " " << n.width << ")";
      return;
    case Kind::Extract:
      os_ << "((_ extract " << n.hi << " " << n.lo << ") ";
      bv(n.kids[0]);
      os_ << ")";
      return;
    case Kind::ZeroExtend:
    case Kind::SignExtend:
      os_ << "((_ " << (n.kind == Kind::ZeroExtend ? "zero_extend " : "sign_extend ") << n.hi
          << ") ";
      bv(n.kids[0]);
      os_ << ")";
      return;
    case Kind::Ite:
      os_ << "(ite ";
      boolean(n.kids[0]);
      os_ << " ";
      bv(n.kids[1]);
      os_ << " ";
      bv(n.kids[2]);
      os_ << ")";
      return;
    default:
      break;
    }
    if (is_comparison(n.kind) || is_bool_connective(n.kind)) {
      os_ << "(ite ";
      boolean(e);
      os_ << " #b1 #b0)";
      return;
    }
    os_ << "(" << bv_op(n.kind);
    for (const auto& k : n.kids) {
      os_ << " ";
      bv(k);
    }
    os_ << ")";
  }

  // Renders a width-1 expression as a Bool term.
  void boolean(const Expr& e) {
    const Node& n = *e;
    if (is_comparison(n.kind)) {
      bool negated = n.kind == Kind::Ne;
      os_ << (negated ? "(not (= " : "(") << (negated ? "" : cmp_op(n.kind));
      if (!negated)
        os_ << " ";
      bv(n.kids[0]);
      os_ << " ";
      bv(n.kids[1]);
      os_ << (negated ? "))" : ")");
      return;
    }
    switch (n.kind) {
    case Kind::BoolAnd:
    case Kind::BoolOr:
      os_ << (n.kind == Kind::BoolAnd ? "(and " : "(or ");
      boolean(n.kids[0]);
      os_ << " ";
      boolean(n.kids[1]);
      os_ << ")";
      return;
    case Kind::BoolNot:
      os_ << "(not ";
      boolean(n.kids[0]);
      os_ << ")";
      return;
    case Kind::Const:
      os_ << (n.value ? "true" : "false");
      return;
    default:
      os_ << "(= ";
      bv(e);
      os_ << " #b1)";
    }
  }

  static std::string symbol(const Node& n) {
    return n.name + "!" + std::to_string(n.var_id);
  }

private:
  static const char* bv_op(Kind k) {
    switch (k) {
    case Kind::Concat: return "concat";
    case Kind::Add: return "bvadd";
    case Kind::Sub: return "bvsub";
    case Kind::Mul: return "bvmul";
    case Kind::And: return "bvand";
    case Kind::Or: return "bvor";
    case Kind::Xor: return "bvxor";
    case Kind::Shl: return "bvshl";
    case Kind::LShr: return "bvlshr";
    case Kind::AShr: return "bvashr";
    case Kind::Not: return "bvnot";
    case Kind::Neg: return "bvneg";
    default: throw BuildError(std::string("smtlib: no bitvector operator for ") + kind_name(k));
    }
  }

  static const char* cmp_op(Kind k) {
    switch (k) {
    case Kind::Eq: return "=";
    case Kind::SLt: return "bvslt";
    case Kind::SLe: return "bvsle";
    case Kind::SGt: return "bvsgt";
    case Kind::SGe: return "bvsge";
    case Kind::ULt: return "bvult";
    case Kind::ULe: return "bvule";
    case Kind::UGt: return "bvugt";
    case Kind::UGe: return "bvuge";
    default: throw BuildError("smtlib: not a comparison");
    }
  }

  std::ostream& os_;
};

}  // namespace

std::string to_smtlib(std::span<const Expr> constraints) {
  for (const auto& c : constraints)
    if (!c || c.width() != 1)
      throw BuildError("to_smtlib: constraint is not a width-1 expression");
  std::ostringstream os;
  SmtPrinter p(os);
  os << "(set-logic QF_BV)\n";
  for (const auto& v : collect_vars(constraints)) {
    Node n{Kind::Var, v.width};
    n.var_id = v.id;
    n.name = v.name;
    os << "(declare-const " << SmtPrinter::symbol(n) << " (_ BitVec " << v.width << "))\n";
  }
  for (const auto& c : constraints) {
    os << "(assert ";
    p.boolean(c);
    os << ")\n";
  }
  os << "(check-sat)\n(get-model)\n";
  return os.str();
}

}  // namespace truncdse::bv
