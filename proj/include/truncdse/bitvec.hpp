#ifndef TRUNCDSE_BITVEC_HPP
#define TRUNCDSE_BITVEC_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace truncdse::bv {

/// Bitvectors are at most 64 bits wide. Truth values are 1-bit vectors.
inline constexpr unsigned kMaxWidth = 64;

enum class Kind : std::uint8_t {
  Var,
  Const,
  Extract,
  Concat,
  ZeroExtend,
  SignExtend,
  Add,
  Sub,
  Mul,
  And,
  Or,
  Xor,
  Shl,
  LShr,
  AShr,
  Not,
  Neg,
  Eq,
  Ne,
  SLt,
  SLe,
  SGt,
  SGe,
  ULt,
  ULe,
  UGt,
  UGe,
  BoolAnd,
  BoolOr,
  BoolNot,
  Ite,
};

const char* kind_name(Kind k);

class BuildError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class EvalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::uint64_t mask(unsigned width) {
  return width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
}

/// Interpret the low `width` bits of `v` as a two's-complement integer.
inline std::int64_t to_signed(std::uint64_t v, unsigned width) {
  v &= mask(width);
  if (width < 64 && (v >> (width - 1)) & 1)
    v |= ~mask(width);
  return static_cast<std::int64_t>(v);
}

struct Node;

/// Shared handle to an immutable node. Equality via `same()` is structural.
class Expr {
public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  const Node& operator*() const { return *node_; }
  const Node* operator->() const { return node_.get(); }
  const Node* get() const { return node_.get(); }
  explicit operator bool() const { return node_ != nullptr; }

  unsigned width() const;
  Kind kind() const;

private:
  std::shared_ptr<const Node> node_;
};

struct Node {
  Kind kind;
  unsigned width;
  // Var: id. Const: value. Extract: hi/lo. Extensions: extra bits in `hi`.
  std::uint32_t var_id = 0;
  std::string name;
  std::uint64_t value = 0;
  unsigned hi = 0;
  unsigned lo = 0;
  std::vector<Expr> kids;
};

inline unsigned Expr::width() const { return node_->width; }
inline Kind Expr::kind() const { return node_->kind; }

// Leaves.
Expr var(std::uint32_t id, std::string name, unsigned width);
Expr constant(std::uint64_t value, unsigned width);
Expr zeros(unsigned width);
Expr ones(unsigned width);
Expr bool_const(bool b);

// Structure.
Expr extract(unsigned high, unsigned low, const Expr& child);
Expr concat(const Expr& hi, const Expr& lo);
Expr zero_extend(unsigned extra, const Expr& child);
Expr sign_extend(unsigned extra, const Expr& child);

// Arithmetic / bitwise; operands must have equal widths.
Expr binary(Kind k, const Expr& a, const Expr& b);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr bit_and(const Expr& a, const Expr& b);
Expr bit_or(const Expr& a, const Expr& b);
Expr bit_xor(const Expr& a, const Expr& b);
Expr shl(const Expr& a, const Expr& b);
Expr lshr(const Expr& a, const Expr& b);
Expr ashr(const Expr& a, const Expr& b);
Expr bit_not(const Expr& a);
Expr neg(const Expr& a);

// Predicates, all of width 1.
Expr compare(Kind k, const Expr& a, const Expr& b);
Expr eq(const Expr& a, const Expr& b);
Expr ne(const Expr& a, const Expr& b);
Expr slt(const Expr& a, const Expr& b);
Expr sle(const Expr& a, const Expr& b);
Expr ult(const Expr& a, const Expr& b);
Expr ule(const Expr& a, const Expr& b);
Expr bool_and(const Expr& a, const Expr& b);
Expr bool_or(const Expr& a, const Expr& b);
Expr bool_not(const Expr& a);
Expr ite(const Expr& cond, const Expr& then_e, const Expr& else_e);

/// Logical negation of a comparison (SLt <-> SGe and so on); other width-1
/// expressions get wrapped in BoolNot.
Expr negate(const Expr& cond);

bool is_comparison(Kind k);
bool is_bool_connective(Kind k);

/// Structural equality.
bool same(const Expr& a, const Expr& b);

struct ExtractMatch {
  unsigned high;
  unsigned low;
  Expr inner;
};

/// Outermost Extract with directly nested Extracts collapsed. Never looks
/// through any other node kind.
std::optional<ExtractMatch> match_extract(const Expr& e);

/// Concrete values for variables, keyed by variable id.
class Assignment {
public:
  void set(std::uint32_t id, std::uint64_t value) { values_[id] = value; }
  std::optional<std::uint64_t> get(std::uint32_t id) const {
    auto it = values_.find(id);
    if (it == values_.end())
      return std::nullopt;
    return it->second;
  }
  bool contains(std::uint32_t id) const { return values_.count(id) != 0; }
  const std::map<std::uint32_t, std::uint64_t>& values() const { return values_; }
  bool operator==(const Assignment&) const = default;

private:
  std::map<std::uint32_t, std::uint64_t> values_;
};

/// Applies one operator to already-evaluated children. Shared by the tree
/// evaluator and the solver's linearized evaluator.
std::uint64_t apply(const Node& n, std::span<const std::uint64_t> kids);

std::uint64_t eval(const Expr& e, const Assignment& a);

struct VarInfo {
  std::uint32_t id;
  std::string name;
  unsigned width;
  bool operator<(const VarInfo& o) const { return id < o.id; }
};

/// Every distinct variable in the expressions, ordered by id.
std::vector<VarInfo> collect_vars(std::span<const Expr> es);
std::set<std::uint32_t> var_ids(const Expr& e);

/// Every constant appearing in the expressions (deduplicated, ascending).
std::vector<std::pair<std::uint64_t, unsigned>> collect_constants(std::span<const Expr> es);

/// Human-readable prefix rendering for logs and test failure messages.
std::string to_string(const Expr& e);

/// QF_BV script asserting every (width-1) constraint.
std::string to_smtlib(std::span<const Expr> constraints);

}  // namespace truncdse::bv

#endif  // TRUNCDSE_BITVEC_HPP
