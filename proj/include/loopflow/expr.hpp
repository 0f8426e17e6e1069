#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "loopflow/errors.hpp"

namespace loopflow {

// AST for the causal block-expression language.
//
// Grammar (whitespace-insensitive):
//   expr    := ternary
//   ternary := or ( "?" expr ":" expr )?
//   or      := cmp ( "xor" cmp )*
//   cmp     := add ( ("=="|"!="|"<"|"<=") add )?
//   add     := mul ( ("+"|"-") mul )*
//   mul     := atom ( ("*"|"mod") atom )*
//   atom    := INT | IDENT "[" "t" ("-" INT)? "]" | "(" expr ")"
//
// Identifiers are [a-zA-Z_][a-zA-Z0-9_]*; "xor", "mod" and "t" are reserved.
// All lags are non-negative integer literals, so every expression has a
// finite causal window by construction.

enum class BinOp : std::uint8_t { Add, Sub, Mul, Mod, Xor, Eq, Ne, Lt, Le };

const char* bin_op_token(BinOp op);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind : std::uint8_t { IntLit, SignalRef, Binary, Conditional };

  Kind kind;

  // IntLit
  long long value = 0;

  // SignalRef
  std::string signal;
  int lag = 0;
  int signal_id = -1;  // filled by bind(); -1 while unbound

  // Binary
  BinOp op = BinOp::Add;
  ExprPtr lhs, rhs;

  // Conditional
  ExprPtr cond, then_branch, else_branch;

  static ExprPtr int_lit(long long v);
  static ExprPtr signal_ref(std::string name, int lag);
  static ExprPtr binary(BinOp op, ExprPtr l, ExprPtr r);
  static ExprPtr conditional(ExprPtr c, ExprPtr a, ExprPtr b);
};

ExprPtr parse_expr(const std::string& text);

// Canonical form: every binary and conditional node fully parenthesized,
// so the output reparses to an identical AST.
std::string print_expr(const Expr& e);
inline std::string print_expr(const ExprPtr& e) { return print_expr(*e); }

bool expr_equal(const Expr& a, const Expr& b);

// Calls fn(name, lag) for every signal reference in the tree.
void for_each_ref(const Expr& e,
                  const std::function<void(const std::string&, int)>& fn);

int max_lag_of(const Expr& e, const std::string& signal);

// Returns a copy of the tree with signal ids resolved through the given
// name->id map; throws DanglingReference for unknown names.
ExprPtr bind_expr(const ExprPtr& e,
                  const std::function<int(const std::string&)>& resolve);

// Sample accessor used during evaluation: (signal_id, t) -> symbol.
using SampleFn = std::function<long long(int, int)>;

// Evaluates a bound expression at time t. Integer arithmetic throughout;
// "mod" is mathematical (result in 0..m-1); comparisons yield 1/0; the
// conditional evaluates only the taken branch. The caller applies the final
// reduction into the output alphabet.
long long eval_expr(const Expr& e, int t, const SampleFn& sample);

// Final reduction of an evaluation result into an alphabet of given size.
inline int reduce_symbol(long long v, int alphabet_size) {
  long long m = v % alphabet_size;
  if (m < 0) m += alphabet_size;
  return static_cast<int>(m);
}

}  // namespace loopflow
