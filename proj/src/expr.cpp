#include "loopflow/expr.hpp"

#include <cctype>
#include <sstream>

namespace loopflow {

const char* bin_op_token(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::Mod: return "mod";
    case BinOp::Xor: return "xor";
    case BinOp::Eq: return "==";
    case BinOp::Ne: return "!=";
    case BinOp::Lt: return "<";
    case BinOp::Le: return "<=";
  }
  return "?";
}

ExprPtr Expr::int_lit(long long v) {
  auto e = std::make_shared<Expr>();
  e->kind = Kind::IntLit;
  e->value = v;
  return e;
}

ExprPtr Expr::signal_ref(std::string name, int lag) {
  auto e = std::make_shared<Expr>();
  e->kind = Kind::SignalRef;
  e->signal = std::move(name);
  e->lag = lag;
  return e;
}

ExprPtr Expr::binary(BinOp op, ExprPtr l, ExprPtr r) {
  auto e = std::make_shared<Expr>();
  e->kind = Kind::Binary;
  e->op = op;
  e->lhs = std::move(l);
  e->rhs = std::move(r);
  return e;
}

ExprPtr Expr::conditional(ExprPtr c, ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<Expr>();
  e->kind = Kind::Conditional;
  e->cond = std::move(c);
  e->then_branch = std::move(a);
  e->else_branch = std::move(b);
  return e;
}

namespace {

enum class Tok : std::uint8_t {
  Int, Ident, KwXor, KwMod, Question, Colon, LBracket, RBracket,
  LParen, RParen, EqEq, NotEq, Lt, Le, Plus, Minus, Star, End
};

struct Token {
  Tok kind;
  std::size_t offset;
  long long value = 0;
  std::string text;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(std::size_t offset, const std::string& expected,
                         const std::string& msg) const {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < src_.size(); ++i) {
      if (src_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(offset, line, col, expected, msg);
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    tok_.offset = pos_;
    tok_.text.clear();
    if (pos_ >= src_.size()) {
      tok_.kind = Tok::End;
      return;
    }
    char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      long long v = 0;
      std::size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        v = v * 10 + (src_[pos_] - '0');
        if (v > (1ll << 40)) fail(start, "", "integer literal too large");
        ++pos_;
      }
      tok_.kind = Tok::Int;
      tok_.value = v;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      tok_.text = src_.substr(start, pos_ - start);
      if (tok_.text == "xor")
        tok_.kind = Tok::KwXor;
      else if (tok_.text == "mod")
        tok_.kind = Tok::KwMod;
      else
        tok_.kind = Tok::Ident;
      return;
    }
    ++pos_;
    switch (c) {
      case '?': tok_.kind = Tok::Question; return;
      case ':': tok_.kind = Tok::Colon; return;
      case '[': tok_.kind = Tok::LBracket; return;
      case ']': tok_.kind = Tok::RBracket; return;
      case '(': tok_.kind = Tok::LParen; return;
      case ')': tok_.kind = Tok::RParen; return;
      case '+': tok_.kind = Tok::Plus; return;
      case '*': tok_.kind = Tok::Star; return;
      case '-': tok_.kind = Tok::Minus; return;
      case '!':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          ++pos_;
          tok_.kind = Tok::NotEq;
          return;
        }
        fail(tok_.offset, "'='", "stray '!'");
      case '=':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          ++pos_;
          tok_.kind = Tok::EqEq;
          return;
        }
        fail(tok_.offset, "'=='", "single '=' is not an operator");
      case '<':
        if (pos_ < src_.size() && src_[pos_] == '=') {
          ++pos_;
          tok_.kind = Tok::Le;
          return;
        }
        tok_.kind = Tok::Lt;
        return;
      default:
        fail(tok_.offset, "", std::string("unexpected character '") + c + "'");
    }
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(const std::string& src) : lex_(src) {}

  ExprPtr parse() {
    ExprPtr e = ternary();
    if (lex_.peek().kind != Tok::End)
      lex_.fail(lex_.peek().offset, "end of input", "trailing tokens");
    return e;
  }

 private:
  ExprPtr ternary() {
    ExprPtr c = or_level();
    if (lex_.peek().kind == Tok::Question) {
      lex_.take();
      ExprPtr a = ternary();
      expect(Tok::Colon, "':'");
      ExprPtr b = ternary();
      return Expr::conditional(std::move(c), std::move(a), std::move(b));
    }
    return c;
  }

  ExprPtr or_level() {
    ExprPtr e = cmp();
    while (lex_.peek().kind == Tok::KwXor) {
      lex_.take();
      e = Expr::binary(BinOp::Xor, std::move(e), cmp());
    }
    return e;
  }

  ExprPtr cmp() {
    ExprPtr e = add();
    Tok k = lex_.peek().kind;
    if (k == Tok::EqEq || k == Tok::NotEq || k == Tok::Lt || k == Tok::Le) {
      lex_.take();
      BinOp op = k == Tok::EqEq   ? BinOp::Eq
                 : k == Tok::NotEq ? BinOp::Ne
                 : k == Tok::Lt    ? BinOp::Lt
                                   : BinOp::Le;
      e = Expr::binary(op, std::move(e), add());
    }
    return e;
  }

  ExprPtr add() {
    ExprPtr e = mul();
    while (lex_.peek().kind == Tok::Plus || lex_.peek().kind == Tok::Minus) {
      BinOp op = lex_.take().kind == Tok::Plus ? BinOp::Add : BinOp::Sub;
      e = Expr::binary(op, std::move(e), mul());
    }
    return e;
  }

  ExprPtr mul() {
    ExprPtr e = atom();
    while (lex_.peek().kind == Tok::Star || lex_.peek().kind == Tok::KwMod) {
      BinOp op = lex_.take().kind == Tok::Star ? BinOp::Mul : BinOp::Mod;
      e = Expr::binary(op, std::move(e), atom());
    }
    return e;
  }

  ExprPtr atom() {
    const Token& t = lex_.peek();
    switch (t.kind) {
      case Tok::Int: {
        Token tok = lex_.take();
        return Expr::int_lit(tok.value);
      }
      case Tok::LParen: {
        lex_.take();
        ExprPtr e = ternary();
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::Ident: {
        Token name = lex_.take();
        if (name.text == "t")
          lex_.fail(name.offset, "signal name", "'t' is reserved for the time index");
        expect(Tok::LBracket, "'['");
        Token idx = lex_.peek();
        if (idx.kind != Tok::Ident || idx.text != "t")
          lex_.fail(idx.offset, "'t'", "subscript must be t or t-<lag>");
        lex_.take();
        int lag = 0;
        if (lex_.peek().kind == Tok::Minus) {
          lex_.take();
          Token lt = lex_.peek();
          if (lt.kind != Tok::Int)
            lex_.fail(lt.offset, "integer lag", "lag must be a literal");
          lag = static_cast<int>(lex_.take().value);
        } else if (lex_.peek().kind == Tok::Plus) {
          lex_.fail(lex_.peek().offset, "'-' or ']'",
                    "future references are forbidden");
        }
        expect(Tok::RBracket, "']'");
        return Expr::signal_ref(name.text, lag);
      }
      default:
        lex_.fail(t.offset, "integer, signal reference or '('", "bad atom");
    }
  }

  void expect(Tok k, const std::string& what) {
    if (lex_.peek().kind != k)
      lex_.fail(lex_.peek().offset, what, "unexpected token");
    lex_.take();
  }

  Lexer lex_;
};

}  // namespace

ExprPtr parse_expr(const std::string& text) { return Parser(text).parse(); }

std::string print_expr(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::IntLit:
      return std::to_string(e.value);
    case Expr::Kind::SignalRef:
      return e.lag == 0 ? e.signal + "[t]"
                        : e.signal + "[t-" + std::to_string(e.lag) + "]";
    case Expr::Kind::Binary:
      return "(" + print_expr(*e.lhs) + " " + bin_op_token(e.op) + " " +
             print_expr(*e.rhs) + ")";
    case Expr::Kind::Conditional:
      return "(" + print_expr(*e.cond) + " ? " + print_expr(*e.then_branch) +
             " : " + print_expr(*e.else_branch) + ")";
  }
  return "";
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Expr::Kind::IntLit:
      return a.value == b.value;
    case Expr::Kind::SignalRef:
      return a.signal == b.signal && a.lag == b.lag;
    case Expr::Kind::Binary:
      return a.op == b.op && expr_equal(*a.lhs, *b.lhs) && expr_equal(*a.rhs, *b.rhs);
    case Expr::Kind::Conditional:
      return expr_equal(*a.cond, *b.cond) &&
             expr_equal(*a.then_branch, *b.then_branch) &&
             expr_equal(*a.else_branch, *b.else_branch);
  }
  return false;
}

void for_each_ref(const Expr& e,
                  const std::function<void(const std::string&, int)>& fn) {
  switch (e.kind) {
    case Expr::Kind::IntLit:
      return;
    case Expr::Kind::SignalRef:
      fn(e.signal, e.lag);
      return;
    case Expr::Kind::Binary:
      for_each_ref(*e.lhs, fn);
      for_each_ref(*e.rhs, fn);
      return;
    case Expr::Kind::Conditional:
      for_each_ref(*e.cond, fn);
      for_each_ref(*e.then_branch, fn);
      for_each_ref(*e.else_branch, fn);
      return;
  }
}

int max_lag_of(const Expr& e, const std::string& signal) {
  int best = -1;
  for_each_ref(e, [&](const std::string& name, int lag) {
    if (name == signal && lag > best) best = lag;
  });
  return best;
}

ExprPtr bind_expr(const ExprPtr& e,
                  const std::function<int(const std::string&)>& resolve) {
  switch (e->kind) {
    case Expr::Kind::IntLit:
      return e;
    case Expr::Kind::SignalRef: {
      int id = resolve(e->signal);
      if (id < 0)
        throw DanglingReference("reference to undeclared signal '" + e->signal + "'");
      auto out = std::make_shared<Expr>(*e);
      out->signal_id = id;
      return out;
    }
    case Expr::Kind::Binary: {
      auto out = std::make_shared<Expr>(*e);
      out->lhs = bind_expr(e->lhs, resolve);
      out->rhs = bind_expr(e->rhs, resolve);
      return out;
    }
    case Expr::Kind::Conditional: {
      auto out = std::make_shared<Expr>(*e);
      out->cond = bind_expr(e->cond, resolve);
      out->then_branch = bind_expr(e->then_branch, resolve);
      out->else_branch = bind_expr(e->else_branch, resolve);
      return out;
    }
  }
  return e;
}

long long eval_expr(const Expr& e, int t, const SampleFn& sample) {
  switch (e.kind) {
    case Expr::Kind::IntLit:
      return e.value;
    case Expr::Kind::SignalRef:
      return sample(e.signal_id, t - e.lag);
    case Expr::Kind::Binary: {
      long long a = eval_expr(*e.lhs, t, sample);
      long long b = eval_expr(*e.rhs, t, sample);
      switch (e.op) {
        case BinOp::Add: return a + b;
        case BinOp::Sub: return a - b;
        case BinOp::Mul: return a * b;
        case BinOp::Mod: {
          if (b == 0) throw Error("mod by zero");
          long long m = a % b;
          if ((m < 0 && b > 0) || (m > 0 && b < 0)) m += b;
          return m;
        }
        case BinOp::Xor: return a ^ b;
        case BinOp::Eq: return a == b ? 1 : 0;
        case BinOp::Ne: return a != b ? 1 : 0;
        case BinOp::Lt: return a < b ? 1 : 0;
        case BinOp::Le: return a <= b ? 1 : 0;
      }
      return 0;
    }
    case Expr::Kind::Conditional:
      return eval_expr(*e.cond, t, sample) != 0
                 ? eval_expr(*e.then_branch, t, sample)
                 : eval_expr(*e.else_branch, t, sample);
  }
  return 0;
}

}  // namespace loopflow
