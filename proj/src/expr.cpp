#include "symcon/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

namespace symcon {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Expr make(auto&& alternative) {
  return Expr(std::make_shared<const ExprNode>(ExprNode{std::forward<decltype(alternative)>(alternative)}));
}

struct BuiltinInfo {
  Builtin fn;
  std::string_view name;
  int arity;
  bool nonsmooth;
};

constexpr BuiltinInfo kBuiltins[] = {
    {Builtin::Sin, "sin", 1, false},     {Builtin::Cos, "cos", 1, false},
    {Builtin::Exp, "exp", 1, false},     {Builtin::Ln, "ln", 1, false},
    {Builtin::Abs, "abs", 1, true},      {Builtin::Arctan, "arctan", 1, false},
    {Builtin::Sqrt, "sqrt", 1, false},   {Builtin::Min, "min", 2, true},
    {Builtin::Max, "max", 2, true},      {Builtin::Step, "step", 1, true},
    {Builtin::Ramp, "ramp", 2, false},
};

const BuiltinInfo& info(Builtin fn) {
  for (const auto& b : kBuiltins)
    if (b.fn == fn) return b;
  throw Error("unknown builtin");
}

}  // namespace

// --- Expr --------------------------------------------------------------------

Expr::Expr() : node_(std::make_shared<const ExprNode>(ExprNode{node::Number{0.0}})) {}
Expr::Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

bool Expr::is_number() const { return std::holds_alternative<node::Number>(node_->value); }
bool Expr::is_number(double value) const { return is_number() && number() == value; }
double Expr::number() const { return std::get<node::Number>(node_->value).value; }

std::string component_name(std::string_view name, int index) {
  std::string out(name);
  if (index > 0) out += "[" + std::to_string(index) + "]";
  return out;
}
std::string component_name(const node::Symbol& s) { return component_name(s.name, s.index); }
std::string component_name(const node::Delayed& d) { return component_name(d.name, d.index); }

std::string_view builtin_name(Builtin fn) { return info(fn).name; }
int builtin_arity(Builtin fn) { return info(fn).arity; }
bool is_nonsmooth(Builtin fn) { return info(fn).nonsmooth; }

std::optional<Builtin> builtin_from_name(std::string_view name) {
  for (const auto& b : kBuiltins)
    if (b.name == name) return b.fn;
  return std::nullopt;
}

// --- builders ------------------------------------------------------------------

Expr number(double value) { return make(node::Number{value}); }

Expr symbol(std::string name, int index, SymbolKind kind, int slot) {
  return make(node::Symbol{std::move(name), index, kind, slot});
}

Expr time_symbol() { return symbol("t", 0, SymbolKind::Time); }

Expr delayed(std::string name, int index, std::string delay) {
  return make(node::Delayed{std::move(name), index, std::move(delay)});
}

Expr neg(const Expr& a) {
  if (a.is_number()) return number(-a.number());
  if (const auto* n = std::get_if<node::Negate>(&a.node().value)) return n->operand;
  return make(node::Negate{a});
}

Expr add(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return number(a.number() + b.number());
  if (a.is_number(0.0)) return b;
  if (b.is_number(0.0)) return a;
  return make(node::Binary{BinaryOp::Add, a, b});
}

Expr sub(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return number(a.number() - b.number());
  if (b.is_number(0.0)) return a;
  if (a.is_number(0.0)) return neg(b);
  if (a == b) return number(0.0);
  return make(node::Binary{BinaryOp::Sub, a, b});
}

Expr mul(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return number(a.number() * b.number());
  if (a.is_number(0.0) || b.is_number(0.0)) return number(0.0);
  if (a.is_number(1.0)) return b;
  if (b.is_number(1.0)) return a;
  if (a.is_number(-1.0)) return neg(b);
  if (b.is_number(-1.0)) return neg(a);
  return make(node::Binary{BinaryOp::Mul, a, b});
}

Expr div(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number() && b.number() != 0.0) return number(a.number() / b.number());
  if (a.is_number(0.0) && !b.is_number(0.0)) return number(0.0);
  if (b.is_number(1.0)) return a;
  return make(node::Binary{BinaryOp::Div, a, b});
}

Expr pow(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return number(std::pow(a.number(), b.number()));
  if (b.is_number(1.0)) return a;
  if (b.is_number(0.0)) return number(1.0);
  return make(node::Binary{BinaryOp::Pow, a, b});
}

Expr call(Builtin fn, std::vector<Expr> args) {
  if (static_cast<int>(args.size()) != builtin_arity(fn))
    throw Error(std::string("wrong number of arguments to ") + std::string(builtin_name(fn)));
  return make(node::Call{fn, std::move(args)});
}

// --- equality --------------------------------------------------------------------

bool operator==(const Expr& a, const Expr& b) {
  if (a.get() == b.get()) return true;
  const auto& va = a.node().value;
  const auto& vb = b.node().value;
  if (va.index() != vb.index()) return false;
  return std::visit(
      overloaded{
          [&](const node::Number& x) { return x.value == std::get<node::Number>(vb).value; },
          [&](const node::Symbol& x) {
            const auto& y = std::get<node::Symbol>(vb);
            return x.name == y.name && x.index == y.index;
          },
          [&](const node::Delayed& x) {
            const auto& y = std::get<node::Delayed>(vb);
            return x.name == y.name && x.index == y.index && x.delay == y.delay;
          },
          [&](const node::Negate& x) { return x.operand == std::get<node::Negate>(vb).operand; },
          [&](const node::Binary& x) {
            const auto& y = std::get<node::Binary>(vb);
            return x.op == y.op && x.lhs == y.lhs && x.rhs == y.rhs;
          },
          [&](const node::Call& x) {
            const auto& y = std::get<node::Call>(vb);
            if (x.fn != y.fn || x.args.size() != y.args.size()) return false;
            for (std::size_t i = 0; i < x.args.size(); ++i)
              if (!(x.args[i] == y.args[i])) return false;
            return true;
          },
      },
      va);
}

// --- parser -------------------------------------------------------------------------

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, LBracket, RBracket, Comma, At, End };

struct Token {
  Tok kind;
  std::string text;
  double value = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_space();
    Token tok{Tok::End, "", 0.0, line_, col_};
    if (pos_ >= text_.size()) return tok;
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && pos_ + 1 < text_.size() &&
                                                        std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
      if (pos_ < text_.size() && text_[pos_] == '.') {
        advance();
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
      }
      if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
        std::size_t save = pos_;
        int save_col = col_;
        advance();
        if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) advance();
        if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
          while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
        } else {
          pos_ = save;
          col_ = save_col;
        }
      }
      tok.kind = Tok::Number;
      tok.text = std::string(text_.substr(start, pos_ - start));
      auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tok.value);
      if (ec != std::errc() || ptr != tok.text.data() + tok.text.size())
        throw ParseError("malformed number '" + tok.text + "'", tok.line, tok.column);
      return tok;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        advance();
      tok.kind = Tok::Ident;
      tok.text = std::string(text_.substr(start, pos_ - start));
      return tok;
    }
    advance();
    tok.text = std::string(1, c);
    switch (c) {
      case '+': tok.kind = Tok::Plus; break;
      case '-': tok.kind = Tok::Minus; break;
      case '*': tok.kind = Tok::Star; break;
      case '/': tok.kind = Tok::Slash; break;
      case '^': tok.kind = Tok::Caret; break;
      case '(': tok.kind = Tok::LParen; break;
      case ')': tok.kind = Tok::RParen; break;
      case '[': tok.kind = Tok::LBracket; break;
      case ']': tok.kind = Tok::RBracket; break;
      case ',': tok.kind = Tok::Comma; break;
      case '@': tok.kind = Tok::At; break;
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", tok.line, tok.column);
    }
    return tok;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { cur_ = lexer_.next(); }

  Expr parse() {
    Expr e = expression();
    if (cur_.kind != Tok::End) fail("unexpected '" + cur_.text + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, cur_.line, cur_.column); }

  Token take() {
    Token t = cur_;
    cur_ = lexer_.next();
    return t;
  }

  void expect(Tok kind, const char* what) {
    if (cur_.kind != kind) {
      if (cur_.kind == Tok::End) fail(std::string("expected ") + what + " before end of input");
      fail(std::string("expected ") + what + ", found '" + cur_.text + "'");
    }
    take();
  }

  Expr expression() {
    Expr lhs = term();
    while (cur_.kind == Tok::Plus || cur_.kind == Tok::Minus) {
      BinaryOp op = take().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
      lhs = make(node::Binary{op, lhs, term()});
    }
    return lhs;
  }

  Expr term() {
    Expr lhs = unary();
    while (cur_.kind == Tok::Star || cur_.kind == Tok::Slash) {
      BinaryOp op = take().kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
      lhs = make(node::Binary{op, lhs, unary()});
    }
    return lhs;
  }

  Expr unary() {
    if (cur_.kind == Tok::Minus) {
      take();
      Expr operand = unary();
      if (operand.is_number()) return number(-operand.number());
      return make(node::Negate{operand});
    }
    return power();
  }

  Expr power() {
    Expr base = atom();
    if (cur_.kind == Tok::Caret) {
      take();
      return make(node::Binary{BinaryOp::Pow, base, unary()});
    }
    return base;
  }

  Expr atom() {
    switch (cur_.kind) {
      case Tok::Number:
        return number(take().value);
      case Tok::LParen: {
        take();
        Expr e = expression();
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::Ident:
        return identifier();
      case Tok::End:
        fail("unexpected end of input");
      default:
        fail("unexpected '" + cur_.text + "'");
    }
  }

  Expr identifier() {
    Token id = take();
    if (cur_.kind == Tok::LParen) {
      auto fn = builtin_from_name(id.text);
      if (!fn) throw ParseError("unknown function '" + id.text + "'", id.line, id.column);
      take();
      std::vector<Expr> args;
      if (cur_.kind != Tok::RParen) {
        args.push_back(expression());
        while (cur_.kind == Tok::Comma) {
          take();
          args.push_back(expression());
        }
      }
      expect(Tok::RParen, "')'");
      if (static_cast<int>(args.size()) != builtin_arity(*fn))
        throw ParseError(id.text + " expects " + std::to_string(builtin_arity(*fn)) + " argument(s)",
                         id.line, id.column);
      return make(node::Call{*fn, std::move(args)});
    }
    if (id.text == "pi") return number(std::numbers::pi);
    if (id.text == "t") {
      if (cur_.kind == Tok::LBracket || cur_.kind == Tok::At) fail("time symbol 't' cannot be indexed or delayed");
      return time_symbol();
    }
    int index = 0;
    if (cur_.kind == Tok::LBracket) {
      take();
      if (cur_.kind != Tok::Number || cur_.value != std::floor(cur_.value) || cur_.value < 1)
        fail("expected a positive integer component index");
      index = static_cast<int>(take().value);
      expect(Tok::RBracket, "']'");
    }
    if (cur_.kind == Tok::At) {
      take();
      if (cur_.kind != Tok::Ident) fail("expected a delay name after '@'");
      return delayed(id.text, index, take().text);
    }
    return symbol(id.text, index);
  }

  Lexer lexer_;
  Token cur_;
};

}  // namespace

Expr parse_expression(std::string_view text) { return Parser(text).parse(); }

// --- rendering -----------------------------------------------------------------------------

namespace {

constexpr int kPrecAdd = 1, kPrecMul = 2, kPrecNeg = 3, kPrecPow = 4, kPrecAtom = 5;

int precedence(const Expr& e) {
  return std::visit(overloaded{
                        [](const node::Number& n) { return n.value < 0 || std::signbit(n.value) ? kPrecNeg : kPrecAtom; },
                        [](const node::Negate&) { return kPrecNeg; },
                        [](const node::Binary& b) {
                          switch (b.op) {
                            case BinaryOp::Add:
                            case BinaryOp::Sub: return kPrecAdd;
                            case BinaryOp::Mul:
                            case BinaryOp::Div: return kPrecMul;
                            case BinaryOp::Pow: return kPrecPow;
                          }
                          return kPrecAtom;
                        },
                        [](const auto&) { return kPrecAtom; },
                    },
                    e.node().value);
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void render_into(const Expr& e, std::string& out);

void render_child(const Expr& child, bool parens, std::string& out) {
  if (parens) out += '(';
  render_into(child, out);
  if (parens) out += ')';
}

void render_into(const Expr& e, std::string& out) {
  std::visit(overloaded{
                 [&](const node::Number& n) { out += format_number(n.value); },
                 [&](const node::Symbol& s) { out += component_name(s); },
                 [&](const node::Delayed& d) {
                   out += component_name(d);
                   out += '@';
                   out += d.delay;
                 },
                 [&](const node::Negate& n) {
                   out += '-';
                   render_child(n.operand, precedence(n.operand) < kPrecNeg, out);
                 },
                 [&](const node::Binary& b) {
                   int p = precedence(e);
                   bool left_parens = b.op == BinaryOp::Pow ? precedence(b.lhs) <= p : precedence(b.lhs) < p;
                   bool right_parens = b.op == BinaryOp::Pow ? precedence(b.rhs) < kPrecNeg : precedence(b.rhs) <= p;
                   render_child(b.lhs, left_parens, out);
                   switch (b.op) {
                     case BinaryOp::Add: out += " + "; break;
                     case BinaryOp::Sub: out += " - "; break;
                     case BinaryOp::Mul: out += "*"; break;
                     case BinaryOp::Div: out += "/"; break;
                     case BinaryOp::Pow: out += "^"; break;
                   }
                   render_child(b.rhs, right_parens, out);
                 },
                 [&](const node::Call& c) {
                   out += builtin_name(c.fn);
                   out += '(';
                   for (std::size_t i = 0; i < c.args.size(); ++i) {
                     if (i) out += ", ";
                     render_into(c.args[i], out);
                   }
                   out += ')';
                 },
             },
             e.node().value);
}

}  // namespace

std::string render(const Expr& e) {
  std::string out;
  render_into(e, out);
  return out;
}

// --- evaluation -------------------------------------------------------------------------------

Environment& Environment::set(std::string name, double value) {
  values_[std::move(name)] = value;
  return *this;
}

Environment& Environment::set_time(double t) {
  t_ = t;
  return *this;
}

Environment& Environment::set_delay_lookup(DelayCallback cb) {
  delay_ = std::move(cb);
  return *this;
}

double Environment::lookup(std::string_view name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw EvalError("unbound name '" + std::string(name) + "'");
  return it->second;
}

double Environment::delayed(std::string_view component, std::string_view delay) const {
  if (!delay_)
    throw EvalError("no delay lookup bound for '" + std::string(component) + "@" + std::string(delay) + "'");
  return delay_(component, delay);
}

namespace {

double smoothstep(double t, double t0, double t1) {
  if (t1 <= t0) return t >= t0 ? 1.0 : 0.0;
  double s = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

template <class Resolver>
double eval(const Expr& e, const Resolver& r) {
  return std::visit(
      overloaded{
          [&](const node::Number& n) { return n.value; },
          [&](const node::Symbol& s) { return r.symbol(s); },
          [&](const node::Delayed& d) { return r.delayed(d); },
          [&](const node::Negate& n) { return -eval(n.operand, r); },
          [&](const node::Binary& b) {
            double lhs = eval(b.lhs, r);
            double rhs = eval(b.rhs, r);
            switch (b.op) {
              case BinaryOp::Add: return lhs + rhs;
              case BinaryOp::Sub: return lhs - rhs;
              case BinaryOp::Mul: return lhs * rhs;
              case BinaryOp::Div:
                if (rhs == 0.0) throw EvalError("division by zero in " + render(e));
                return lhs / rhs;
              case BinaryOp::Pow: return std::pow(lhs, rhs);
            }
            return 0.0;
          },
          [&](const node::Call& c) {
            double a = eval(c.args[0], r);
            switch (c.fn) {
              case Builtin::Sin: return std::sin(a);
              case Builtin::Cos: return std::cos(a);
              case Builtin::Exp: return std::exp(a);
              case Builtin::Ln:
                if (a <= 0.0) throw EvalError("ln of non-positive value in " + render(e));
                return std::log(a);
              case Builtin::Abs: return std::abs(a);
              case Builtin::Arctan: return std::atan(a);
              case Builtin::Sqrt:
                if (a < 0.0) throw EvalError("sqrt of negative value in " + render(e));
                return std::sqrt(a);
              case Builtin::Min: return std::min(a, eval(c.args[1], r));
              case Builtin::Max: return std::max(a, eval(c.args[1], r));
              case Builtin::Step: return r.time() >= a ? 1.0 : 0.0;
              case Builtin::Ramp: return smoothstep(r.time(), a, eval(c.args[1], r));
            }
            return 0.0;
          },
      },
      e.node().value);
}

struct NameResolver {
  const Environment& env;
  double symbol(const node::Symbol& s) const {
    if (s.kind == SymbolKind::Time) return env.time();
    return env.lookup(component_name(s));
  }
  double delayed(const node::Delayed& d) const { return env.delayed(component_name(d), d.delay); }
  double time() const { return env.time(); }
};

struct FrameResolver {
  const Frame& f;
  double symbol(const node::Symbol& s) const {
    switch (s.kind) {
      case SymbolKind::State: return f.states[s.slot];
      case SymbolKind::Parameter: return f.params[s.slot];
      case SymbolKind::Input: return f.inputs[s.slot];
      case SymbolKind::Time: return f.t;
      case SymbolKind::Unresolved: break;
    }
    throw EvalError("unbound name '" + component_name(s) + "'");
  }
  double delayed(const node::Delayed& d) const {
    if (d.slot < 0 || d.delay_slot < 0) throw EvalError("unbound delayed reference '" + component_name(d) + "@" + d.delay + "'");
    double tau = f.delays[d.delay_slot];
    if (tau == 0.0) return f.states[d.slot];
    if (!f.history) throw EvalError("delayed reference '" + component_name(d) + "@" + d.delay + "' needs a history");
    return f.history->value(d.slot, tau, f.t);
  }
  double time() const { return f.t; }
};

}  // namespace

double evaluate(const Expr& e, const Environment& env) { return eval(e, NameResolver{env}); }
double evaluate(const Expr& e, const Frame& frame) { return eval(e, FrameResolver{frame}); }

// --- symbolic ------------------------------------------------------------------------------------

namespace {

// Pieces of `e` other than the node itself, rebuilt with new children.
Expr rebuild(const Expr& e, const std::function<Expr(const Expr&)>& child_map) {
  return std::visit(overloaded{
                        [&](const node::Negate& n) { return neg(child_map(n.operand)); },
                        [&](const node::Binary& b) {
                          Expr l = child_map(b.lhs), r = child_map(b.rhs);
                          switch (b.op) {
                            case BinaryOp::Add: return add(l, r);
                            case BinaryOp::Sub: return sub(l, r);
                            case BinaryOp::Mul: return mul(l, r);
                            case BinaryOp::Div: return div(l, r);
                            case BinaryOp::Pow: return pow(l, r);
                          }
                          return e;
                        },
                        [&](const node::Call& c) {
                          std::vector<Expr> args;
                          args.reserve(c.args.size());
                          for (const auto& a : c.args) args.push_back(child_map(a));
                          return call(c.fn, std::move(args));
                        },
                        [&](const auto&) { return e; },
                    },
                    e.node().value);
}

}  // namespace

Derivative differentiate(const Expr& e, std::string_view var) {
  bool piecewise = false;
  std::function<Expr(const Expr&)> d = [&](const Expr& x) -> Expr {
    return std::visit(
        overloaded{
            [&](const node::Number&) { return number(0.0); },
            [&](const node::Symbol& s) {
              if (s.kind == SymbolKind::Time) return number(0.0);
              return number(component_name(s) == var ? 1.0 : 0.0);
            },
            [&](const node::Delayed&) { return number(0.0); },
            [&](const node::Negate& n) { return neg(d(n.operand)); },
            [&](const node::Binary& b) -> Expr {
              Expr da = d(b.lhs), db = d(b.rhs);
              switch (b.op) {
                case BinaryOp::Add: return add(da, db);
                case BinaryOp::Sub: return sub(da, db);
                case BinaryOp::Mul: return add(mul(da, b.rhs), mul(b.lhs, db));
                case BinaryOp::Div:
                  if (db.is_number(0.0)) return div(da, b.rhs);
                  return div(sub(mul(da, b.rhs), mul(b.lhs, db)), pow(b.rhs, number(2.0)));
                case BinaryOp::Pow:
                  if (db.is_number(0.0))
                    return mul(mul(b.rhs, pow(b.lhs, sub(b.rhs, number(1.0)))), da);
                  return mul(x, add(mul(db, call(Builtin::Ln, {b.lhs})), div(mul(b.rhs, da), b.lhs)));
              }
              return number(0.0);
            },
            [&](const node::Call& c) -> Expr {
              const Expr& a = c.args[0];
              Expr da = d(a);
              switch (c.fn) {
                case Builtin::Sin: return mul(call(Builtin::Cos, {a}), da);
                case Builtin::Cos: return neg(mul(call(Builtin::Sin, {a}), da));
                case Builtin::Exp: return mul(x, da);
                case Builtin::Ln: return div(da, a);
                case Builtin::Sqrt: return div(da, mul(number(2.0), x));
                case Builtin::Arctan: return div(da, add(number(1.0), pow(a, number(2.0))));
                case Builtin::Abs:
                  if (da.is_number(0.0)) return number(0.0);
                  piecewise = true;
                  return mul(div(a, x), da);
                case Builtin::Min:
                case Builtin::Max: {
                  Expr db = d(c.args[1]);
                  if (da.is_number(0.0) && db.is_number(0.0)) return number(0.0);
                  piecewise = true;
                  // min(a,b) = (a + b - |a - b|)/2, max(a,b) = (a + b + |a - b|)/2
                  Expr diff = sub(a, c.args[1]);
                  Expr sign = div(diff, call(Builtin::Abs, {diff}));
                  Expr jump = mul(sign, sub(da, db));
                  Expr sum = add(da, db);
                  return div(c.fn == Builtin::Min ? sub(sum, jump) : add(sum, jump), number(2.0));
                }
                case Builtin::Step:
                case Builtin::Ramp:
                  for (const auto& arg : c.args)
                    if (!d(arg).is_number(0.0)) piecewise = true;
                  return number(0.0);
              }
              return number(0.0);
            },
        },
        x.node().value);
  };
  Expr out = d(e);
  return {out, piecewise};
}

Expr substitute(const Expr& e, const Substitution& s) {
  std::function<Expr(const Expr&)> go = [&](const Expr& x) -> Expr {
    if (const auto* sym = std::get_if<node::Symbol>(&x.node().value)) {
      if (s.symbol)
        if (auto r = s.symbol(*sym)) return *r;
      return x;
    }
    if (const auto* del = std::get_if<node::Delayed>(&x.node().value)) {
      if (s.delayed)
        if (auto r = s.delayed(*del)) return *r;
      return x;
    }
    if (x.is_number()) return x;
    return rebuild(x, go);
  };
  return go(e);
}

Expr simplify(const Expr& e) {
  std::function<Expr(const Expr&)> go = [&](const Expr& x) { return rebuild(x, go); };
  return go(e);
}

void visit_symbols(const Expr& e, const std::function<void(const node::Symbol&)>& on_symbol,
                   const std::function<void(const node::Delayed&)>& on_delayed) {
  std::visit(overloaded{
                 [&](const node::Number&) {},
                 [&](const node::Symbol& s) {
                   if (on_symbol) on_symbol(s);
                 },
                 [&](const node::Delayed& d) {
                   if (on_delayed) on_delayed(d);
                 },
                 [&](const node::Negate& n) { visit_symbols(n.operand, on_symbol, on_delayed); },
                 [&](const node::Binary& b) {
                   visit_symbols(b.lhs, on_symbol, on_delayed);
                   visit_symbols(b.rhs, on_symbol, on_delayed);
                 },
                 [&](const node::Call& c) {
                   for (const auto& a : c.args) visit_symbols(a, on_symbol, on_delayed);
                 },
             },
             e.node().value);
}

bool depends_on(const Expr& e, std::string_view var) {
  bool found = false;
  visit_symbols(e, [&](const node::Symbol& s) {
    if (s.kind != SymbolKind::Time && component_name(s) == var) found = true;
  });
  return found;
}

bool depends_on_time(const Expr& e) {
  bool found = false;
  std::function<void(const Expr&)> go = [&](const Expr& x) {
    std::visit(overloaded{
                   [&](const node::Symbol& s) {
                     if (s.kind == SymbolKind::Time) found = true;
                   },
                   [&](const node::Call& c) {
                     if (c.fn == Builtin::Step || c.fn == Builtin::Ramp) found = true;
                     for (const auto& a : c.args) go(a);
                   },
                   [&](const node::Negate& n) { go(n.operand); },
                   [&](const node::Binary& b) {
                     go(b.lhs);
                     go(b.rhs);
                   },
                   [&](const auto&) {},
               },
               x.node().value);
  };
  go(e);
  return found;
}

bool contains_delay(const Expr& e) {
  bool found = false;
  visit_symbols(e, {}, [&](const node::Delayed&) { found = true; });
  return found;
}

bool has_nonsmooth_dependence(const Expr& e, const std::function<bool(const node::Symbol&)>& pred) {
  bool found = false;
  std::function<void(const Expr&)> go = [&](const Expr& x) {
    std::visit(overloaded{
                   [&](const node::Call& c) {
                     if (is_nonsmooth(c.fn)) {
                       for (const auto& a : c.args)
                         visit_symbols(a, [&](const node::Symbol& s) {
                           if (pred(s)) found = true;
                         });
                     }
                     for (const auto& a : c.args) go(a);
                   },
                   [&](const node::Negate& n) { go(n.operand); },
                   [&](const node::Binary& b) {
                     go(b.lhs);
                     go(b.rhs);
                   },
                   [&](const auto&) {},
               },
               x.node().value);
  };
  go(e);
  return found;
}

std::vector<double> switching_times(const Expr& e, const std::function<double(const Expr&)>& value_of) {
  std::vector<double> out;
  std::function<void(const Expr&)> go = [&](const Expr& x) {
    std::visit(overloaded{
                   [&](const node::Call& c) {
                     if (c.fn == Builtin::Step || c.fn == Builtin::Ramp) {
                       for (const auto& a : c.args) {
                         bool state_free = true;
                         visit_symbols(a, [&](const node::Symbol& s) {
                           if (s.kind == SymbolKind::State || s.kind == SymbolKind::Time) state_free = false;
                         });
                         if (state_free) out.push_back(value_of(a));
                       }
                     }
                     for (const auto& a : c.args) go(a);
                   },
                   [&](const node::Negate& n) { go(n.operand); },
                   [&](const node::Binary& b) {
                     go(b.lhs);
                     go(b.rhs);
                   },
                   [&](const auto&) {},
               },
               x.node().value);
  };
  go(e);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace symcon
