#pragma once

// Arithmetic expression trees for vector fields, couplings, inputs and
// nonlinear actions. Trees are immutable and shared; evaluation is reentrant.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "symcon/error.hpp"

namespace symcon {

enum class SymbolKind { Unresolved, State, Parameter, Input, Time };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Builtin { Sin, Cos, Exp, Ln, Abs, Arctan, Sqrt, Min, Max, Step, Ramp };

struct ExprNode;

class Expr {
 public:
  Expr();  // the constant 0
  explicit Expr(std::shared_ptr<const ExprNode> node);

  const ExprNode& node() const { return *node_; }
  const ExprNode* get() const { return node_.get(); }

  bool is_number() const;
  bool is_number(double value) const;
  double number() const;  // precondition: is_number()

 private:
  std::shared_ptr<const ExprNode> node_;
};

namespace node {

struct Number {
  double value;
};

// A named reference. `index` is the 1-based component for `x[2]`, 0 when absent.
// `slot` is filled in by binding against a model.
struct Symbol {
  std::string name;
  int index = 0;
  SymbolKind kind = SymbolKind::Unresolved;
  int slot = -1;
};

// `x@tau`: the state x evaluated at t - tau.
struct Delayed {
  std::string name;
  int index = 0;
  std::string delay;
  int slot = -1;
  int delay_slot = -1;
};

struct Negate {
  Expr operand;
};

struct Binary {
  BinaryOp op;
  Expr lhs;
  Expr rhs;
};

struct Call {
  Builtin fn;
  std::vector<Expr> args;
};

}  // namespace node

struct ExprNode {
  std::variant<node::Number, node::Symbol, node::Delayed, node::Negate, node::Binary, node::Call>
      value;
};

/// Canonical component name: `x` or `x[2]`.
std::string component_name(std::string_view name, int index);
std::string component_name(const node::Symbol& s);
std::string component_name(const node::Delayed& d);

std::string_view builtin_name(Builtin fn);
std::optional<Builtin> builtin_from_name(std::string_view name);
int builtin_arity(Builtin fn);
bool is_nonsmooth(Builtin fn);

// Builders. They fold constants and drop neutral elements; nothing more.
Expr number(double value);
Expr symbol(std::string name, int index = 0, SymbolKind kind = SymbolKind::Unresolved,
            int slot = -1);
Expr time_symbol();
Expr delayed(std::string name, int index, std::string delay);
Expr neg(const Expr& a);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr div(const Expr& a, const Expr& b);
Expr pow(const Expr& a, const Expr& b);
Expr call(Builtin fn, std::vector<Expr> args);

/// Structural equality. Binding information (kind, slot) is ignored.
bool operator==(const Expr& a, const Expr& b);

/// Parse infix text. Errors carry 1-based line and column.
Expr parse_expression(std::string_view text);

/// Infix rendering with the minimal parentheses needed to re-parse to an equal tree.
std::string render(const Expr& e);

// --- name-based evaluation -------------------------------------------------

/// Name -> value bindings plus the current time and an optional delay lookup.
/// Looking up an undeclared name is an error.
class Environment {
 public:
  using DelayCallback = std::function<double(std::string_view component, std::string_view delay)>;

  Environment& set(std::string name, double value);
  Environment& set_time(double t);
  Environment& set_delay_lookup(DelayCallback cb);

  double lookup(std::string_view name) const;
  double time() const { return t_; }
  double delayed(std::string_view component, std::string_view delay) const;

 private:
  std::map<std::string, double, std::less<>> values_;
  double t_ = 0.0;
  DelayCallback delay_;
};

double evaluate(const Expr& e, const Environment& env);

// --- slot-based evaluation (bound expressions) -----------------------------

class DelayLookup {
 public:
  virtual ~DelayLookup() = default;
  /// Value of state component `slot` at time `t - delay`.
  virtual double value(int slot, double delay, double t) const = 0;
};

struct Frame {
  double t = 0.0;
  std::span<const double> states;
  std::span<const double> params;
  std::span<const double> inputs;
  std::span<const double> delays;
  const DelayLookup* history = nullptr;
};

/// Evaluate an expression whose symbols have been bound to slots.
double evaluate(const Expr& e, const Frame& frame);

// --- symbolic operations -----------------------------------------------------

struct Derivative {
  Expr expr;
  bool piecewise = false;  // differentiated through abs/min/max/step with a var-dependent argument
};

/// d e / d var, where var is a canonical component name (`x` or `x[2]`).
Derivative differentiate(const Expr& e, std::string_view var);

/// Replace symbols (and delayed references) for which `fn` returns a value.
/// The replacement for a delayed reference receives the delay name.
struct Substitution {
  std::function<std::optional<Expr>(const node::Symbol&)> symbol;
  std::function<std::optional<Expr>(const node::Delayed&)> delayed;
};
Expr substitute(const Expr& e, const Substitution& s);

/// Rebuild through the folding builders.
Expr simplify(const Expr& e);

bool depends_on(const Expr& e, std::string_view var);
bool depends_on_time(const Expr& e);
bool contains_delay(const Expr& e);

/// Every symbol and delayed reference occurring in e.
void visit_symbols(const Expr& e, const std::function<void(const node::Symbol&)>& on_symbol,
                   const std::function<void(const node::Delayed&)>& on_delayed = {});

/// Calls to nonsmooth builtins whose arguments mention any name accepted by `pred`.
bool has_nonsmooth_dependence(const Expr& e, const std::function<bool(const node::Symbol&)>& pred);

/// Constant arguments of step/ramp calls (switching instants), evaluated via `value_of`.
std::vector<double> switching_times(const Expr& e, const std::function<double(const Expr&)>& value_of);

}  // namespace symcon
