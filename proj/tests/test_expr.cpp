#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "symcon/expr.hpp"

using namespace symcon;

namespace {

double eval_at(const Expr& e, std::initializer_list<std::pair<const char*, double>> vals, double t = 0.0) {
  Environment env;
  for (auto [k, v] : vals) env.set(k, v);
  env.set_time(t);
  return evaluate(e, env);
}

double central_difference(const Expr& e, Environment env, const std::string& var, double at, double h = 1e-6) {
  env.set(var, at + h);
  double fp = evaluate(e, env);
  env.set(var, at - h);
  double fm = evaluate(e, env);
  return (fp - fm) / (2 * h);
}

// Random smooth expressions over x, y, z whose values stay moderate on [-2, 2]^3.
struct RandomExpr {
  std::mt19937_64 rng;
  explicit RandomExpr(std::uint64_t seed) : rng(seed) {}

  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

  Expr leaf() {
    switch (pick(4)) {
      case 0: return symbol("x");
      case 1: return symbol("y");
      case 2: return symbol("z");
      default: return number(std::round(std::uniform_real_distribution<double>(-3, 3)(rng) * 100) / 100);
    }
  }

  Expr gen(int depth) {
    if (depth == 0) return leaf();
    Expr a = gen(depth - 1);
    switch (pick(11)) {
      case 0: return add(a, gen(depth - 1));
      case 1: return sub(a, gen(depth - 1));
      case 2: return mul(a, gen(depth - 1));
      case 3: return div(a, add(number(2.0), call(Builtin::Sin, {gen(depth - 1)})));
      case 4: return call(Builtin::Sin, {a});
      case 5: return call(Builtin::Cos, {a});
      case 6: return call(Builtin::Exp, {call(Builtin::Sin, {a})});
      case 7: return call(Builtin::Arctan, {a});
      case 8: return call(Builtin::Ln, {add(number(1.0), pow(a, number(2.0)))});
      case 9: return call(Builtin::Sqrt, {add(number(1.0), pow(a, number(2.0)))});
      default: return pow(call(Builtin::Arctan, {a}), number(static_cast<double>(2 + pick(2))));
    }
  }
};

}  // namespace

TEST_CASE("parse sum and product") {
  Expr e = parse_expression("x + 2*y");
  const auto& b = std::get<node::Binary>(e.node().value);
  CHECK(b.op == BinaryOp::Add);
  CHECK(std::get<node::Symbol>(b.lhs.node().value).name == "x");
  const auto& r = std::get<node::Binary>(b.rhs.node().value);
  CHECK(r.op == BinaryOp::Mul);
  CHECK(r.lhs.is_number(2.0));
  CHECK(std::get<node::Symbol>(r.rhs.node().value).name == "y");
}

TEST_CASE("logistic-like h(x) vanishes at zero") {
  Expr e = parse_expression("(1-exp(-x))/(1+exp(-x))");
  CHECK(eval_at(e, {{"x", 0.0}}) == 0.0);
  CHECK(eval_at(e, {{"x", 1.0}}) == doctest::Approx(std::tanh(0.5)).epsilon(1e-14));
}

TEST_CASE("syntax error points at offending token") {
  try {
    parse_expression("x +* y");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 4);
  }
  try {
    parse_expression("a +\n  b )");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 5);
  }
  CHECK_THROWS_AS(parse_expression("foo(x)"), ParseError);
  CHECK_THROWS_AS(parse_expression("sin(x, y)"), ParseError);
  CHECK_THROWS_AS(parse_expression("(x + 1"), ParseError);
  CHECK_THROWS_AS(parse_expression(""), ParseError);
  CHECK_THROWS_AS(parse_expression("x $ y"), ParseError);
}

TEST_CASE("precedence and associativity") {
  CHECK(eval_at(parse_expression("2^3^2"), {}) == 512.0);
  CHECK(eval_at(parse_expression("-x^2"), {{"x", 3.0}}) == -9.0);
  CHECK(eval_at(parse_expression("2^-1"), {}) == 0.5);
  CHECK(eval_at(parse_expression("8/4/2"), {}) == 1.0);
  CHECK(eval_at(parse_expression("1-2-3"), {}) == -4.0);
  CHECK(eval_at(parse_expression("-2*-3"), {}) == 6.0);
  CHECK(eval_at(parse_expression("2*pi"), {}) == 2 * std::numbers::pi);
  CHECK(eval_at(parse_expression("1.5e2 + .5"), {}) == 150.5);
}

TEST_CASE("evaluation") {
  CHECK(eval_at(parse_expression("x*y"), {{"x", 3}, {"y", 4}}) == 12.0);
  CHECK(eval_at(parse_expression("arctan(1)"), {}) == doctest::Approx(0.7853981634).epsilon(1e-10));
  CHECK(eval_at(parse_expression("min(x, 2) + max(x, 2)"), {{"x", 5}}) == 7.0);
  CHECK(eval_at(parse_expression("x[2] + x[1]"), {{"x[1]", 1}, {"x[2]", 10}}) == 11.0);
  CHECK(eval_at(parse_expression("step(10)"), {}, 9.999) == 0.0);
  CHECK(eval_at(parse_expression("step(10)"), {}, 10.0) == 1.0);
  CHECK(eval_at(parse_expression("ramp(50, 55)"), {}, 40) == 0.0);
  CHECK(eval_at(parse_expression("ramp(50, 55)"), {}, 52.5) == doctest::Approx(0.5));
  CHECK(eval_at(parse_expression("ramp(50, 55)"), {}, 60) == 1.0);
  CHECK(eval_at(parse_expression("t^2"), {}, 3.0) == 9.0);
}

TEST_CASE("ramp is C1") {
  Expr r = parse_expression("ramp(0, 1)");
  auto at = [&](double t) { return eval_at(r, {}, t); };
  double h = 1e-7;
  CHECK((at(h) - at(0)) / h == doctest::Approx(0.0).epsilon(1e-5));
  CHECK((at(1) - at(1 - h)) / h == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("evaluation errors") {
  try {
    eval_at(parse_expression("1 + u/x"), {{"u", 2}, {"x", 0}});
    FAIL("expected division by zero");
  } catch (const EvalError& e) {
    CHECK(std::string(e.what()).find("u/x") != std::string::npos);
  }
  CHECK_THROWS_AS(eval_at(parse_expression("x + w"), {{"x", 1}}), EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("ln(x)"), {{"x", -1}}), EvalError);
  CHECK_THROWS_AS(eval_at(parse_expression("sqrt(x)"), {{"x", -1}}), EvalError);
}

TEST_CASE("delayed references") {
  Expr e = parse_expression("z@tau - x");
  Environment env;
  env.set("x", 1.0);
  env.set_delay_lookup([](std::string_view c, std::string_view d) {
    CHECK(c == "z");
    CHECK(d == "tau");
    return 5.0;
  });
  CHECK(evaluate(e, env) == 4.0);
  CHECK(contains_delay(e));
  CHECK(render(parse_expression("x[2]@T")) == "x[2]@T");
  CHECK_THROWS_AS(evaluate(e, Environment().set("x", 1.0)), EvalError);
}

TEST_CASE("derivatives") {
  auto d_at = [](const char* text, const char* var, std::initializer_list<std::pair<const char*, double>> vals) {
    Derivative d = differentiate(parse_expression(text), var);
    return eval_at(d.expr, vals);
  };
  CHECK(d_at("x*x", "x", {{"x", 3}}) == 6.0);
  CHECK(d_at("arctan(x)", "x", {{"x", 1}}) == doctest::Approx(0.5).epsilon(1e-15));

  Expr e = parse_expression("beta2*chi/Y");
  Environment env;
  env.set("Y", 2).set("beta2", 1).set("chi", 4);
  double fd = central_difference(e, env, "Y", 2.0);
  Derivative d = differentiate(e, "Y");
  CHECK(!d.piecewise);
  CHECK(evaluate(d.expr, env) == doctest::Approx(fd).epsilon(1e-8));
  CHECK(evaluate(d.expr, env) == doctest::Approx(-1.0).epsilon(1e-12));

  CHECK(differentiate(parse_expression("3*y + sin(t)"), "x").expr.is_number(0.0));
  CHECK(differentiate(parse_expression("x[2]^2"), "x[2]").expr == parse_expression("2*x[2]"));
}

TEST_CASE("nonsmooth derivatives are flagged") {
  CHECK(differentiate(parse_expression("abs(x)"), "x").piecewise);
  CHECK(differentiate(parse_expression("max(x, 0)"), "x").piecewise);
  CHECK(differentiate(parse_expression("step(x)"), "x").piecewise);
  CHECK_FALSE(differentiate(parse_expression("abs(y) * x"), "x").piecewise);
  CHECK_FALSE(differentiate(parse_expression("x * step(10)"), "x").piecewise);
  CHECK_FALSE(differentiate(parse_expression("ramp(1, 2) * x"), "x").piecewise);
  // away from the kink the value is still right
  CHECK(eval_at(differentiate(parse_expression("abs(x)"), "x").expr, {{"x", -2}}) == -1.0);
  CHECK(eval_at(differentiate(parse_expression("min(x, y)"), "x").expr, {{"x", 1}, {"y", 3}}) == 1.0);
  CHECK(eval_at(differentiate(parse_expression("min(x, y)"), "x").expr, {{"x", 4}, {"y", 3}}) == 0.0);
}

TEST_CASE("render round trip on hand-picked cases") {
  for (const char* text : {"x + 2*y", "-x^2", "(-2)^x", "x^(-2)", "(x + y)*z", "x - (y - z)", "x/(y*z)",
                           "x/y*z", "2^3^2", "(2^3)^2", "-(x + y)", "sin(-x)", "x - -1", "x*-1",
                           "1e-300*x", "ramp(50, 55)*(1 - b)", "z@T + x[3]", "- - x", "x^-y^2"}) {
    Expr a = parse_expression(text);
    std::string r = render(a);
    Expr b = parse_expression(r);
    CHECK_MESSAGE(a == b, text << " -> " << r);
    CHECK(render(b) == r);
  }
  CHECK(render(parse_expression("x + 2*y")) == "x + 2*y");
  CHECK(render(parse_expression("(x+y)*z")) == "(x + y)*z");
  CHECK(render(parse_expression("0.1")) == "0.1");
}

TEST_CASE("symbolic derivative agrees with central differences on random expressions") {
  RandomExpr gen(20240917);
  std::uniform_real_distribution<double> pt(-2.0, 2.0);
  const char* vars[] = {"x", "y", "z"};
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    Expr e = gen.gen(1 + gen.pick(4));
    Environment env;
    env.set("x", pt(gen.rng)).set("y", pt(gen.rng)).set("z", pt(gen.rng));
    const char* var = vars[gen.pick(3)];
    Derivative d = differentiate(e, var);
    REQUIRE_FALSE(d.piecewise);
    double sym = evaluate(d.expr, env);
    double fd = central_difference(e, env, var, env.lookup(var));
    CHECK_MESSAGE(std::abs(sym - fd) <= 1e-5 * (1 + std::abs(sym)), render(e) << " d/d" << var);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("parse-render-parse is idempotent on random expressions") {
  RandomExpr gen(7);
  for (int i = 0; i < 1000; ++i) {
    Expr e = gen.gen(1 + gen.pick(5));
    Expr once = parse_expression(render(e));
    Expr twice = parse_expression(render(once));
    CHECK_MESSAGE(once == twice, render(e));
    CHECK(render(once) == render(twice));
  }
}

TEST_CASE("substitution and helpers") {
  Expr e = parse_expression("x*y + z@T");
  Expr s = substitute(e, {[](const node::Symbol& sym) -> std::optional<Expr> {
                            if (sym.name == "x") return number(2.0);
                            return std::nullopt;
                          },
                          [](const node::Delayed&) -> std::optional<Expr> { return symbol("w"); }});
  CHECK(s == parse_expression("2*y + w"));
  CHECK(depends_on(e, "y"));
  CHECK_FALSE(depends_on(e, "q"));
  CHECK(depends_on_time(parse_expression("1 + step(3)")));
  CHECK_FALSE(depends_on_time(parse_expression("x + 1")));
  auto times = switching_times(parse_expression("step(10) + ramp(t0, 55)*x"),
                               [](const Expr& a) { return eval_at(a, {{"t0", 50.0}}); });
  REQUIRE(times.size() == 3);
  CHECK(times[0] == 10.0);
  CHECK(times[1] == 50.0);
  CHECK(times[2] == 55.0);
}

TEST_CASE("bound evaluation through frames") {
  Expr e = substitute(parse_expression("a*x - u"),
                      {[](const node::Symbol& s) -> std::optional<Expr> {
                         if (s.name == "x") return symbol("x", 0, SymbolKind::State, 1);
                         if (s.name == "a") return symbol("a", 0, SymbolKind::Parameter, 0);
                         if (s.name == "u") return symbol("u", 0, SymbolKind::Input, 0);
                         return std::nullopt;
                       },
                       {}});
  double states[] = {0.0, 3.0};
  double params[] = {2.0};
  double inputs[] = {1.0};
  Frame f{0.0, states, params, inputs, {}, nullptr};
  CHECK(evaluate(e, f) == 5.0);
  CHECK_THROWS_AS(evaluate(parse_expression("q"), f), EvalError);
}
