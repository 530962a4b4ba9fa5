#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "symcon/network.hpp"
#include "symcon/sysdl.hpp"

using namespace symcon;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string model_path(const std::string& name) { return std::string(SYMCON_DATA_DIR) + "/models/" + name; }

// Central difference Jacobian of the model field: the oracle for symbolic Jacobians.
MatrixXd fd_jacobian(const SystemModel& m, double t, const VectorXd& x, double h = 1e-6) {
  MatrixXd j(m.dimension(), m.dimension());
  for (int c = 0; c < m.dimension(); ++c) {
    VectorXd a = x, b = x;
    a[c] += h;
    b[c] -= h;
    j.col(c) = (m.eval(t, a) - m.eval(t, b)) / (2 * h);
  }
  return j;
}

MatrixXd eval_jacobian(const SystemModel& m, double t, const VectorXd& x) {
  auto jac = jacobian(m);
  VectorXd p = m.param_values();
  std::vector<double> u(m.input_count());
  m.input_values(t, {p.data(), static_cast<std::size_t>(p.size())}, u);
  auto d = m.delay_values();
  Frame f;
  f.t = t;
  f.states = {x.data(), static_cast<std::size_t>(x.size())};
  f.params = {p.data(), static_cast<std::size_t>(p.size())};
  f.inputs = u;
  f.delays = d;
  return jac.evaluate(f);
}

const char* kTwoCells = R"(
model pair
params
  k = 2
template cell {
  states
    x
  dynamics
    d/dt x = -x
}
node 1, 2 : cell
coupling diff(j, i) = k*(x_j - x_i)
edge 1 <-> 2 : diff
)";

}  // namespace

TEST_CASE("every bundled model loads") {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(std::string(SYMCON_DATA_DIR) + "/models")) {
    if (entry.path().extension() != ".sysdl") continue;
    CAPTURE(entry.path().string());
    LoadedModel m = load_model(entry.path().string());
    CHECK(m.system().dimension() > 0);
    ++count;
  }
  CHECK(count >= 10);
}

TEST_CASE("chain4 loads as a network with two labels and assembles the chain equations") {
  LoadedModel lm = load_model(model_path("chain4.sysdl"));
  REQUIRE(lm.is_network());
  CHECK(lm.network->nodes.size() == 4);
  CHECK(lm.network->couplings.size() == 2);
  const SystemModel& m = lm.system();
  REQUIRE(m.dimension() == 4);
  CHECK(m.state_names() == std::vector<std::string>{"x_1", "x_2", "x_3", "x_4"});

  // g = -x, h = kx with k = 1, written out by hand from the chain
  MatrixXd expect(4, 4);
  expect << -2, 1, 0, 0,
             1, -3, 1, 0,
             0, 1, -3, 1,
             0, 0, 1, -2;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd x(4);
    for (int i = 0; i < 4; ++i) x[i] = d(rng);
    CHECK((m.eval(0, x) - expect * x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((eval_jacobian(m, 0, x) - expect).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("i1ffl loads with states Y, Z and input chi; Jacobian matches finite differences") {
  LoadedModel lm = load_model(model_path("i1ffl.sysdl"));
  CHECK_FALSE(lm.is_network());
  const SystemModel& m = lm.system();
  CHECK(m.state_names() == std::vector<std::string>{"Y", "Z"});
  REQUIRE(m.input_count() == 1);
  CHECK(m.input_name(0) == "chi");

  VectorXd x(2);
  x << 1, 0.3;
  MatrixXd j = eval_jacobian(m, 0, x);  // chi = 1 before the step
  MatrixXd expect(2, 2);
  expect << -1, 0, -1, -1;
  CHECK((j - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((j - fd_jacobian(m, 0, x)).cwiseAbs().maxCoeff() < 1e-6);

  x << 2.5, 4;
  CHECK((eval_jacobian(m, 20, x) - fd_jacobian(m, 20, x)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(m.breakpoints() == std::vector<double>{10});
}

TEST_CASE("symbolic Jacobians of bundled models agree with finite differences") {
  for (const char* name : {"chemotaxis.sysdl", "hopfield13.sysdl", "hopfield13_rewired.sysdl",
                           "quorum_chemotaxis.sysdl"}) {
    CAPTURE(name);
    LoadedModel lm = load_model(model_path(name));
    const SystemModel& m = lm.system();
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> d(0.5, 3);
    for (double t : {0.0, 52.0, 103.0}) {
      VectorXd x(m.dimension());
      for (int i = 0; i < x.size(); ++i) x[i] = d(rng);
      MatrixXd a = eval_jacobian(m, t, x), b = fd_jacobian(m, t, x);
      CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5 * (1 + a.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("jacobian rejects nonsmooth state dependence") {
  LoadedModel lm = parse_model("model bad\nstates\n  x\ndynamics\n  d/dt x = -abs(x)\n");
  CHECK_THROWS_AS(jacobian(lm.system()), NonsmoothError);
  LoadedModel ok = parse_model("model ok\nstates\n  x\ndynamics\n  d/dt x = -x + step(3)\n");
  CHECK_NOTHROW(jacobian(ok.system()));
}

TEST_CASE("single node without edges assembles to its template") {
  LoadedModel lm = parse_model(R"(
model lone
template cell {
  states
    x, y
  dynamics
    d/dt x = -x + y
    d/dt y = -2*y
}
node a : cell
)");
  const SystemModel& m = lm.system();
  REQUIRE(m.dimension() == 2);
  CHECK(m.state_names() == std::vector<std::string>{"x_a", "y_a"});
  VectorXd x(2);
  x << 1.5, -0.5;
  VectorXd f = m.eval(0, x);
  CHECK(f[0] == doctest::Approx(-2.0));
  CHECK(f[1] == doctest::Approx(1.0));
}

TEST_CASE("hopfield hub dynamics follow the mixed saturating input") {
  LoadedModel lm = load_model(model_path("hopfield13.sysdl"));
  const SystemModel& m = lm.system();
  REQUIRE(m.dimension() == 13);
  VectorXd x = VectorXd::LinSpaced(13, 0.2, 3.0);
  for (double t : {10.0, 52.5, 80.0}) {
    double s = t <= 50 ? 0 : t >= 55 ? 1 : (t - 50) / 5;
    double b = s * s * (3 - 2 * s);
    double expect = -x[12];
    for (int j = 8; j < 12; ++j) expect += (1 - b) * x[j] / (1 + x[j]) + b / (1 + x[j]);
    CHECK(m.eval(t, x)[12] == doctest::Approx(expect).epsilon(1e-14));
  }
  // circle 1: -x + u + ring neighbours 2 and 8 + square 9
  double t = 3;
  double expect = -x[0] + 1 + std::sin(0.7 * t) + (x[1] - x[0]) + (x[7] - x[0]) + std::atan(x[8]) - std::atan(x[0]);
  CHECK(m.eval(t, x)[0] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("load errors") {
  SUBCASE("edge label joining inequivalent nodes") {
    const char* text = R"(
model bad
template a {
  states
    x
  dynamics
    d/dt x = -x
}
template b {
  states
    x
  dynamics
    d/dt x = -2*x
}
node 1 : a
node 2 : b
node 3 : a
coupling c(j, i) = x_j - x_i
edge 1 -> 3 : c
edge 2 -> 3 : c
)";
    CHECK_THROWS_AS(parse_model(text), ModelError);
  }
  SUBCASE("undeclared name in dynamics") {
    CHECK_THROWS_AS(parse_model("model m\nstates\n  x\ndynamics\n  d/dt x = -x + q\n"), ModelError);
  }
  SUBCASE("syntax error carries the file line") {
    try {
      parse_model("model m\nstates\n  x\ndynamics\n  d/dt x = x +* 2\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 5);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS(load_model("/nonexistent/model.sysdl")); }
  SUBCASE("missing dynamics") { CHECK_THROWS(parse_model("model m\nstates\n  x, y\ndynamics\n  d/dt x = -x\n")); }
}

TEST_CASE("balanced partitions of the bundled networks") {
  auto clusters_of = [](const char* name) {
    LoadedModel lm = load_model(model_path(name));
    return describe(*lm.network, coarsest_balanced_partition(*lm.network));
  };
  CHECK(clusters_of("chain4.sysdl") == "{1,4} {2,3}");
  CHECK(clusters_of("hopfield13.sysdl") == "{1,2,3,4,5,6,7,8} {9,10,11,12} {13}");
  CHECK(clusters_of("hopfield13_rewired.sysdl") == "{1,3,5,7} {2,4,6,8} {9,10,11,12} {13}");
  CHECK(clusters_of("quorum_periodic.sysdl") == "{1,2,3,4,5,6,7,8,9,10} {m}");
}

TEST_CASE("heterogeneous templates give singletons") {
  LoadedModel lm = parse_model(R"(
model het
template a {
  states
    x
  dynamics
    d/dt x = -x
}
template b {
  states
    x
  dynamics
    d/dt x = -2*x
}
template c {
  states
    x
  dynamics
    d/dt x = -3*x
}
node 1 : a
node 2 : b
node 3 : c
)");
  Partition p = coarsest_balanced_partition(*lm.network);
  CHECK(p.count == 3);
}

TEST_CASE("quotient of chain4 reproduces the reduced two-node chain") {
  LoadedModel lm = load_model(model_path("chain4.sysdl"));
  Partition p = coarsest_balanced_partition(*lm.network);
  SystemModel q = quotient_system(*lm.network, p);
  REQUIRE(q.dimension() == 2);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd y(2);
    y << d(rng), d(rng);
    // x_{1,4}' = -x_{1,4} + (x_{2,3} - x_{1,4});  x_{2,3}' = -x_{2,3} + (x_{1,4} - x_{2,3})
    VectorXd expect(2);
    expect << -y[0] + y[1] - y[0], -y[1] + y[0] - y[1];
    CHECK((q.eval(0, y) - expect).cwiseAbs().maxCoeff() < 1e-12);
    // the lifted point is on the synchrony subspace and the fields agree
    VectorXd x = lift(*lm.network, p, y);
    VectorXd fx = lm.system().eval(0, x);
    CHECK(fx[0] == doctest::Approx(expect[0]));
    CHECK(fx[3] == doctest::Approx(expect[0]));
    CHECK(fx[1] == doctest::Approx(expect[1]));
    CHECK(fx[2] == doctest::Approx(expect[1]));
  }
}

TEST_CASE("quotient by the discrete partition is the assembled model") {
  LoadedModel lm = load_model(model_path("hopfield13.sysdl"));
  SystemModel q = quotient_system(*lm.network, discrete_partition(13));
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> d(0, 4);
  for (int rep = 0; rep < 5; ++rep) {
    VectorXd x(13);
    for (int i = 0; i < 13; ++i) x[i] = d(rng);
    CHECK((q.eval(51.0, x) - lm.system().eval(51.0, x)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("quotient rejects unbalanced partitions") {
  LoadedModel lm = load_model(model_path("chain4.sysdl"));
  Partition p{{0, 0, 1, 1}, 2};
  CHECK_FALSE(is_balanced(*lm.network, p));
  CHECK_THROWS_AS(quotient_system(*lm.network, p), PreconditionError);
}

TEST_CASE("hopfield quotient keeps multiplicities") {
  LoadedModel lm = load_model(model_path("hopfield13.sysdl"));
  Partition p = coarsest_balanced_partition(*lm.network);
  SystemModel q = quotient_system(*lm.network, p);
  REQUIRE(q.dimension() == 3);
  VectorXd y(3);
  y << 0.7, 3.0, 1.2;
  VectorXd full = lift(*lm.network, p, y);
  VectorXd fx = lm.system().eval(60, full);
  VectorXd fq = q.eval(60, y);
  CHECK(fq[0] == doctest::Approx(fx[0]));
  CHECK(fq[1] == doctest::Approx(fx[8]));
  CHECK(fq[2] == doctest::Approx(fx[12]));
}

TEST_CASE("flow invariance") {
  SUBCASE("chain4 pair subspace is invariant") {
    LoadedModel lm = load_model(model_path("chain4.sysdl"));
    Subspace s = synchrony_subspace(*lm.network, coarsest_balanced_partition(*lm.network));
    CHECK(s.dimension() == 2);
    auto r = check_flow_invariance(lm.system(), s, 500, lm.system().default_box(), 1e-12);
    CHECK(r.passed);
    CHECK(r.max_residual <= 1e-12);
  }
  SUBCASE("random linear system and random subspace") {
    std::mt19937 rng(2);
    std::normal_distribution<double> g;
    std::string text = "model lin\nstates\n  x[3]\ndynamics\n";
    for (int i = 1; i <= 3; ++i) {
      text += "  d/dt x[" + std::to_string(i) + "] = ";
      for (int j = 1; j <= 3; ++j) text += (j > 1 ? " + " : "") + std::string("(") + std::to_string(g(rng)) + ")*x[" + std::to_string(j) + "]";
      text += "\n";
    }
    LoadedModel lm = parse_model(text);
    MatrixXd span = MatrixXd::Random(1, 3);
    Subspace s = subspace_from_span(span, 3);
    auto r = check_flow_invariance(lm.system(), s, 200, lm.system().default_box(), 1e-9);
    CHECK_FALSE(r.passed);
    CHECK(r.max_residual > 1e-3);
  }
  SUBCASE("full space") {
    LoadedModel lm = load_model(model_path("chemotaxis.sysdl"));
    Subspace s = subspace_from_span(MatrixXd::Identity(2, 2), 2);
    auto r = check_flow_invariance(lm.system(), s, 100, lm.system().default_box(), 0.0);
    CHECK(r.passed);
    CHECK(r.max_residual == 0.0);
  }
}

TEST_CASE("synchrony subspace dimension and orthogonality") {
  LoadedModel lm = load_model(model_path("quorum_chemotaxis.sysdl"));
  Partition p = coarsest_balanced_partition(*lm.network);
  CHECK(p.count == 2);
  Subspace s = synchrony_subspace(*lm.network, p);
  CHECK(s.dimension() == 3);  // one cell (x, y) plus the medium
  CHECK(s.orthogonality_error() < 1e-12);
}

TEST_CASE("sample sets") {
  LoadedModel lm = load_model(model_path("i1ffl.sysdl"));
  const SystemModel& m = lm.system();
  Box box = m.default_box();
  CHECK(box.find("chi").has_value());
  SampleSet s(m, box, 100, 4);
  CHECK(s.times().size() == 66);
  CHECK(s.point_count() == 100 + 8);  // three boxed axes give 8 vertices
  for (std::size_t k = 0; k < s.size(); k += 97) {
    auto sm = s.at(k);
    CHECK(box.find("Y")->contains(sm.x[0]));
    CHECK(box.find("chi")->contains(sm.u[0]));
  }
  SampleSet again(m, box, 100, 4);
  CHECK(again.at(500).x == s.at(500).x);
}

TEST_CASE("model hash is stable and parameter sensitive") {
  LoadedModel a = parse_model(kTwoCells), b = parse_model(kTwoCells);
  CHECK(a.system().hash_hex() == b.system().hash_hex());
  SystemModel c = a.system().with_params({{"k", 3.0}});
  CHECK(c.hash_hex() != a.system().hash_hex());
}
