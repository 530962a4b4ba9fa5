#include <cmath>
#include <random>

#include "doctest.h"
#include "symcon/certify.hpp"
#include "symcon/symmetry.hpp"
#include "symcon/sysdl.hpp"

using namespace symcon;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string model_path(const std::string& name) { return std::string(SYMCON_DATA_DIR) + "/models/" + name; }

SystemModel flat(const std::string& text) { return *parse_model(text).model; }

CertifyOptions few(int n = 200) {
  CertifyOptions o;
  o.samples = n;
  return o;
}

Box box1(const std::string& name, double lo, double hi) {
  Box b;
  b.set(name, {lo, hi});
  return b;
}

// Closed-form 2-norm measure of the chain reduced toward its reflection-fixed
// subspace: V J Vᵀ = [[-1-k, k], [k, -1-3k]].
double chain_stage1(double k) { return -1 - 2 * k + std::sqrt(2.0) * std::abs(k); }

std::vector<Partition> chain4_cascade() { return {Partition{{0, 1, 1, 0}, 2}, Partition{{0, 0, 0, 0}, 1}}; }

NetworkSpec chain4_with(double k) {
  auto lm = load_model(model_path("chain4.sysdl"));
  NetworkSpec spec = *lm.network;
  for (auto& [name, v] : spec.globals.params)
    if (name == "k") v = k;
  return spec;
}

VirtualEmbedding quorum_embedding() {
  VirtualEmbedding e;
  std::string mean = "(";
  for (int i = 1; i <= 10; ++i) {
    const auto n = std::to_string(i);
    e.copies.push_back({{"yx", "x_" + n}, {"yy", "y_" + n}, {"yz", "z_m"}});
    mean += (i > 1 ? " + x_" : "x_") + n;
  }
  e.inputs.push_back({"xbar", parse_expression(mean + ")/10")});
  return e;
}

HierarchySpec quorum_hierarchy() {
  HierarchySpec h;
  h.groups = {{"yx", "yy"}, {"yz"}};
  h.tests = {SecondOrderBlock{"yx", "yy"}, MeasureKind(Norm::Two)};
  return h;
}

}  // namespace

TEST_CASE("scalar decay has margin one under every measure") {
  auto m = flat("model d\nstates\n  x\ndynamics\n  d/dt x = -x\n");
  for (Norm n : {Norm::One, Norm::Two, Norm::Infinity}) {
    auto c = certify_contraction(m, box1("x", -5, 5), n, few());
    CHECK(c.passed);
    CHECK(c.margin == doctest::Approx(1.0));
    CHECK(c.target == "full");
    CHECK(c.samples >= 200);
  }
  auto grow = flat("model g\nstates\n  x\ndynamics\n  d/dt x = x\n");
  auto c = certify_contraction(grow, box1("x", -5, 5), Norm::Two, few());
  CHECK_FALSE(c.passed);
  CHECK(c.max_mu == doctest::Approx(1.0));
  CHECK(c.witness.x.size() == 1);
}

TEST_CASE("pass requires the margin to clear the configured rate") {
  auto m = flat("model d\nstates\n  x\ndynamics\n  d/dt x = -0.5*x\n");
  CertifyOptions o = few();
  o.min_rate = 0.4;
  CHECK(certify_contraction(m, box1("x", -1, 1), Norm::Two, o).passed);
  o.min_rate = 0.6;
  auto c = certify_contraction(m, box1("x", -1, 1), Norm::Two, o);
  CHECK_FALSE(c.passed);
  CHECK(c.threshold == 0.6);
}

TEST_CASE("feed-forward loop contracts in the weighted 1-norm") {
  auto lm = load_model(model_path("i1ffl.sysdl"));
  const auto& m = lm.system();
  MatrixXd theta(2, 2);
  theta << 1, 0, 0, 0.01;
  auto c = certify_contraction(m, m.default_box(), MeasureKind(Norm::One, theta), CertifyOptions{});
  CHECK(c.passed);
  // oracle: Θ J Θ⁻¹ = [[-1, 0], [-0.01 chi/Y², -1]], so μ₁ = -1 + 0.01 chi/Y²; dense grid maximum
  double worst = -1e9;
  for (int a = 0; a <= 100; ++a)
    for (int b = 0; b <= 100; ++b) {
      double y = 0.5 + 9.5 * a / 100, chi = 1 + 9.0 * b / 100;
      worst = std::max(worst, -1 + 0.01 * chi / (y * y));
    }
  CHECK(worst == doctest::Approx(-0.6));
  CHECK(std::abs(c.max_mu - worst) < 1e-12);  // box vertices are sampled
  CHECK(std::abs(recompute_at_witness(m, c) - c.max_mu) <= 1e-12);

  // unweighted, the off-diagonal chi/Y² dominates
  CHECK_FALSE(certify_contraction(m, m.default_box(), Norm::One, few()).passed);
}

TEST_CASE("witness recomputation reproduces max_mu") {
  auto hop = load_model(model_path("hopfield13.sysdl"));
  auto c = certify_contraction(hop.system(), hop.system().default_box(), Norm::One, few(300));
  CHECK(std::abs(recompute_at_witness(hop.system(), c) - c.max_mu) <= 1e-12);
  auto chem = load_model(model_path("chemotaxis.sysdl"));
  auto d = certify_contraction(chem.system(), chem.system().default_box(), Norm::Two, few(300));
  CHECK(std::abs(recompute_at_witness(chem.system(), d) - d.max_mu) <= 1e-12);
}

TEST_CASE("Hopfield network certifies in the 1-norm") {
  for (const char* name : {"hopfield13.sysdl", "hopfield13_rewired.sysdl"}) {
    auto lm = load_model(model_path(name));
    auto c = certify_contraction(lm.system(), lm.system().default_box(), Norm::One, CertifyOptions{});
    CHECK(c.passed);
    // circle columns sum to -1, squares at most -1 + 1/(1.5)² in magnitude, hub column at most -0.5
    CHECK(c.max_mu <= -0.5 + 1e-12);
    CHECK(c.max_mu >= -1.0);
  }
}

TEST_CASE("chain contracts toward the reflection-fixed subspace") {
  for (double k : {0.5, 1.0, 2.0}) {
    auto spec = chain4_with(k);
    auto m = assemble_network(spec);
    auto s = fixed_subspace(linear_action(m, find_action(m, "gamma2")));
    auto c = certify_toward_subspace(m, s, m.default_box(), Norm::Two, few());
    CHECK(c.passed);
    CHECK(c.max_mu == doctest::Approx(chain_stage1(k)).epsilon(1e-12));
    CHECK(std::abs(recompute_at_witness(m, c) - c.max_mu) <= 1e-12);
    auto c1 = certify_toward_subspace(m, s, m.default_box(), Norm::One, few());
    CHECK(c1.max_mu == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("quotient chain contracts toward full synchrony") {
  auto lm = load_model(model_path("chain4.sysdl"));
  Partition p{{0, 1, 1, 0}, 2};
  auto q = quotient_network(*lm.network, p);
  auto qm = assemble_network(q);
  REQUIRE(qm.dimension() == 2);
  auto s = synchrony_subspace(q, Partition{{0, 0}, 1});
  auto c = certify_toward_subspace(qm, s, qm.default_box(), Norm::Two, few());
  CHECK(c.passed);
  CHECK(c.max_mu == doctest::Approx(-3.0));  // -1 - 2k
}

TEST_CASE("expanding system does not contract toward a subspace") {
  auto m = flat("model e\nstates\n  a, b\ndynamics\n  d/dt a = a\n  d/dt b = b\n");
  Subspace s = subspace_from_span((MatrixXd(1, 2) << 1, 1).finished(), 2);
  CHECK_FALSE(certify_toward_subspace(m, s, m.default_box(), Norm::Two, few()).passed);
  Subspace whole = subspace_from_span(MatrixXd::Identity(2, 2), 2);
  CHECK_THROWS_AS(certify_toward_subspace(m, whole, m.default_box(), Norm::Two, few()), PreconditionError);
}

TEST_CASE("chain cascade") {
  auto cc = certify_cascade(chain4_with(1.0), chain4_cascade(), Norm::Two, few());
  CHECK(cc.passed);
  REQUIRE(cc.stages.size() == 2);
  CHECK(cc.stages[0].dimension == 2);
  CHECK(cc.stages[1].dimension == 1);
  CHECK(cc.stages[0].partition == "{1,4} {2,3}");
  CHECK(cc.stages[0].certificate.max_mu == doctest::Approx(chain_stage1(1.0)));
  CHECK(cc.stages[1].certificate.max_mu == doctest::Approx(-3.0));
  CHECK(cc.margin >= 1.0);
  CHECK(cc.stages[0].invariance.max_residual <= 1e-12);

  auto repulsive = certify_cascade(chain4_with(-1.0), chain4_cascade(), Norm::Two, few());
  CHECK_FALSE(repulsive.passed);
  REQUIRE(repulsive.failing_stage.has_value());
  CHECK(*repulsive.failing_stage == 1);
  CHECK(repulsive.stages[0].certificate.max_mu == doctest::Approx(chain_stage1(-1.0)));
  CHECK(repulsive.stages[0].certificate.max_mu > 0);
}

TEST_CASE("cascade input checks") {
  auto spec = chain4_with(1.0);
  // not coarser
  CHECK_THROWS_AS(certify_cascade(spec, {Partition{{0, 0, 0, 0}, 1}, Partition{{0, 1, 1, 0}, 2}}, Norm::Two, few()),
                  PreconditionError);
  // not strictly coarser
  CHECK_THROWS_AS(certify_cascade(spec, {Partition{{0, 1, 1, 0}, 2}, Partition{{0, 1, 1, 0}, 2}}, Norm::Two, few()),
                  PreconditionError);
  // unbalanced
  CHECK_THROWS_AS(certify_cascade(spec, {Partition{{0, 0, 1, 1}, 2}}, Norm::Two, few()), PreconditionError);
  CHECK_THROWS_AS(certify_cascade(spec, {}, Norm::Two, few()), PreconditionError);
}

TEST_CASE("eight-node chain cascades in three stages") {
  auto lm = load_model(model_path("chain8.sysdl"));
  std::vector<Partition> chain = {Partition{{0, 1, 2, 3, 3, 2, 1, 0}, 4}, Partition{{0, 1, 1, 0, 0, 1, 1, 0}, 2},
                                  Partition{{0, 0, 0, 0, 0, 0, 0, 0}, 1}};
  auto cc = certify_cascade(*lm.network, chain, Norm::Two, few());
  CHECK(cc.passed);
  REQUIRE(cc.stages.size() == 3);
  CHECK(cc.stages[0].dimension == 4);
  CHECK(cc.stages[1].dimension == 2);
  CHECK(cc.stages[2].dimension == 1);
  for (const auto& st : cc.stages) CHECK(st.invariance.passed);
}

TEST_CASE("cascade agrees with the scalar g - h test outside the documented band") {
  auto lm = load_model(model_path("chain4.sysdl"));
  for (double k : {-3.0, -1.5, -1.0, -0.2, 0.0, 0.5, 1.0, 3.0}) {
    auto cc = certify_cascade(chain4_with(k), chain4_cascade(), Norm::Two, few(50));
    // scalar x' = g(x) - h(x) = -(1 + k) x
    std::string text = "model s\nstates\n  x\ndynamics\n  d/dt x = -(1 + " + std::to_string(k) + ")*x\n";
    auto scalar = certify_contraction(flat(text), box1("x", -5, 5), Norm::Two, few(50));
    CHECK_MESSAGE(cc.passed == scalar.passed, "k = " << k);
  }
  // inside the band the network test is strictly stronger
  auto band = certify_cascade(chain4_with(-0.5), chain4_cascade(), Norm::Two, few(50));
  CHECK_FALSE(band.passed);
  CHECK(*band.failing_stage == 1);
}

TEST_CASE("second-order condition for u/x") {
  Box pass;
  pass.set("x", {1, 10});
  pass.set("u", {1, 4});
  auto c = certify_second_order(0.1, parse_expression("u/x"), pass, CertifyOptions{});
  CHECK(c.passed);
  CHECK(c.margin == doctest::Approx(1.0));  // 1/(2 eps) - sup u/x = 5 - 4
  CHECK(*c.figure("x_threshold") == doctest::Approx(0.8));
  CHECK(*c.figure("b") == doctest::Approx(1.0));

  Box fail;
  fail.set("x", {0.1, 0.5});
  fail.set("u", {1, 4});
  auto f = certify_second_order(0.1, parse_expression("u/x"), fail, CertifyOptions{});
  CHECK_FALSE(f.passed);
  CHECK(f.max_mu == doctest::Approx(35.0));  // 40 - 5
}

TEST_CASE("second-order condition for a bounded-slope phi") {
  Box box;
  box.set("x", {1, 10});
  box.set("u", {1, 4});
  auto c = certify_second_order(0.05, parse_expression("arctan(u/x)"), box, CertifyOptions{});
  CHECK(c.passed);
  // x phi_x = -r/(1+r²) >= -1/2
  CHECK(c.margin == doctest::Approx(10 - 0.5).epsilon(1e-4));
  CHECK(*c.figure("b") <= 1.0);
  CHECK(*c.figure("x_threshold") <= 0.4);
  CHECK(*c.figure("x_threshold") < 1.0);

  CHECK_THROWS_AS(certify_second_order(0.1, parse_expression("u + x"), box, CertifyOptions{}), PreconditionError);
  CHECK_THROWS_AS(certify_second_order(0.1, parse_expression("u/x + y"), box, CertifyOptions{}), ModelError);
  CHECK_THROWS_AS(certify_second_order(-1.0, parse_expression("u/x"), box, CertifyOptions{}), PreconditionError);
}

TEST_CASE("second-order test on the chemotaxis model matches the standalone form") {
  auto lm = load_model(model_path("chemotaxis.sysdl"));
  const auto& m = lm.system();
  auto c = certify_second_order(m, "x", "y", m.default_box(), few(300));
  CHECK(c.passed);
  CHECK(*c.figure("eps") == doctest::Approx(0.1));
  CHECK(c.margin == doctest::Approx(1.0));  // 5 - sup u/x with u <= 4, x >= 1

  Box near;
  near.set("x", {0.1, 0.5});
  near.set("y", {0.1, 5});
  near.set("u", {1, 4});
  CHECK_FALSE(certify_second_order(m, "x", "y", near, few(300)).passed);

  // Z' = chi/Y - Z has the right fast equation but Y' does not vanish at Z = 1
  auto ff = load_model(model_path("i1ffl.sysdl"));
  CHECK_THROWS_AS(certify_second_order(ff.system(), "Y", "Z", ff.system().default_box(), few()), PreconditionError);
  // y' depends on y nonlinearly
  auto bad = flat("model b\nstates\n  x, y\ndynamics\n  d/dt x = x*(y - 1)\n  d/dt y = -y*y\n");
  CHECK_THROWS_AS(certify_second_order(bad, "x", "y", bad.default_box(), few()), PreconditionError);
}

TEST_CASE("hierarchical certificate of the quorum virtual system") {
  auto lm = load_model(model_path("quorum_chemotaxis_virtual.sysdl"));
  const auto& v = lm.system();
  auto c = certify_hierarchical(v, quorum_hierarchy(), v.default_box(), CertifyOptions{});
  CHECK(c.passed);
  CHECK(c.note == "block upper triangular");
  REQUIRE(c.parts.size() == 2);
  // 1/(2 eps) - sup (u/yx + u K yz/yx²) = 5 - (3.75 + 0.9375)
  CHECK(c.parts[0].margin == doctest::Approx(0.3125).epsilon(1e-9));
  CHECK(c.parts[1].margin == doctest::Approx(1.5));  // -1 - xbar, xbar >= 0.5
  CHECK(c.margin == doctest::Approx(0.3125).epsilon(1e-9));
  // coupling block is [K (yy - 1); 0]
  CHECK(*c.figure("offdiag_1_2") == doctest::Approx(0.8));
  CHECK_FALSE(c.figure("offdiag_2_1"));

  auto gated = quorum_hierarchy();
  gated.offdiag_bound = 0.1;
  CHECK_FALSE(certify_hierarchical(v, gated, v.default_box(), few()).passed);
}

TEST_CASE("hierarchy structure checks") {
  auto coupled = flat("model c\nstates\n  a, b\ndynamics\n  d/dt a = -a + b\n  d/dt b = a - 2*b\n");
  HierarchySpec h;
  h.groups = {{"a"}, {"b"}};
  h.tests = {MeasureKind(Norm::Two), MeasureKind(Norm::Two)};
  CHECK_THROWS_AS(certify_hierarchical(coupled, h, coupled.default_box(), few()), PreconditionError);

  auto diag = flat("model d\nstates\n  a, b\ndynamics\n  d/dt a = -a\n  d/dt b = -2*b + sin(t)\n");
  auto c = certify_hierarchical(diag, h, diag.default_box(), few());
  CHECK(c.passed);
  CHECK(c.note == "block diagonal");
  CHECK(c.figures.empty());
  CHECK(c.margin == doctest::Approx(1.0));

  HierarchySpec missing;
  missing.groups = {{"a"}};
  missing.tests = {MeasureKind(Norm::Two)};
  CHECK_THROWS_AS(certify_hierarchical(diag, missing, diag.default_box(), few()), PreconditionError);
}

TEST_CASE("virtual system certificate for the chemotaxis quorum network") {
  auto real = load_model(model_path("quorum_chemotaxis.sysdl"));
  auto virt = load_model(model_path("quorum_chemotaxis_virtual.sysdl"));
  auto c = certify_virtual(virt.system(), real.system(), quorum_embedding(), real.system().default_box(),
                           virt.system().default_box(), quorum_hierarchy(), few(300));
  CHECK(c.passed);
  REQUIRE(c.parts.size() == 2);
  CHECK(c.parts[0].max_mu <= 1e-10);
  CHECK(c.parts[1].passed);
  CHECK(c.margin == doctest::Approx(0.3125).epsilon(1e-9));

  // an inconsistent virtual system: the medium decays twice as fast
  auto text = std::string(R"(
model wrong
params
  eps = 0.1
  K = 0.2
inputs
  u = 1 + 2*step(20)
  xbar = external
states
  yx, yy, yz
dynamics
  d/dt yx = yx*(yy - 1) + K*(yy - 1)*yz
  d/dt yy = (u/yx - yy)/eps
  d/dt yz = -2*yz - xbar*yz
domain
  positive
  yz in [0, 1]
  xbar in [0.5, 10]
)");
  auto w = parse_model(text);
  auto bad = certify_virtual(w.system(), real.system(), quorum_embedding(), real.system().default_box(),
                             w.system().default_box(), MeasureKind(Norm::Two), few(100));
  CHECK_FALSE(bad.passed);
  CHECK_FALSE(bad.parts[0].passed);
  CHECK(bad.parts[0].max_mu > 0.1);
  CHECK(bad.parts[0].witness.x.size() == real.system().dimension());

  VirtualEmbedding short_copy = quorum_embedding();
  short_copy.copies[0].pop_back();
  CHECK_THROWS_AS(certify_virtual(virt.system(), real.system(), short_copy, real.system().default_box(),
                                  virt.system().default_box(), MeasureKind(Norm::Two), few(20)),
                  DimensionError);
}

TEST_CASE("trivial virtual system is consistent") {
  auto lm = load_model(model_path("chemotaxis.sysdl"));
  const auto& m = lm.system();
  VirtualEmbedding e;
  e.copies = {{{"x", "x"}, {"y", "y"}}};
  auto c = certify_virtual(m, m, e, m.default_box(), m.default_box(), MeasureKind(Norm::Two), few(100));
  CHECK(c.parts[0].max_mu == 0.0);
  CHECK(c.parts[0].passed);
}

TEST_CASE("observed decay never beats the certified rate") {
  auto lm = load_model(model_path("chain4.sysdl"));
  const auto& m = lm.system();
  auto cert = certify_contraction(m, m.default_box(), Norm::Two, few());
  REQUIRE(cert.passed);
  const double lambda = cert.margin;
  CHECK(lambda == doctest::Approx(1.0));
  auto s = fixed_subspace(linear_action(m, find_action(m, "gamma2")));
  auto toward = certify_toward_subspace(m, s, m.default_box(), Norm::Two, few());

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-5, 5);
  SolverConfig cfg;
  cfg.horizon = 10;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-13;
  for (int pair = 0; pair < 20; ++pair) {
    VectorXd a(4), b(4);
    for (int i = 0; i < 4; ++i) a[i] = d(rng), b[i] = d(rng);
    auto ta = integrate(m, a, cfg), tb = integrate(m, b, cfg);
    auto dist = distance_series(ta, tb);
    const double d0 = dist.v.front();
    for (std::size_t k = 0; k < dist.t.size(); ++k)
      CHECK(dist.v[k] <= d0 * std::exp(-(lambda - 0.05) * dist.t[k]) + 1e-9);
    auto rate = estimate_contraction_rate(ta, tb, 0.0, 10.0);
    CHECK(rate.rate >= lambda - 0.05);
    // distance to the fixed subspace decays at least at the toward-subspace margin
    auto ds = subspace_distance(ta, s);
    for (std::size_t k = 0; k < ds.t.size(); ++k)
      CHECK(ds.v[k] <= ds.v.front() * std::exp(-(toward.margin - 0.05) * ds.t[k]) + 1e-9);
  }

  // the weighted 1-norm bound on the feed-forward loop, measured in that norm
  auto ff = load_model(model_path("i1ffl.sysdl"));
  MatrixXd theta(2, 2);
  theta << 1, 0, 0, 0.01;
  auto wc = certify_contraction(ff.system(), ff.system().default_box(), MeasureKind(Norm::One, theta), few());
  for (int pair = 0; pair < 20; ++pair) {
    std::uniform_real_distribution<double> y(1, 9), z(0.5, 9);
    VectorXd a(2), b(2);
    a << y(rng), z(rng);
    b << y(rng), z(rng);
    SolverConfig c2 = cfg;
    c2.horizon = 30;
    auto ta = integrate(ff.system(), a, c2), tb = integrate(ff.system(), b, c2);
    const double d0 = (theta * (a - b)).lpNorm<1>();
    for (std::size_t k = 0; k < ta.size(); ++k) {
      const double t = ta.times()[k];
      const double dk = (theta * (ta.state(k) - tb.at(t))).lpNorm<1>();
      CHECK(dk <= d0 * std::exp(-(wc.margin - 0.05) * t) + 1e-9);
    }
  }
}

TEST_CASE("chain synchronization error decays at least at the cascade margin") {
  auto spec = chain4_with(1.0);
  auto cc = certify_cascade(spec, chain4_cascade(), Norm::Two, few());
  auto m = assemble_network(spec);
  VectorXd x0(4);
  x0 << 4, -3, 1, 2.5;
  SolverConfig cfg;
  cfg.horizon = 30;
  cfg.rtol = 1e-11;
  cfg.atol = 1e-14;
  auto traj = integrate(m, x0, cfg);
  auto e = sync_error(traj, layout_of(m), Partition{{0, 0, 0, 0}, 1});
  auto r = convergence_rate(e, 2.0, 15.0);
  CHECK(r.rate >= cc.margin - 0.05);
}

TEST_CASE("evaluation failures are reported with their location") {
  auto m = flat("model l\nstates\n  x\ndynamics\n  d/dt x = -sqrt(x)\n");
  try {
    certify_contraction(m, box1("x", -1, 1), Norm::Two, few(50));
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("x = (") != std::string::npos);
  }
}

TEST_CASE("certificate reports") {
  auto lm = load_model(model_path("i1ffl.sysdl"));
  const auto& m = lm.system();
  MatrixXd theta(2, 2);
  theta << 1, 0, 0, 0.01;
  auto c = certify_contraction(m, m.default_box(), MeasureKind(Norm::One, theta), few());
  auto j = to_json(c);
  CHECK(j["target"] == "full");
  CHECK(j["measure"] == "weighted-1");
  CHECK(j["weight"][1][1] == 0.01);
  CHECK(j["status"] == "pass");
  CHECK(j["model_hash"] == m.hash_hex());
  CHECK(j["box"]["Y"][0] == 0.5);
  CHECK(j["box"]["chi"][1] == 10.0);
  CHECK(j["witness"]["x"].contains("Z"));
  CHECK(j["witness"]["u"].contains("chi"));
  CHECK(j["max_mu"].get<double>() == c.max_mu);
  CHECK(j["margin"].get<double>() == -c.max_mu);
  CHECK(j["samples"] == c.samples);
  // deterministic, including under a different thread count
  auto again = certify_contraction(m, m.default_box(), MeasureKind(Norm::One, theta), few());
  CHECK(to_json(again).dump() == j.dump());

  auto cc = to_json(certify_cascade(chain4_with(-1.0), chain4_cascade(), Norm::Two, few(50)));
  CHECK(cc["status"] == "fail");
  CHECK(cc["failing_stage"] == 1);
  CHECK(cc["stages"].size() == 2);
}
