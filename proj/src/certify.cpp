#include "symcon/certify.hpp"

#include <cmath>
#include <algorithm>
#include <functional>
#include <iomanip>
#include <map>
#include <limits>
#include <set>
#include <sstream>

#include "symcon/parallel.hpp"

namespace symcon {

std::optional<double> ContractionCertificate::figure(std::string_view name) const {
  for (const auto& [k, v] : figures)
    if (k == name) return v;
  return std::nullopt;
}

namespace {

std::string where(const SampleSet::Sample& s) {
  std::ostringstream os;
  os << std::setprecision(10) << "t = " << s.t << ", x = (";
  for (Eigen::Index i = 0; i < s.x.size(); ++i) os << (i ? ", " : "") << s.x[i];
  os << ")";
  return os.str();
}

Witness make_witness(const SystemModel& m, const SampleSet::Sample& s) {
  Witness w{s.t, s.x, s.u, m.state_names(), {}};
  for (int i = 0; i < m.input_count(); ++i) w.input_names.push_back(m.input_name(i));
  return w;
}

// Evaluates `value` on every sample in parallel, then takes the maximum in
// sample order so the witness does not depend on scheduling.
ContractionCertificate scan(const SystemModel& m, const Box& box, const CertifyOptions& opt,
                            const std::function<double(const SampleSet::Sample&, const Frame&)>& value) {
  if (opt.samples < 1) throw PreconditionError("certify: need at least one sample");
  SampleSet set(m, box, opt.samples, opt.seed, opt.time_window);
  std::vector<double> v(set.size());
  parallel_for(set.size(), [&](std::size_t k) {
    auto s = set.at(k);
    double r;
    try {
      r = value(s, set.frame(s));
    } catch (const EvalError& e) {
      throw NumericalError(std::string("evaluation failed at ") + where(s) + ": " + e.what());
    }
    if (!std::isfinite(r)) throw NumericalError("non-finite Jacobian or condition at " + where(s));
    v[k] = r;
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  ContractionCertificate c;
  c.box = set.box();
  c.samples = static_cast<int>(set.size());
  c.max_mu = v[best];
  c.margin = -c.max_mu;
  c.threshold = opt.min_rate;
  c.passed = c.max_mu <= -opt.min_rate;
  c.witness = make_witness(m, set.at(best));
  c.model_hash = m.hash_hex();
  return c;
}

Eigen::MatrixXd sub_block(const Eigen::MatrixXd& j, const std::vector<int>& rows, const std::vector<int>& cols) {
  Eigen::MatrixXd b(rows.size(), cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) b(r, c) = j(rows[r], cols[c]);
  return b;
}

int require_state(const SystemModel& m, const std::string& name) {
  int k = m.state_index(name);
  if (k < 0) throw ModelError("model '" + m.name() + "' has no state '" + name + "'");
  return k;
}

// The (x, y) block shape accepted by the second-order test.
struct SecondOrderShape {
  int ix = 0, iy = 0;
  double eps = 0.0;
  Expr dfx_dy;    // ∂f_x/∂y
  Expr d2fx_dy2;  // ∂²f_x/∂y²

  SecondOrderShape(const SystemModel& m, const std::string& x, const std::string& y) {
    ix = require_state(m, x);
    iy = require_state(m, y);
    if (ix == iy) throw PreconditionError("second-order test needs two distinct states");
    const Expr& fy = m.field()[iy];
    const Expr& fx = m.field()[ix];
    Expr dyy = m.bind(simplify(differentiate(fy, y).expr));
    bool constant = true;
    visit_symbols(dyy, [&](const node::Symbol& s) {
      if (s.kind != SymbolKind::Parameter) constant = false;
    });
    if (!constant || depends_on_time(dyy))
      throw PreconditionError("second-order test: d(" + y + ")'/d" + y + " must be the constant -1/eps");
    Eigen::VectorXd p = m.param_values();
    Frame f;
    f.params = {p.data(), static_cast<std::size_t>(p.size())};
    const double slope = evaluate(dyy, f);
    if (!(slope < 0)) throw PreconditionError("second-order test: d(" + y + ")'/d" + y + " must be negative");
    eps = -1.0 / slope;
    dfx_dy = m.bind(simplify(differentiate(fx, y).expr));
    d2fx_dy2 = m.bind(simplify(differentiate(dfx_dy, y).expr));
  }

  // Shape checks that need values, then the margin.
  double margin(const SystemModel& m, const SampleSet::Sample& s, const Frame& f, const Eigen::MatrixXd& j) const {
    const double scale = 1 + s.x.cwiseAbs().maxCoeff();
    if (std::abs(evaluate(d2fx_dy2, f)) > 1e-9 * scale)
      throw PreconditionError("second-order test: " + m.state_names()[ix] + "' is not affine in " +
                              m.state_names()[iy]);
    Eigen::VectorXd at_one = s.x;
    at_one[iy] = 1.0;
    Frame g = f;
    g.states = {at_one.data(), static_cast<std::size_t>(at_one.size())};
    if (std::abs(evaluate(m.field()[ix], g)) > 1e-9 * scale)
      throw PreconditionError("second-order test: " + m.state_names()[ix] + "' does not vanish at " +
                              m.state_names()[iy] + " = 1");
    return eps * j(iy, ix) * j(ix, iy) + 1.0 / (2.0 * eps);
  }
};

ContractionCertificate second_order_block(const SystemModel& m, const JacobianExpr& jac, const SecondOrderShape& sh,
                                          const Box& box, const CertifyOptions& opt) {
  auto c = scan(m, box, opt, [&](const SampleSet::Sample& s, const Frame& f) {
    return -sh.margin(m, s, f, jac.evaluate(f));
  });
  c.target = "second-order";
  c.figures.push_back({"eps", sh.eps});
  c.note = "margin = inf of eps*df" + m.state_names()[sh.iy] + "/d" + m.state_names()[sh.ix] + "*df" +
           m.state_names()[sh.ix] + "/d" + m.state_names()[sh.iy] + " + 1/(2 eps)";
  return c;
}

// Row/column sets of a grouping, with every state covered exactly once.
std::vector<std::vector<int>> group_indices(const SystemModel& m, const std::vector<std::vector<std::string>>& groups) {
  std::vector<std::vector<int>> out;
  std::vector<int> seen(m.dimension(), 0);
  for (const auto& g : groups) {
    if (g.empty()) throw PreconditionError("hierarchy: empty group");
    std::vector<int> idx;
    for (const auto& name : g) {
      int k = require_state(m, name);
      if (seen[k]++) throw PreconditionError("hierarchy: state '" + name + "' appears in two groups");
      idx.push_back(k);
    }
    out.push_back(std::move(idx));
  }
  for (int i = 0; i < m.dimension(); ++i)
    if (!seen[i]) throw PreconditionError("hierarchy: state '" + m.state_names()[i] + "' is in no group");
  return out;
}

bool block_zero(const JacobianExpr& jac, const std::vector<int>& rows, const std::vector<int>& cols) {
  for (int r : rows)
    for (int c : cols)
      if (!jac.structurally_zero(r, c)) return false;
  return true;
}

bool coarser(const Partition& fine, const Partition& coarse) {
  std::map<int, int> image;
  for (std::size_t i = 0; i < fine.cluster_of.size(); ++i) {
    auto [it, fresh] = image.emplace(fine.cluster_of[i], coarse.cluster_of[i]);
    if (!fresh && it->second != coarse.cluster_of[i]) return false;
  }
  return true;
}

}  // namespace

ContractionCertificate certify_contraction(const SystemModel& m, const Box& box, const MeasureKind& kind,
                                           const CertifyOptions& opt) {
  if (kind.weight && kind.weight->rows() != m.dimension())
    throw DimensionError("weight is " + std::to_string(kind.weight->rows()) + "x" +
                         std::to_string(kind.weight->cols()) + ", model has " + std::to_string(m.dimension()) +
                         " states");
  const JacobianExpr jac = jacobian(m);
  auto c = scan(m, box, opt, [&](const SampleSet::Sample&, const Frame& f) {
    return matrix_measure(jac.evaluate(f), kind);
  });
  c.target = "full";
  c.measure = kind;
  return c;
}

ContractionCertificate certify_toward_subspace(const SystemModel& m, const Subspace& s, const Box& box,
                                               const MeasureKind& kind, const CertifyOptions& opt) {
  if (s.ambient() != m.dimension()) throw DimensionError("subspace and model dimensions differ");
  if (s.complement.rows() == 0) throw PreconditionError("the subspace is the whole space; nothing to contract toward");
  if (kind.weight && kind.weight->rows() != s.complement.rows())
    throw DimensionError("weight must be sized to the complement (" + std::to_string(s.complement.rows()) + ")");
  const JacobianExpr jac = jacobian(m);
  const Eigen::MatrixXd& v = s.complement;
  auto c = scan(m, box, opt, [&](const SampleSet::Sample&, const Frame& f) {
    return matrix_measure(Eigen::MatrixXd(v * jac.evaluate(f) * v.transpose()), kind);
  });
  c.target = "toward-subspace";
  c.measure = kind;
  c.projection = v;
  c.figures.push_back({"subspace_dimension", s.dimension()});
  return c;
}

ContractionCertificate certify_second_order(const SystemModel& m, const std::string& x, const std::string& y,
                                            const Box& box, const CertifyOptions& opt) {
  SecondOrderShape sh(m, x, y);
  return second_order_block(m, jacobian(m), sh, box, opt);
}

ContractionCertificate certify_second_order(double eps, const Expr& phi, const Box& box, const CertifyOptions& opt) {
  if (!(eps > 0)) throw PreconditionError("second-order test: eps must be positive");
  visit_symbols(phi, [](const node::Symbol& s) {
    if (s.name != "x" && s.name != "u") throw ModelError("phi may mention only x and u, found '" + s.name + "'");
  });
  auto bx = box.find("x"), bu = box.find("u");
  if (!bx || !bu || box.size() != 2) throw PreconditionError("second-order test: the box must name exactly x and u");
  if (bx->lo <= 0 || bu->lo < 0) throw PreconditionError("second-order test: needs x > 0 and u >= 0 on the box");
  auto dx = differentiate(phi, "x"), du = differentiate(phi, "u");
  if (dx.piecewise || du.piecewise) throw NonsmoothError("phi is not smooth");
  Box ordered;
  ordered.set("x", *bx);
  ordered.set("u", *bu);
  Eigen::MatrixXd pts = box_points(ordered, opt.samples, opt.seed);
  const auto n = static_cast<std::size_t>(pts.rows());
  std::vector<double> xphix(n), xphiu(n);
  parallel_for(n, [&](std::size_t k) {
    Environment env;
    env.set("x", pts(k, 0)).set("u", pts(k, 1));
    xphix[k] = pts(k, 0) * evaluate(dx.expr, env);
    xphiu[k] = pts(k, 0) * evaluate(du.expr, env);
    const double shape = xphix[k] + pts(k, 1) * evaluate(du.expr, env);
    if (std::abs(shape) > 1e-9 * (1 + std::abs(xphix[k])))
      throw PreconditionError("phi is not a function of u/x (x*phi_x + u*phi_u = " + std::to_string(shape) + ")");
    if (!std::isfinite(xphix[k]) || !std::isfinite(xphiu[k])) throw NumericalError("phi derivative is not finite");
  });
  std::size_t best = 0;
  double b = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (xphix[k] < xphix[best]) best = k;
    b = std::max(b, xphiu[k]);
  }
  ContractionCertificate c;
  c.target = "second-order";
  c.box = ordered;
  c.samples = static_cast<int>(n);
  c.max_mu = -(xphix[best] + 1.0 / (2 * eps));
  c.margin = -c.max_mu;
  c.threshold = opt.min_rate;
  c.passed = c.max_mu <= -opt.min_rate;
  c.witness.x = pts.row(static_cast<Eigen::Index>(best)).transpose();
  c.witness.state_names = {"x", "u"};
  c.figures = {{"eps", eps}, {"b", b}, {"x_threshold", 2 * eps * bu->hi * b}, {"x_min", bx->lo}};
  c.note = "phi = " + render(phi) + "; margin = inf of x*dphi/dx + 1/(2 eps)";
  return c;
}

ContractionCertificate certify_hierarchical(const SystemModel& m, const HierarchySpec& h, const Box& box,
                                            const CertifyOptions& opt) {
  if (h.groups.size() != h.tests.size()) throw PreconditionError("hierarchy: one test per group");
  const auto idx = group_indices(m, h.groups);
  const JacobianExpr jac = jacobian(m);
  const std::size_t g = idx.size();
  bool lower = true, upper = true;  // J_ab ≡ 0 above / below the diagonal
  for (std::size_t a = 0; a < g; ++a)
    for (std::size_t b = 0; b < g; ++b) {
      if (a == b) continue;
      const bool zero = block_zero(jac, idx[a], idx[b]);
      if (a < b && !zero) lower = false;
      if (a > b && !zero) upper = false;
    }
  if (!lower && !upper) throw PreconditionError("hierarchy: the Jacobian is not block triangular under this grouping");

  ContractionCertificate c;
  c.target = "hierarchical";
  c.threshold = opt.min_rate;
  c.model_hash = m.hash_hex();
  c.note = lower && upper ? "block diagonal" : lower ? "block lower triangular" : "block upper triangular";
  c.max_mu = -std::numeric_limits<double>::infinity();
  c.passed = true;
  for (std::size_t a = 0; a < g; ++a) {
    ContractionCertificate part;
    if (const auto* kind = std::get_if<MeasureKind>(&h.tests[a])) {
      if (kind->weight && kind->weight->rows() != static_cast<Eigen::Index>(idx[a].size()))
        throw DimensionError("hierarchy: weight of block " + std::to_string(a + 1) + " has the wrong size");
      part = scan(m, box, opt, [&](const SampleSet::Sample&, const Frame& f) {
        return matrix_measure(sub_block(jac.evaluate(f), idx[a], idx[a]), *kind);
      });
      part.target = "block";
      part.measure = *kind;
    } else {
      const auto& so = std::get<SecondOrderBlock>(h.tests[a]);
      std::set<int> want{require_state(m, so.x), require_state(m, so.y)};
      if (std::set<int>(idx[a].begin(), idx[a].end()) != want)
        throw PreconditionError("hierarchy: second-order block " + std::to_string(a + 1) + " must be exactly {" + so.x +
                                ", " + so.y + "}");
      part = second_order_block(m, jac, SecondOrderShape(m, so.x, so.y), box, opt);
    }
    std::string names;
    for (const auto& s : h.groups[a]) names += (names.empty() ? "" : ",") + s;
    part.note = "block " + std::to_string(a + 1) + " {" + names + "}" + (part.note.empty() ? "" : "; " + part.note);
    if (part.max_mu > c.max_mu) {
      c.max_mu = part.max_mu;
      c.witness = part.witness;
      c.box = part.box;
      c.samples = part.samples;
    }
    c.passed = c.passed && part.passed;
    c.parts.push_back(std::move(part));
  }

  for (std::size_t a = 0; a < g; ++a)
    for (std::size_t b = 0; b < g; ++b) {
      if (a == b || block_zero(jac, idx[a], idx[b])) continue;
      auto sup = scan(m, box, opt, [&](const SampleSet::Sample&, const Frame& f) {
        return induced_norm(sub_block(jac.evaluate(f), idx[a], idx[b]), Norm::Two);
      });
      const std::string key = "offdiag_" + std::to_string(a + 1) + "_" + std::to_string(b + 1);
      c.figures.push_back({key, sup.max_mu});
      if (h.offdiag_bound && sup.max_mu > *h.offdiag_bound) c.passed = false;
    }
  if (h.offdiag_bound) c.figures.push_back({"offdiag_bound", *h.offdiag_bound});
  c.margin = -c.max_mu;
  return c;
}

CascadeCertificate certify_cascade(const NetworkSpec& spec, const std::vector<Partition>& chain,
                                   const MeasureKind& kind, const CertifyOptions& opt) {
  if (chain.empty()) throw PreconditionError("cascade: no partitions given");
  const int n = static_cast<int>(spec.nodes.size());
  CascadeCertificate out;
  out.passed = true;
  out.margin = std::numeric_limits<double>::infinity();
  Partition previous = discrete_partition(n);
  NetworkSpec q = spec;
  out.model_hash = assemble_network(spec).hash_hex();

  for (std::size_t k = 0; k < chain.size(); ++k) {
    const Partition p = normalized(chain[k]);
    if (static_cast<int>(p.cluster_of.size()) != n)
      throw DimensionError("cascade: partition " + std::to_string(k + 1) + " does not cover the network");
    if (!coarser(previous, p) || p.count >= previous.count)
      throw PreconditionError("cascade: partition " + std::to_string(k + 1) + " (" + describe(spec, p) +
                              ") is not strictly coarser than the previous one");

    // carry p onto the current quotient's nodes
    Partition mapped;
    for (const auto& node : q.nodes) mapped.cluster_of.push_back(p.cluster_of[spec.node_index(node.id)]);
    mapped.count = p.count;
    mapped = normalized(mapped);
    if (!is_balanced(q, mapped))
      throw PreconditionError("cascade: partition " + describe(spec, p) + " is not balanced on the stage-" +
                              std::to_string(k + 1) + " quotient");

    const SystemModel stage_model = assemble_network(q);
    const Subspace target = synchrony_subspace(q, mapped);
    CascadeStage st;
    st.index = static_cast<int>(k + 1);
    st.partition = describe(spec, p);
    st.dimension = target.dimension();
    const Box box = stage_model.default_box();
    st.invariance = check_flow_invariance(stage_model, target, std::min(opt.samples, 200), box, 1e-9, opt.seed);
    st.certificate = certify_toward_subspace(stage_model, target, box, kind, opt);
    if (!st.invariance.passed) {
      st.certificate.passed = false;
      st.certificate.note = "target subspace is not flow-invariant";
    }
    if (!st.certificate.passed && out.passed) {
      out.passed = false;
      out.failing_stage = st.index;
    }
    out.margin = std::min(out.margin, st.certificate.margin);
    out.stages.push_back(std::move(st));

    q = quotient_network(q, mapped);
    previous = p;
  }
  return out;
}

ContractionCertificate certify_virtual(const SystemModel& v, const SystemModel& real, const VirtualEmbedding& emb,
                                       const Box& real_box, const Box& virtual_box,
                                       const std::variant<MeasureKind, HierarchySpec>& contraction,
                                       const CertifyOptions& opt) {
  if (emb.copies.empty()) throw PreconditionError("virtual: no copies given");
  // virtual state -> real state, per copy
  std::vector<std::vector<int>> target;
  for (const auto& copy : emb.copies) {
    std::vector<int> t(v.dimension(), -1);
    for (const auto& [vs, rs] : copy) {
      int a = v.state_index(vs);
      if (a < 0) throw ModelError("virtual system has no state '" + vs + "'");
      t[a] = require_state(real, rs);
    }
    for (int a = 0; a < v.dimension(); ++a)
      if (t[a] < 0)
        throw DimensionError("virtual state '" + v.state_names()[a] + "' has no real counterpart in a copy");
    target.push_back(std::move(t));
  }
  // virtual input slot -> expression over the real model, or a real input slot
  std::vector<std::optional<Expr>> in_expr(v.input_count());
  std::vector<int> in_slot(v.input_count(), -1);
  for (int i = 0; i < v.input_count(); ++i) {
    const auto& name = v.input_name(i);
    bool found = false;
    for (const auto& [k, e] : emb.inputs)
      if (k == name) {
        in_expr[i] = real.bind(e);
        found = true;
      }
    if (!found) {
      in_slot[i] = real.input_index(name);
      if (in_slot[i] < 0) throw ModelError("virtual input '" + name + "' has no value in the real system");
    }
  }
  for (const auto& [k, e] : emb.inputs)
    if (v.input_index(k) < 0) throw ModelError("virtual system has no input '" + k + "'");

  const Eigen::VectorXd vp = v.param_values();
  const auto vd = v.delay_values();
  auto consistency = scan(real, real_box, opt, [&](const SampleSet::Sample& s, const Frame& f) {
    std::vector<double> u(v.input_count());
    for (int i = 0; i < v.input_count(); ++i) u[i] = in_expr[i] ? evaluate(*in_expr[i], f) : s.u[in_slot[i]];
    double r = 0.0;
    Eigen::VectorXd y(v.dimension());
    for (const auto& t : target) {
      for (int a = 0; a < v.dimension(); ++a) y[a] = s.x[t[a]];
      Frame g{s.t, {y.data(), static_cast<std::size_t>(y.size())}, {vp.data(), static_cast<std::size_t>(vp.size())},
              u, vd, nullptr};
      for (int a = 0; a < v.dimension(); ++a)
        r = std::max(r, std::abs(evaluate(v.field()[a], g) - evaluate(real.field()[t[a]], f)));
    }
    return r;
  });
  consistency.target = "consistency";
  consistency.threshold = 1e-10;
  consistency.passed = consistency.max_mu <= 1e-10;
  consistency.margin = -consistency.max_mu;
  consistency.note = "max_mu holds the consistency residual max |v(x, x, t) - f(x, t)|";
  consistency.figures.push_back({"copies", static_cast<double>(emb.copies.size())});

  ContractionCertificate part_b = std::holds_alternative<MeasureKind>(contraction)
                                      ? certify_contraction(v, virtual_box, std::get<MeasureKind>(contraction), opt)
                                      : certify_hierarchical(v, std::get<HierarchySpec>(contraction), virtual_box, opt);

  ContractionCertificate c;
  c.target = "virtual";
  c.measure = part_b.measure;
  c.box = part_b.box;
  c.samples = part_b.samples;
  c.max_mu = part_b.max_mu;
  c.margin = part_b.margin;
  c.threshold = part_b.threshold;
  c.witness = part_b.witness;
  c.model_hash = v.hash_hex();
  c.passed = consistency.passed && part_b.passed;
  c.figures.push_back({"consistency_residual", consistency.max_mu});
  c.note = "real model " + real.name() + " (" + real.hash_hex() + ")";
  c.parts.push_back(std::move(consistency));
  c.parts.push_back(std::move(part_b));
  return c;
}

RateEstimate estimate_contraction_rate(const Trajectory& a, const Trajectory& b, double t_from, double t_to) {
  return convergence_rate(distance_series(a, b), t_from, t_to);
}

double recompute_at_witness(const SystemModel& m, const ContractionCertificate& c) {
  if (c.target != "full" && c.target != "toward-subspace")
    throw PreconditionError("recompute_at_witness: only measure certificates can be recomputed");
  const auto& w = c.witness;
  if (w.x.size() != m.dimension()) throw DimensionError("witness and model dimensions differ");
  Eigen::VectorXd p = m.param_values();
  auto d = m.delay_values();
  std::for_each(d.begin(), d.end(), [](double& v) { v = 0.0; });
  Frame f{w.t, {w.x.data(), static_cast<std::size_t>(w.x.size())}, {p.data(), static_cast<std::size_t>(p.size())},
          w.u, d, nullptr};
  Eigen::MatrixXd j = jacobian(m).evaluate(f);
  if (c.projection) j = *c.projection * j * c.projection->transpose();
  return matrix_measure(j, c.measure);
}

// --- reports -------------------------------------------------------------------------

std::string measure_label(const MeasureKind& k) {
  return (k.weight ? "weighted-" : "") + to_string(k.base);
}

nlohmann::json to_json(const Box& b) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < b.size(); ++i) j[b.names[i]] = {b.ranges[i].lo, b.ranges[i].hi};
  return j;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

}  // namespace

nlohmann::json to_json(const ContractionCertificate& c) {
  nlohmann::json j;
  j["target"] = c.target;
  j["measure"] = measure_label(c.measure);
  j["weight"] = c.measure.weight ? matrix_json(*c.measure.weight) : nlohmann::json(nullptr);
  j["box"] = to_json(c.box);
  j["sampled"] = true;
  j["samples"] = c.samples;
  j["max_mu"] = c.max_mu;
  j["margin"] = c.margin;
  j["threshold"] = c.threshold;
  j["status"] = c.passed ? "pass" : "fail";
  nlohmann::json w;
  w["t"] = c.witness.t;
  nlohmann::json wx = nlohmann::json::object();
  for (Eigen::Index i = 0; i < c.witness.x.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    wx[k < c.witness.state_names.size() ? c.witness.state_names[k] : std::to_string(i + 1)] = c.witness.x[i];
  }
  w["x"] = wx;
  nlohmann::json wu = nlohmann::json::object();
  for (std::size_t i = 0; i < c.witness.u.size() && i < c.witness.input_names.size(); ++i)
    wu[c.witness.input_names[i]] = c.witness.u[i];
  if (!wu.empty()) w["u"] = wu;
  j["witness"] = w;
  j["model_hash"] = c.model_hash;
  if (c.projection) j["projection"] = matrix_json(*c.projection);
  if (!c.figures.empty()) {
    nlohmann::json f = nlohmann::json::object();
    for (const auto& [k, v] : c.figures) f[k] = v;
    j["figures"] = f;
  }
  if (!c.note.empty()) j["note"] = c.note;
  if (!c.parts.empty()) {
    j["parts"] = nlohmann::json::array();
    for (const auto& p : c.parts) j["parts"].push_back(to_json(p));
  }
  return j;
}

nlohmann::json to_json(const CascadeCertificate& c) {
  nlohmann::json j;
  j["target"] = "cascade";
  j["status"] = c.passed ? "pass" : "fail";
  j["margin"] = c.margin;
  j["failing_stage"] = c.failing_stage ? nlohmann::json(*c.failing_stage) : nlohmann::json(nullptr);
  j["model_hash"] = c.model_hash;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : c.stages) {
    nlohmann::json st;
    st["stage"] = s.index;
    st["partition"] = s.partition;
    st["subspace_dimension"] = s.dimension;
    st["invariance_residual"] = s.invariance.max_residual;
    st["certificate"] = to_json(s.certificate);
    j["stages"].push_back(st);
  }
  return j;
}

}  // namespace symcon
