#include "symcon/symmetry.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <map>

#include "symcon/parallel.hpp"

namespace symcon {

namespace {

Eigen::VectorXd field_at(const SystemModel& m, const Frame& f) {
  Eigen::VectorXd out(m.dimension());
  for (int i = 0; i < m.dimension(); ++i) out[i] = evaluate(m.field()[i], f);
  return out;
}

Frame with_state(Frame f, const Eigen::VectorXd& x) {
  f.states = {x.data(), static_cast<std::size_t>(x.size())};
  return f;
}

// Reduces per-sample residuals to a report with a deterministic witness (lowest index of the max).
ResidualReport reduce(const SampleSet& set, const std::vector<double>& residual, double tol) {
  ResidualReport r;
  r.tol = tol;
  r.samples = static_cast<int>(residual.size());
  std::size_t arg = 0;
  for (std::size_t k = 0; k < residual.size(); ++k)
    if (residual[k] > residual[arg] || std::isnan(residual[k])) {
      arg = k;
      if (std::isnan(residual[k])) break;
    }
  if (!residual.empty()) {
    auto w = set.at(arg);
    r.max_residual = residual[arg];
    r.witness = w.x;
    r.witness_t = w.t;
  }
  r.passed = r.max_residual <= tol;
  return r;
}

// Node blocks of a model: its layout, or one block per state.
NetworkLayout blocks_of(const SystemModel& m) {
  if (m.layout()) return *m.layout();
  NetworkLayout l;
  for (int i = 0; i < m.dimension(); ++i) l.nodes.push_back({m.state_names()[i], "", i, 1});
  return l;
}

}  // namespace

LinearAction permutation_action(const SystemModel& m, const std::vector<std::vector<std::string>>& cycles,
                                std::string name) {
  NetworkLayout layout = blocks_of(m);
  auto block = [&](const std::string& id) -> const NodeInfo& {
    int k = layout.node_index(id);
    if (k < 0 && !m.layout()) {
      try {
        std::size_t used = 0;
        int idx = std::stoi(id, &used);
        if (used == id.size() && idx >= 1 && idx <= m.dimension()) k = idx - 1;
      } catch (const std::exception&) {
      }
    }
    if (k < 0) throw ModelError("permutation names unknown node '" + id + "'");
    return layout.nodes[k];
  };
  const int n = m.dimension();
  std::vector<int> image(n);
  for (int i = 0; i < n; ++i) image[i] = i;
  std::vector<bool> moved(n, false);
  for (const auto& cyc : cycles) {
    for (std::size_t k = 0; k < cyc.size(); ++k) {
      const NodeInfo& from = block(cyc[k]);
      const NodeInfo& to = block(cyc[(k + 1) % cyc.size()]);
      if (from.dim != to.dim) throw ModelError("permutation maps node '" + from.id + "' onto a node of another size");
      for (int c = 0; c < from.dim; ++c) {
        if (moved[from.offset + c]) throw ModelError("permutation moves node '" + from.id + "' twice");
        moved[from.offset + c] = true;
        image[from.offset + c] = to.offset + c;
      }
    }
  }
  LinearAction a;
  a.name = std::move(name);
  a.permutation = true;
  a.matrix = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) a.matrix(image[i], i) = 1.0;
  long long order = 1;
  std::vector<bool> seen(n, false);
  for (int i = 0; i < n; ++i) {
    long long len = 0;
    for (int j = i; !seen[j]; j = image[j], ++len) seen[j] = true;
    if (len) order = std::lcm(order, len);
  }
  if (order <= std::numeric_limits<int>::max()) a.order = static_cast<int>(order);
  return a;
}

const ActionDecl& find_action(const SystemModel& m, std::string_view name) {
  for (const auto& a : m.description().actions)
    if (a.name == name) return a;
  throw ModelError("model '" + m.name() + "' declares no action '" + std::string(name) + "'");
}

LinearAction linear_action(const SystemModel& m, const ActionDecl& d) {
  LinearAction a;
  switch (d.kind) {
    case ActionDecl::Kind::Permute:
      a = permutation_action(m, d.cycles, d.name);
      break;
    case ActionDecl::Kind::Linear:
      if (d.matrix.rows() != m.dimension() || d.matrix.cols() != m.dimension())
        throw DimensionError("action '" + d.name + "' does not match the model dimension");
      a.name = d.name;
      a.matrix = d.matrix;
      break;
    case ActionDecl::Kind::Map:
      throw PreconditionError("action '" + d.name + "' is an expression map, not a linear action");
  }
  try {
    a.order = action_order(a);
  } catch (const PreconditionError&) {
  }
  return a;
}

ScalingActionPair scaling_pair(const SystemModel& m, const ActionDecl& d) {
  ScalingActionPair p;
  p.label = d.name;
  p.params = m.param_values();
  p.input_map.assign(m.input_count(), std::nullopt);
  for (const auto& [name, e] : d.input_map) {
    int k = m.input_index(name);
    if (k < 0) throw ModelError("action '" + d.name + "' maps unknown input '" + name + "'");
    p.input_map[k] = m.bind(e);
  }
  if (d.kind != ActionDecl::Kind::Map) {
    p.linear = linear_action(m, d);
    return p;
  }
  const int n = m.dimension();
  for (int i = 0; i < n; ++i) p.state_map.push_back(m.bind(symbol(m.state_names()[i])));
  for (const auto& [name, e] : d.state_map) {
    int k = m.state_index(name);
    if (k < 0) throw ModelError("action '" + d.name + "' maps unknown state '" + name + "'");
    p.state_map[k] = m.bind(e);
  }
  p.derivative_.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Derivative dv = differentiate(p.state_map[i], m.state_names()[j]);
      if (dv.piecewise)
        throw NonsmoothError("action '" + d.name + "': component " + m.state_names()[i] + " is not differentiable");
      p.derivative_[i].push_back(dv.expr);
    }
  return p;
}

SpatioTemporalAction spatio_temporal_action(const SystemModel& m, const ActionDecl& d) {
  if (!d.shift) throw PreconditionError("action '" + d.name + "' declares no time shift");
  if (!(*d.shift > 0)) throw PreconditionError("action '" + d.name + "': the time shift must be positive");
  return {linear_action(m, d), *d.shift};
}

namespace {

Frame pair_frame(const ScalingActionPair& p, const Eigen::VectorXd& x, double t, std::span<const double> u) {
  Frame f;
  f.t = t;
  f.states = {x.data(), static_cast<std::size_t>(x.size())};
  f.params = {p.params.data(), static_cast<std::size_t>(p.params.size())};
  f.inputs = u;
  return f;
}

}  // namespace

Eigen::VectorXd ScalingActionPair::apply(const Eigen::VectorXd& x, double t, std::span<const double> u) const {
  if (linear) return linear->matrix * x;
  Frame f = pair_frame(*this, x, t, u);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = evaluate(state_map[i], f);
  return out;
}

Eigen::MatrixXd ScalingActionPair::jacobian(const Eigen::VectorXd& x, double t, std::span<const double> u) const {
  if (linear) return linear->matrix;
  Frame f = pair_frame(*this, x, t, u);
  const auto n = x.size();
  Eigen::MatrixXd j(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) j(r, c) = evaluate(derivative_[r][c], f);
  return j;
}

std::vector<double> ScalingActionPair::apply_input(double t, std::span<const double> u) const {
  std::vector<double> out(u.begin(), u.end());
  Frame f;
  f.t = t;
  f.params = {params.data(), static_cast<std::size_t>(params.size())};
  f.inputs = u;
  for (std::size_t i = 0; i < input_map.size(); ++i)
    if (input_map[i]) out[i] = evaluate(*input_map[i], f);
  return out;
}

bool ScalingActionPair::identity_on(int i) const {
  if (linear) {
    const auto& g = linear->matrix;
    for (Eigen::Index k = 0; k < g.cols(); ++k)
      if (g(i, k) != (k == i ? 1.0 : 0.0)) return false;
    return true;
  }
  const auto* s = std::get_if<node::Symbol>(&state_map[i].node().value);
  return s && s->kind == SymbolKind::State && s->slot == i;
}

Subspace fixed_subspace(const LinearAction& g) {
  const auto n = g.matrix.rows();
  if (g.matrix.cols() != n) throw DimensionError("fixed_subspace: action is not square");
  Eigen::MatrixXd a = g.matrix - Eigen::MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cut = sv.size() > 0 ? 1e-10 * sv[0] : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut && sv[i] > 0.0) ++rank;
  Eigen::MatrixXd kernel = svd.matrixV().rightCols(n - rank).transpose();
  return subspace_from_span(kernel, static_cast<int>(n));
}

Subspace subspace_intersection(const std::vector<Subspace>& spaces) {
  if (spaces.empty()) throw PreconditionError("subspace_intersection: no subspaces");
  const int n = spaces.front().ambient();
  int rows = 0;
  for (const auto& s : spaces) {
    if (s.ambient() != n) throw DimensionError("subspace_intersection: ambient dimensions differ");
    rows += static_cast<int>(s.complement.rows());
  }
  if (rows == 0) return subspace_from_span(Eigen::MatrixXd::Identity(n, n), n);
  Eigen::MatrixXd stacked(rows, n);
  int r = 0;
  for (const auto& s : spaces) {
    stacked.middleRows(r, s.complement.rows()) = s.complement;
    r += static_cast<int>(s.complement.rows());
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cut = 1e-10 * std::max(sv.size() > 0 ? sv[0] : 0.0, 1.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) ++rank;
  return subspace_from_span(svd.matrixV().rightCols(n - rank).transpose(), n);
}

int action_order(const LinearAction& g, int max_order) {
  if (max_order < 1) throw PreconditionError("action_order: max_order must be at least 1");
  const auto n = g.matrix.rows();
  Eigen::MatrixXd power = g.matrix;
  for (int p = 1; p <= max_order; ++p) {
    if ((power - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().rowwise().sum().maxCoeff() <= 1e-10) return p;
    power = power * g.matrix;
    if (!power.allFinite()) break;
  }
  throw PreconditionError("action '" + g.name + "' has no finite order up to " + std::to_string(max_order));
}

ResidualReport check_equivariance(const SystemModel& m, const LinearAction& g, int samples, const Box& box, double tol,
                                  std::uint64_t seed, double shift) {
  if (g.matrix.rows() != m.dimension()) throw DimensionError("action and model dimensions differ");
  SampleSet set(m, box, samples, seed);
  const Eigen::VectorXd params = m.param_values();
  std::vector<double> residual(set.size());
  parallel_for(set.size(), [&](std::size_t k) {
    auto s = set.at(k);
    Frame now = set.frame(s);
    Eigen::VectorXd gx = g.matrix * s.x;
    Eigen::VectorXd rhs = field_at(m, with_state(now, gx));
    Eigen::VectorXd lhs;
    if (shift == 0.0) {
      lhs = g.matrix * field_at(m, now);
    } else {
      // f at t + T, keeping boxed input values and re-evaluating declared inputs
      std::map<int, double> external;
      for (int i = 0; i < m.input_count(); ++i)
        if (!m.bound_input(i) || set.box().find(m.input_name(i))) external[i] = s.u[i];
      std::vector<double> u_later(m.input_count());
      m.input_values(s.t + shift, {params.data(), static_cast<std::size_t>(params.size())}, u_later, external);
      Frame later = now;
      later.t = s.t + shift;
      later.inputs = u_later;
      lhs = g.matrix * field_at(m, later);
    }
    residual[k] = (lhs - rhs).cwiseAbs().maxCoeff();
  });
  return reduce(set, residual, tol);
}

ResidualReport check_input_equivariance(const SystemModel& m, const ScalingActionPair& pair, int samples,
                                        const Box& box, double tol, std::uint64_t seed) {
  SampleSet set(m, box, samples, seed);
  std::vector<double> residual(set.size());
  parallel_for(set.size(), [&](std::size_t k) {
    auto s = set.at(k);
    Frame f = set.frame(s);
    Eigen::VectorXd lhs = pair.jacobian(s.x, s.t, s.u) * field_at(m, f);
    Eigen::VectorXd gx = pair.apply(s.x, s.t, s.u);
    std::vector<double> ru = pair.apply_input(s.t, s.u);
    Frame g = f;
    g.states = {gx.data(), static_cast<std::size_t>(gx.size())};
    g.inputs = ru;
    residual[k] = (lhs - field_at(m, g)).cwiseAbs().maxCoeff();
  });
  return reduce(set, residual, tol);
}

Series h_symmetry_residual(const Trajectory& traj, const SpatioTemporalAction& a, double tail) {
  if (a.gamma.matrix.rows() != traj.dimension()) throw DimensionError("action and trajectory dimensions differ");
  int order = 1;
  try {
    order = action_order(a.gamma);
  } catch (const PreconditionError&) {
    order = 1;  // infinite order: only the single shift is meaningful
  }
  const double span = traj.t_end() - traj.t0();
  if (span < order * a.shift + tail)
    throw PreconditionError("trajectory horizon " + std::to_string(span) + " is shorter than p*T + tail = " +
                            std::to_string(order * a.shift + tail));
  Series r;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    double t = traj.times()[k];
    if (t + a.shift > traj.t_end()) break;
    r.t.push_back(t);
    r.v.push_back((traj.state(k) - a.gamma.matrix * traj.at(t + a.shift)).cwiseAbs().maxCoeff());
  }
  return r;
}

}  // namespace symcon
