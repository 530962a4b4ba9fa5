#include "symcon/network.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "symcon/parallel.hpp"

namespace symcon {

int NetworkSpec::node_index(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

const NodeTemplate& NetworkSpec::template_of(int node) const {
  for (const auto& t : templates)
    if (t.id == nodes[node].template_id) return t;
  throw ModelError("node '" + nodes[node].id + "' uses unknown template '" + nodes[node].template_id + "'");
}

const Coupling& NetworkSpec::coupling(std::string_view label) const {
  for (const auto& c : couplings)
    if (c.label == label) return c;
  throw ModelError("unknown coupling label '" + std::string(label) + "'");
}

void NetworkSpec::validate() const {
  std::set<std::string> ids;
  for (const auto& t : templates) {
    if (!ids.insert(t.id).second) throw ModelError("template '" + t.id + "' is declared twice");
    if (t.states.size() != t.dynamics.size())
      throw ModelError("template '" + t.id + "' has " + std::to_string(t.states.size()) + " states but " +
                       std::to_string(t.dynamics.size()) + " dynamics equations");
  }
  ids.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!ids.insert(nodes[i].id).second) throw ModelError("node '" + nodes[i].id + "' is declared twice");
    template_of(static_cast<int>(i));
  }
  ids.clear();
  for (const auto& c : couplings) {
    if (!ids.insert(c.label).second) throw ModelError("coupling '" + c.label + "' is declared twice");
    if (c.tail_var == c.head_var) throw ModelError("coupling '" + c.label + "' uses the same name for tail and head");
  }

  std::map<std::string, std::pair<std::string, std::string>> label_ends;  // label -> (tail template, head template)
  for (const auto& e : edges) {
    int tail = node_index(e.tail), head = node_index(e.head);
    if (tail < 0) throw ModelError("edge " + e.tail + " -> " + e.head + ": unknown node '" + e.tail + "'");
    if (head < 0) throw ModelError("edge " + e.tail + " -> " + e.head + ": unknown node '" + e.head + "'");
    const Coupling& c = coupling(e.label);
    const NodeTemplate& ht = template_of(head);
    for (const auto& [comp, expr] : c.terms)
      if (std::find(ht.states.begin(), ht.states.end(), comp) == ht.states.end())
        throw ModelError("coupling '" + c.label + "' drives component '" + comp + "', which node '" + e.head +
                         "' does not have");
    auto ends = std::make_pair(nodes[tail].template_id, nodes[head].template_id);
    auto [it, fresh] = label_ends.emplace(e.label, ends);
    if (!fresh && it->second != ends)
      throw ModelError("edges labelled '" + e.label + "' join inequivalent nodes: " + it->second.first + " -> " +
                       it->second.second + " versus " + ends.first + " -> " + ends.second + " (edge " + e.tail +
                       " -> " + e.head + ")");
  }
}

namespace {

// Local component `x` or `x[2]` of node `id` becomes `x_id` / `x_id[2]`.
std::string flat_component(const std::string& local, const std::string& id) {
  auto bracket = local.find('[');
  if (bracket == std::string::npos) return local + "_" + id;
  return local.substr(0, bracket) + "_" + id + local.substr(bracket);
}

bool has_state(const NodeTemplate& t, const std::string& component) {
  return std::find(t.states.begin(), t.states.end(), component) != t.states.end();
}

// Renames the local states of one node.
Expr localize(const Expr& e, const NodeTemplate& t, const std::string& id) {
  return substitute(e, {[&](const node::Symbol& s) -> std::optional<Expr> {
                          if (s.kind == SymbolKind::Time || !has_state(t, component_name(s))) return std::nullopt;
                          return symbol(s.name + "_" + id, s.index);
                        },
                        [&](const node::Delayed& d) -> std::optional<Expr> {
                          if (!has_state(t, component_name(d))) return std::nullopt;
                          return delayed(d.name + "_" + id, d.index, d.delay);
                        }});
}

// Renames `<comp>_<tail_var>` / `<comp>_<head_var>` references of a coupling.
Expr instantiate(const Expr& e, const Coupling& c, const NodeTemplate& tail_t, const std::string& tail_id,
                 const NodeTemplate& head_t, const std::string& head_id) {
  auto resolve = [&](const std::string& name, int index) -> std::optional<std::string> {
    for (const auto& [var, t, id] : {std::tuple{c.tail_var, &tail_t, tail_id}, std::tuple{c.head_var, &head_t, head_id}}) {
      std::string suffix = "_" + var;
      if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        std::string base = name.substr(0, name.size() - suffix.size());
        if (has_state(*t, component_name(base, index))) return base + "_" + id;
      }
    }
    return std::nullopt;
  };
  return substitute(e, {[&](const node::Symbol& s) -> std::optional<Expr> {
                          if (s.kind == SymbolKind::Time) return std::nullopt;
                          if (auto n = resolve(s.name, s.index)) return symbol(*n, s.index);
                          return std::nullopt;
                        },
                        [&](const node::Delayed& d) -> std::optional<Expr> {
                          if (auto n = resolve(d.name, d.index)) return delayed(*n, d.index, d.delay);
                          throw ModelError("coupling '" + c.label + "': delayed reference '" + component_name(d) +
                                           "' is not a tail or head component");
                        }});
}

}  // namespace

SystemModel assemble_network(const NetworkSpec& spec) {
  spec.validate();
  ModelDescription d = spec.globals;
  d.states.clear();
  d.field.clear();
  NetworkLayout layout;
  std::map<std::string, int> offset_of;
  for (std::size_t k = 0; k < spec.nodes.size(); ++k) {
    const auto& node = spec.nodes[k];
    const NodeTemplate& t = spec.template_of(static_cast<int>(k));
    layout.nodes.push_back({node.id, t.id, static_cast<int>(d.states.size()), static_cast<int>(t.states.size())});
    offset_of[node.id] = static_cast<int>(d.states.size());
    for (std::size_t c = 0; c < t.states.size(); ++c) {
      d.states.push_back(flat_component(t.states[c], node.id));
      d.field.push_back(localize(t.dynamics[c], t, node.id));
      if (auto r = t.domain.find(t.states[c])) d.domain.set(d.states.back(), *r);
    }
  }
  for (const auto& e : spec.edges) {
    int tail = spec.node_index(e.tail), head = spec.node_index(e.head);
    const NodeTemplate& tt = spec.template_of(tail);
    const NodeTemplate& ht = spec.template_of(head);
    const Coupling& c = spec.coupling(e.label);
    for (const auto& [comp, expr] : c.terms) {
      int local = static_cast<int>(std::find(ht.states.begin(), ht.states.end(), comp) - ht.states.begin());
      Expr term = instantiate(expr, c, tt, e.tail, ht, e.head);
      Expr& target = d.field[offset_of[e.head] + local];
      target = add(target, term);
    }
  }
  d.layout = layout;
  return SystemModel(std::move(d));
}

// --- partitions -------------------------------------------------------------------

std::vector<std::vector<int>> Partition::clusters() const {
  std::vector<std::vector<int>> out(count);
  for (std::size_t i = 0; i < cluster_of.size(); ++i) out[cluster_of[i]].push_back(static_cast<int>(i));
  return out;
}

Partition normalized(const Partition& p) {
  Partition out;
  std::map<int, int> renumber;
  for (int c : p.cluster_of) {
    auto [it, fresh] = renumber.emplace(c, static_cast<int>(renumber.size()));
    out.cluster_of.push_back(it->second);
  }
  out.count = static_cast<int>(renumber.size());
  return out;
}

Partition discrete_partition(int n) {
  Partition p;
  for (int i = 0; i < n; ++i) p.cluster_of.push_back(i);
  p.count = n;
  return p;
}

ColoredGraph colored_graph(const NetworkSpec& spec) {
  spec.validate();
  ColoredGraph g;
  g.n = static_cast<int>(spec.nodes.size());
  std::map<std::string, int> tmpl, label;
  for (const auto& t : spec.templates) tmpl.emplace(t.id, static_cast<int>(tmpl.size()));
  for (const auto& c : spec.couplings) label.emplace(c.label, static_cast<int>(label.size()));
  for (const auto& n : spec.nodes) g.color.push_back(tmpl.at(n.template_id));
  for (const auto& e : spec.edges)
    g.edges.emplace_back(spec.node_index(e.tail), spec.node_index(e.head), label.at(e.label));
  return g;
}

namespace {

using Signature = std::vector<std::pair<int, int>>;  // sorted (label, tail cluster), with repetition

std::vector<Signature> input_signatures(const ColoredGraph& g, const Partition& p) {
  std::vector<Signature> sig(g.n);
  for (const auto& [tail, head, label] : g.edges) sig[head].emplace_back(label, p.cluster_of[tail]);
  for (auto& s : sig) std::sort(s.begin(), s.end());
  return sig;
}

void check_partition(const ColoredGraph& g, const Partition& p) {
  if (static_cast<int>(p.cluster_of.size()) != g.n)
    throw PreconditionError("partition covers " + std::to_string(p.cluster_of.size()) + " nodes, network has " +
                            std::to_string(g.n));
  for (int c : p.cluster_of)
    if (c < 0 || c >= p.count) throw PreconditionError("partition has an out-of-range cluster id");
}

}  // namespace

bool is_balanced(const ColoredGraph& g, const Partition& p) {
  check_partition(g, p);
  auto sig = input_signatures(g, p);
  std::vector<int> first(p.count, -1);
  for (int v = 0; v < g.n; ++v) {
    int c = p.cluster_of[v];
    if (first[c] < 0) {
      first[c] = v;
      continue;
    }
    if (g.color[v] != g.color[first[c]] || sig[v] != sig[first[c]]) return false;
  }
  return true;
}

bool is_balanced(const NetworkSpec& spec, const Partition& p) { return is_balanced(colored_graph(spec), p); }

Partition coarsest_balanced_partition(const ColoredGraph& g, const std::optional<Partition>& seed) {
  Partition p;
  if (seed) {
    check_partition(g, *seed);
    // Refine the seed by color so clusters never mix node types.
    std::map<std::pair<int, int>, int> ids;
    for (int v = 0; v < g.n; ++v) {
      auto [it, fresh] = ids.emplace(std::make_pair(seed->cluster_of[v], g.color[v]), static_cast<int>(ids.size()));
      p.cluster_of.push_back(it->second);
    }
    p.count = static_cast<int>(ids.size());
  } else {
    p.cluster_of = g.color;
    p.count = g.n == 0 ? 0 : *std::max_element(g.color.begin(), g.color.end()) + 1;
  }
  p = normalized(p);
  while (true) {
    auto sig = input_signatures(g, p);
    std::map<std::pair<int, Signature>, int> ids;
    Partition next;
    for (int v = 0; v < g.n; ++v) {
      auto [it, fresh] = ids.emplace(std::make_pair(p.cluster_of[v], sig[v]), static_cast<int>(ids.size()));
      next.cluster_of.push_back(it->second);
    }
    next.count = static_cast<int>(ids.size());
    bool stable = next.count == p.count;
    p = std::move(next);
    if (stable) break;
  }
  return normalized(p);
}

Partition coarsest_balanced_partition(const NetworkSpec& spec, const std::optional<Partition>& seed) {
  return coarsest_balanced_partition(colored_graph(spec), seed);
}

std::string describe(const NetworkSpec& spec, const Partition& p) {
  std::string out;
  for (const auto& cluster : p.clusters()) {
    if (!out.empty()) out += ' ';
    out += '{';
    for (std::size_t i = 0; i < cluster.size(); ++i) {
      if (i) out += ',';
      out += spec.nodes[cluster[i]].id;
    }
    out += '}';
  }
  return out;
}

// --- quotients ------------------------------------------------------------------------

namespace {

// Does the coupling vanish whenever tail and head are the same node? Checked
// symbolically first, then at random points.
bool vanishes_on_diagonal(const NetworkSpec& spec, const Coupling& c, const NodeTemplate& t) {
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> val(0.2, 3.0);
  for (const auto& [comp, expr] : c.terms) {
    Expr same = simplify(instantiate(expr, c, t, "n", t, "n"));
    if (same.is_number(0.0)) continue;
    for (int trial = 0; trial < 8; ++trial) {
      Environment env;
      for (const auto& s : t.states) env.set(flat_component(s, "n"), val(rng));
      for (const auto& [k, v] : spec.globals.params) env.set(k, v);
      for (const auto& in : spec.globals.inputs) env.set(in.name, val(rng));
      env.set_time(val(rng) * 10);
      std::map<std::string, double, std::less<>> history;
      env.set_delay_lookup([&](std::string_view comp_name, std::string_view delay) {
        std::string key = std::string(comp_name) + "@" + std::string(delay);
        auto it = history.find(key);
        if (it == history.end()) it = history.emplace(key, val(rng)).first;
        return it->second;
      });
      try {
        if (std::abs(evaluate(same, env)) > 1e-12) return false;
      } catch (const Error&) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

NetworkSpec quotient_network(const NetworkSpec& spec, const Partition& p) {
  ColoredGraph g = colored_graph(spec);
  if (!is_balanced(g, p))
    throw PreconditionError("partition " + describe(spec, p) + " is not balanced, so it has no quotient");
  auto clusters = p.clusters();
  for (const auto& cl : clusters)
    if (cl.empty()) throw PreconditionError("partition has an empty cluster");

  NetworkSpec q;
  q.globals = spec.globals;
  q.globals.actions.clear();
  q.templates = spec.templates;
  q.couplings = spec.couplings;
  std::vector<int> rep(p.count);
  for (int c = 0; c < p.count; ++c) {
    rep[c] = clusters[c].front();
    q.nodes.push_back(spec.nodes[rep[c]]);
  }
  std::map<std::string, bool> drop_cache;
  for (const auto& e : spec.edges) {
    int head = spec.node_index(e.head);
    int hc = p.cluster_of[head];
    if (rep[hc] != head) continue;
    int tc = p.cluster_of[spec.node_index(e.tail)];
    Edge ne{spec.nodes[rep[tc]].id, e.head, e.label};
    if (tc == hc) {
      auto it = drop_cache.find(e.label);
      if (it == drop_cache.end())
        it = drop_cache.emplace(e.label, vanishes_on_diagonal(spec, spec.coupling(e.label), spec.template_of(head))).first;
      if (it->second) continue;
    }
    q.edges.push_back(ne);
  }
  return q;
}

SystemModel quotient_system(const NetworkSpec& spec, const Partition& p) {
  return assemble_network(quotient_network(spec, p));
}

Eigen::VectorXd lift(const NetworkSpec& spec, const Partition& p, const Eigen::VectorXd& quotient_state) {
  std::vector<int> q_offset(p.count, -1);
  auto clusters = p.clusters();
  int off = 0;
  for (int c = 0; c < p.count; ++c) {
    q_offset[c] = off;
    off += static_cast<int>(spec.template_of(clusters[c].front()).states.size());
  }
  if (off != quotient_state.size()) throw DimensionError("quotient state has the wrong dimension");
  std::vector<double> full;
  for (std::size_t k = 0; k < spec.nodes.size(); ++k) {
    int dim = static_cast<int>(spec.template_of(static_cast<int>(k)).states.size());
    for (int d = 0; d < dim; ++d) full.push_back(quotient_state[q_offset[p.cluster_of[k]] + d]);
  }
  return Eigen::Map<Eigen::VectorXd>(full.data(), static_cast<Eigen::Index>(full.size()));
}

Subspace synchrony_subspace(const NetworkSpec& spec, const Partition& p) {
  std::vector<int> offset, dim;
  int n = 0;
  for (std::size_t k = 0; k < spec.nodes.size(); ++k) {
    offset.push_back(n);
    dim.push_back(static_cast<int>(spec.template_of(static_cast<int>(k)).states.size()));
    n += dim.back();
  }
  std::vector<Eigen::VectorXd> rows;
  for (const auto& cl : p.clusters()) {
    for (int d = 0; d < dim[cl.front()]; ++d) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
      for (int k : cl) r[offset[k] + d] = 1.0;
      rows.push_back(r.normalized());
    }
  }
  Eigen::MatrixXd b(rows.size(), n);
  for (std::size_t i = 0; i < rows.size(); ++i) b.row(i) = rows[i].transpose();
  return subspace_from_span(b, n);
}

ResidualReport check_flow_invariance(const SystemModel& m, const Subspace& s, int samples, const Box& box, double tol,
                                     std::uint64_t seed) {
  if (s.ambient() != m.dimension()) throw DimensionError("subspace and model dimensions differ");
  SampleSet set(m, box, samples, seed);
  Eigen::MatrixXd projector = s.basis.transpose() * s.basis;
  std::vector<double> residual(set.size());
  parallel_for(set.size(), [&](std::size_t k) {
    auto sample = set.at(k);
    sample.x = projector * sample.x;
    Frame f = set.frame(sample);
    Eigen::VectorXd fx(m.dimension());
    for (int i = 0; i < m.dimension(); ++i) fx[i] = evaluate(m.field()[i], f);
    residual[k] = s.complement.rows() == 0 ? 0.0 : (s.complement * fx).norm();
  });
  ResidualReport r;
  r.tol = tol;
  r.samples = static_cast<int>(set.size());
  std::size_t arg = 0;
  for (std::size_t k = 0; k < residual.size(); ++k)
    if (residual[k] > residual[arg]) arg = k;
  auto w = set.at(arg);
  r.max_residual = residual.empty() ? 0.0 : residual[arg];
  r.witness = projector * w.x;
  r.witness_t = w.t;
  r.passed = r.max_residual <= tol;
  return r;
}

}  // namespace symcon
