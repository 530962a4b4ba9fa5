#pragma once

// Networks of template nodes joined by labelled edges, their balanced
// (input-equivalent) partitions and quotient systems.

#include <string>
#include <tuple>
#include <vector>

#include "symcon/model.hpp"
#include "symcon/subspace.hpp"

namespace symcon {

struct NodeTemplate {
  std::string id;
  std::vector<std::string> states;  // local component names
  std::vector<Expr> dynamics;       // over local names, globals and t
  Box domain;                       // per-instance box for local components
};

// `coupling label(j, i) = expr`: the effect of tail j on head i. Expressions
// name tail components `<comp>_<j>` and head components `<comp>_<i>`.
struct Coupling {
  std::string label;
  std::string tail_var = "j";
  std::string head_var = "i";
  std::vector<std::pair<std::string, Expr>> terms;  // head component -> contribution
};

struct NetworkNode {
  std::string id;
  std::string template_id;
};

struct Edge {
  std::string tail;
  std::string head;
  std::string label;
};

struct NetworkSpec {
  ModelDescription globals;  // name, params, inputs, delays, time domain, positivity, actions
  std::vector<NodeTemplate> templates;
  std::vector<NetworkNode> nodes;
  std::vector<Coupling> couplings;
  std::vector<Edge> edges;

  int node_index(std::string_view id) const;
  const NodeTemplate& template_of(int node) const;
  const Coupling& coupling(std::string_view label) const;

  /// Unknown templates/labels/nodes, dangling edges, and edges sharing a label
  /// whose tails or heads have different templates.
  void validate() const;
};

/// Flattened model: node order, then per-node component order. The state for
/// component c of node k is named `c_k`.
SystemModel assemble_network(const NetworkSpec& spec);

// --- partitions -----------------------------------------------------------------

struct Partition {
  std::vector<int> cluster_of;  // node -> cluster
  int count = 0;

  std::vector<std::vector<int>> clusters() const;
  bool operator==(const Partition&) const = default;
};

/// Renumber clusters by first appearance.
Partition normalized(const Partition& p);
Partition discrete_partition(int n);

// Plain colored digraph view used by the refinement algorithm.
struct ColoredGraph {
  int n = 0;
  std::vector<int> color;
  std::vector<std::tuple<int, int, int>> edges;  // tail, head, label
};

ColoredGraph colored_graph(const NetworkSpec& spec);
bool is_balanced(const ColoredGraph& g, const Partition& p);
bool is_balanced(const NetworkSpec& spec, const Partition& p);

/// Coarsest partition refining `seed` (default: the color/template partition)
/// in which same-cluster nodes have equal input counts for every
/// (label, source cluster) pair.
Partition coarsest_balanced_partition(const ColoredGraph& g, const std::optional<Partition>& seed = std::nullopt);
Partition coarsest_balanced_partition(const NetworkSpec& spec, const std::optional<Partition>& seed = std::nullopt);

std::string describe(const NetworkSpec& spec, const Partition& p);  // "{1,4} {2,3}"

/// One representative (the first node) per cluster. The representative's
/// inputs are redirected to cluster representatives; a resulting self-loop is
/// dropped when its coupling vanishes identically for equal tail and head.
/// Throws PreconditionError for an unbalanced partition.
NetworkSpec quotient_network(const NetworkSpec& spec, const Partition& p);
SystemModel quotient_system(const NetworkSpec& spec, const Partition& p);

/// Full state from a quotient state (each node copies its cluster's representative).
Eigen::VectorXd lift(const NetworkSpec& spec, const Partition& p, const Eigen::VectorXd& quotient_state);

/// Orthonormal basis of {x : x_i = x_j for i, j in one cluster}.
Subspace synchrony_subspace(const NetworkSpec& spec, const Partition& p);

// --- flow invariance -------------------------------------------------------------

struct ResidualReport {
  double max_residual = 0.0;
  double tol = 0.0;
  bool passed = true;
  int samples = 0;
  Eigen::VectorXd witness;
  double witness_t = 0.0;
};

/// Samples x in the box, projects onto M, and measures the distance of f(x, t)
/// from M.
ResidualReport check_flow_invariance(const SystemModel& m, const Subspace& s, int samples, const Box& box,
                                     double tol, std::uint64_t seed = 1);

}  // namespace symcon
