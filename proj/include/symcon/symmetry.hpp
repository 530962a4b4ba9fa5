#pragma once

// Symmetry actions on flat models, their fixed subspaces, and numerical
// equivariance checks.

#include <optional>
#include <string>
#include <vector>

#include "symcon/model.hpp"
#include "symcon/network.hpp"
#include "symcon/subspace.hpp"
#include "symcon/trajectory.hpp"

namespace symcon {

struct LinearAction {
  std::string name;
  Eigen::MatrixXd matrix;
  bool permutation = false;  // permutes whole node blocks
  std::optional<int> order;
};

/// Node permutation in cycle notation: the state of node a moves to node b for
/// a cycle (a b ...). Nodes in one cycle must have the same dimension.
LinearAction permutation_action(const SystemModel& m, const std::vector<std::vector<std::string>>& cycles,
                                std::string name = "");

// State action γ (linear, or an expression per state component) paired with an
// input action ρ. Maps are bound against the model they were built from and are
// evaluated with that model's parameter values, so one declared action yields
// different scalings under different parameter sets.
struct ScalingActionPair {
  std::string label;
  std::optional<LinearAction> linear;
  std::vector<Expr> state_map;                // one per state when nonlinear; missing entries are identity
  std::vector<std::optional<Expr>> input_map;  // per input slot; nullopt is identity
  Eigen::VectorXd params;

  /// γ(x) at time t with inputs u (maps may mention inputs and t).
  Eigen::VectorXd apply(const Eigen::VectorXd& x, double t, std::span<const double> u) const;
  /// ∂γ/∂x.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, double t, std::span<const double> u) const;
  /// ρ(u).
  std::vector<double> apply_input(double t, std::span<const double> u) const;
  /// True when γ leaves component i untouched.
  bool identity_on(int i) const;

 private:
  friend ScalingActionPair scaling_pair(const SystemModel&, const ActionDecl&);
  std::vector<std::vector<Expr>> derivative_;  // ∂γ_i/∂x_j, nonlinear case
};

struct SpatioTemporalAction {
  LinearAction gamma;
  double shift = 0.0;  // T
};

const ActionDecl& find_action(const SystemModel& m, std::string_view name);
/// Permute or linear declarations.
LinearAction linear_action(const SystemModel& m, const ActionDecl& d);
/// Any declaration; permute/linear actions get identity input maps unless declared.
ScalingActionPair scaling_pair(const SystemModel& m, const ActionDecl& d);
/// Requires a declared shift.
SpatioTemporalAction spatio_temporal_action(const SystemModel& m, const ActionDecl& d);

/// M = ker(γ - I). Singular values below 1e-10·σ_max count as zero.
Subspace fixed_subspace(const LinearAction& g);

/// Intersection via the stacked complements. `trivial()` flags {0}.
Subspace subspace_intersection(const std::vector<Subspace>& spaces);

/// Smallest p <= max_order with ‖γ^p - I‖∞ <= 1e-10. Throws PreconditionError otherwise.
int action_order(const LinearAction& g, int max_order = 64);

/// max ‖γ f(x, t + shift) - f(γx, t)‖∞ over the sample set.
ResidualReport check_equivariance(const SystemModel& m, const LinearAction& g, int samples, const Box& box, double tol,
                                  std::uint64_t seed = 1, double shift = 0.0);

/// max ‖(∂γ/∂x) f(x, u, t) - f(γ(x), ρ(u), t)‖∞ over sampled (x, u, t).
ResidualReport check_input_equivariance(const SystemModel& m, const ScalingActionPair& pair, int samples,
                                        const Box& box, double tol, std::uint64_t seed = 1);

/// r(t) = ‖x(t) - γ x(t + T)‖∞ on the stored grid points with t + T inside the
/// horizon. Requires a horizon of at least p_γ·T + tail.
Series h_symmetry_residual(const Trajectory& traj, const SpatioTemporalAction& a, double tail = 0.0);

}  // namespace symcon
