#pragma once

// Integrators for flat models (adaptive Dormand-Prince, fixed-step RK4, and RK4
// by the method of steps for delayed models) and trajectory metrics.

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "symcon/model.hpp"
#include "symcon/network.hpp"
#include "symcon/symmetry.hpp"
#include "symcon/trajectory.hpp"

namespace symcon {

// Smooth change of a parameter from `from` to `to` over [t_start, t_end]
// (cubic smoothstep, so C¹).
struct ParamRamp {
  std::string param;
  double t_start = 0.0;
  double t_end = 0.0;
  double from = 0.0;
  double to = 0.0;

  double value(double t) const;
};

struct SolverConfig {
  enum class Method { RK4, RK45 };
  Method method = Method::RK45;
  double t0 = 0.0;
  double horizon = 10.0;  // integrate over [t0, t0 + horizon]
  double dt = 0.01;       // RK4 step, and the initial guess cap for RK45
  double rtol = 1e-8;
  double atol = 1e-10;
  double dt_max = 0.0;  // 0: unbounded
  std::vector<ParamRamp> ramps;
  std::vector<double> tstops;  // extra instants the step must land on
  std::size_t max_steps = 20'000'000;

  void validate() const;
};

/// Solve ẋ = f(x, t). Steps land on input switching instants, ramp ends and
/// tstops. Throws NumericalError on step-size underflow or non-finite states.
Trajectory integrate(const SystemModel& m, const Eigen::VectorXd& x0, const SolverConfig& cfg);

// Initial history for a delayed model: x(t) for t <= t0.
using History = std::function<Eigen::VectorXd(double)>;
History constant_history(const Eigen::VectorXd& x0);

/// Method of steps with fixed-step RK4 (cfg.method is ignored). The step is
/// reduced so it divides every positive delay; the adjustment is recorded in
/// the trajectory's warnings. Past values come from the Hermite dense output.
Trajectory integrate_dde(const SystemModel& m, const History& history, const SolverConfig& cfg);

/// integrate or integrate_dde, from a constant initial state.
Trajectory simulate(const SystemModel& m, const Eigen::VectorXd& x0, const SolverConfig& cfg);

// --- metrics ----------------------------------------------------------------------

/// One node per state, for flat models.
NetworkLayout scalar_layout(const SystemModel& m);
NetworkLayout layout_of(const SystemModel& m);

/// e(t) = max over clusters and same-cluster node pairs of ‖x_i - x_j‖∞.
Series sync_error(const Trajectory& traj, const NetworkLayout& layout, const Partition& p);

/// ‖V x(t)‖₂: distance from the subspace.
Series subspace_distance(const Trajectory& traj, const Subspace& s);

/// sup over t in [t_end - T - tail, t_end - T] of ‖x(t + T) - x(t)‖∞.
double periodicity_check(const Trajectory& traj, double period, double tail);

/// ‖x_a(t) - x_b(t)‖₂ on a's grid (b through dense output).
Series distance_series(const Trajectory& a, const Trajectory& b);

struct RateEstimate {
  double rate = 0.0;  // λ̂, positive for decay
  int points = 0;     // samples used in the fit
  bool truncated = false;  // the window was cut where the series dropped below 1e-14
  double window_end = 0.0;
};

/// Least-squares slope of log v(t) over [t_from, t_to]. Points from the first
/// value below 1e-14 onward are dropped; with fewer than two points left the
/// rate is +inf (the distance is already negligible).
RateEstimate convergence_rate(const Series& s, double t_from, double t_to);

// --- fold-change detection -------------------------------------------------------

struct FcdArm {
  ScalingActionPair pair;
  std::map<std::string, Expr> inputs;  // replaces the model's input signals
  Eigen::VectorXd x0;
};

struct FcdReport {
  std::vector<std::string> shared;
  double max_shared_gap = 0.0;       // max over t of |shared_i - shared_j|
  double max_transformed_gap = 0.0;  // max over t of ‖γ_i x_i - γ_j x_j‖∞
  double input_mismatch = 0.0;       // max over the grid of |ρ_i u_i - ρ_j u_j|
  Series shared_gap;
  Trajectory traj_i, traj_j;
};

/// Solves γ_j(x) = γ_i(x0_i) for x by Newton iteration (exact for linear γ).
Eigen::VectorXd matched_initial_state(const SystemModel& m, const ScalingActionPair& gi, const ScalingActionPair& gj,
                                      const Eigen::VectorXd& x0_i, double t0 = 0.0);

/// Simulates both arms (in parallel) and compares them from `compare_from` on.
/// Preconditions, checked: ρ_i u_i = ρ_j u_j on the grid within 1e-10 and the
/// shared components are left alone by both γ and start equal. Negative
/// controls pass require_matched_inputs = false and read input_mismatch.
FcdReport fcd_experiment(const SystemModel& m, const FcdArm& arm_i, const FcdArm& arm_j,
                         const std::vector<std::string>& shared, const SolverConfig& cfg,
                         double compare_from = -std::numeric_limits<double>::infinity(),
                         bool require_matched_inputs = true);

// --- export ---------------------------------------------------------------------

/// `t,x_1,...` with 17 significant digits.
void write_csv(const std::string& path, const Trajectory& traj);
void write_series_csv(const std::string& path, const std::vector<std::pair<std::string, Series>>& columns);

struct PlotLine {
  std::string label;
  Series series;
};
/// Minimal SVG line chart; `log_y` plots log10 of positive values.
void write_svg(const std::string& path, const std::string& title, const std::vector<PlotLine>& lines, bool log_y = false);
std::vector<PlotLine> trajectory_lines(const Trajectory& traj, std::size_t max_lines = 16);

}  // namespace symcon
