#include "symcon/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "symcon/parallel.hpp"

namespace symcon {

double ParamRamp::value(double t) const {
  if (t <= t_start) return from;
  if (t >= t_end) return to;
  double s = (t - t_start) / (t_end - t_start);
  return from + (to - from) * s * s * (3 - 2 * s);
}

void SolverConfig::validate() const {
  if (!(horizon > 0)) throw PreconditionError("solver: horizon must be positive");
  if (!(dt > 0)) throw PreconditionError("solver: dt must be positive");
  if (!(rtol > 0) || !(atol > 0)) throw PreconditionError("solver: rtol and atol must be positive");
  if (dt_max < 0) throw PreconditionError("solver: dt_max must be >= 0");
  for (const auto& r : ramps)
    if (!(r.t_end > r.t_start)) throw PreconditionError("solver: ramp of '" + r.param + "' has an empty interval");
}

namespace {

// f(t, x) with ramped parameters. Not thread-safe; one per integration.
class FieldEval {
 public:
  FieldEval(const SystemModel& m, const std::vector<ParamRamp>& ramps)
      : m_(m), params_(m.param_values()), inputs_(m.input_count()), delays_(m.delay_values()) {
    for (int i = 0; i < m.input_count(); ++i)
      if (m.input_is_external(i))
        throw PreconditionError("input '" + m.input_name(i) + "' is external; give it a signal before simulating");
    for (const auto& r : ramps) {
      int k = m.param_index(r.param);
      if (k < 0) throw ModelError("ramp of unknown parameter '" + r.param + "'");
      ramps_.emplace_back(k, r);
    }
  }

  void operator()(double t, const Eigen::VectorXd& x, Eigen::VectorXd& out, const DelayLookup* history = nullptr) {
    for (const auto& [k, r] : ramps_) params_[k] = r.value(t);
    std::span<const double> p{params_.data(), static_cast<std::size_t>(params_.size())};
    m_.input_values(t, p, inputs_);
    Frame f{t, {x.data(), static_cast<std::size_t>(x.size())}, p, inputs_, delays_, history};
    out.resize(m_.dimension());
    for (int i = 0; i < m_.dimension(); ++i) out[i] = evaluate(m_.field()[i], f);
  }

 private:
  const SystemModel& m_;
  Eigen::VectorXd params_;
  std::vector<double> inputs_;
  std::vector<double> delays_;
  std::vector<std::pair<int, ParamRamp>> ramps_;
};

std::vector<double> stop_times(const SystemModel& m, const SolverConfig& cfg) {
  const double tf = cfg.t0 + cfg.horizon;
  std::vector<double> s;
  for (double b : m.breakpoints()) s.push_back(b);
  for (const auto& r : cfg.ramps) {
    s.push_back(r.t_start);
    s.push_back(r.t_end);
  }
  for (double b : cfg.tstops) s.push_back(b);
  std::vector<double> out;
  for (double v : s)
    if (v > cfg.t0 && v < tf) out.push_back(v);
  out.push_back(tf);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void check_finite(const Eigen::VectorXd& x, double t, const Eigen::VectorXd& last, double t_last) {
  if (x.allFinite()) return;
  std::ostringstream os;
  os << "non-finite state at t = " << t << "; last good state at t = " << t_last << ": " << last.transpose();
  throw NumericalError(os.str());
}

// Just left of a stop, so a step that ends on a switching instant sees the
// pre-switch field.
double left_of(double t) { return std::nextafter(t, -std::numeric_limits<double>::infinity()); }

// Dormand-Prince 5(4) tableau and the coefficients of its quartic continuous extension.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;
constexpr double P[7][4] = {
    {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0},
    {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0},
    {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0},
    {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0},
    {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0}};

double scaled_rms(const Eigen::VectorXd& v, const Eigen::VectorXd& scale) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() / scale.array()).square().mean());
}

Trajectory integrate_rk45(const SystemModel& m, const Eigen::VectorXd& x0, const SolverConfig& cfg) {
  FieldEval f(m, cfg.ramps);
  const int n = m.dimension();
  const double tf = cfg.t0 + cfg.horizon;
  const auto stops = stop_times(m, cfg);
  Trajectory traj(m.state_names(), cfg.t0, x0);
  traj.model_hash = m.hash_hex();

  double t = cfg.t0;
  Eigen::VectorXd x = x0, k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  f(t, x, k1);
  check_finite(k1, t, x, t);

  // initial step (Hairer, Norsett & Wanner's heuristic)
  Eigen::VectorXd sc = cfg.atol + cfg.rtol * x.cwiseAbs().array();
  double d0 = scaled_rms(x, sc), d1 = scaled_rms(k1, sc);
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h = std::min(h, cfg.horizon);
  {
    Eigen::VectorXd x1 = x + h * k1, f1(n);
    f(t + h, x1, f1);
    double d2 = scaled_rms(f1 - k1, sc) / h;
    double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min(100 * h, h1);
  }
  if (cfg.dt_max > 0) h = std::min(h, cfg.dt_max);

  std::size_t stop_idx = 0, steps = 0;
  bool rejected_last = false;
  while (t < tf) {
    while (stop_idx < stops.size() && stops[stop_idx] <= t) ++stop_idx;
    const double next_stop = stops[stop_idx];
    bool hits = false;
    if (t + h >= next_stop - 1e-12 * std::max(1.0, std::abs(next_stop))) {
      h = next_stop - t;
      hits = true;
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os << "step size underflow at t = " << t << ", state " << x.transpose();
      throw NumericalError(os.str());
    }
    if (++steps > cfg.max_steps) throw NumericalError("step limit reached at t = " + std::to_string(t));

    const double t_new = hits ? next_stop : t + h;
    f(t + c2 * h, x + h * (a21 * k1), k2);
    f(t + c3 * h, x + h * (a31 * k1 + a32 * k2), k3);
    f(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3), k4);
    f(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), k5);
    f(hits ? left_of(t_new) : t_new, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), k6);
    Eigen::VectorXd x_new = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(hits ? left_of(t_new) : t_new, x_new, k7);
    Eigen::VectorXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    sc = cfg.atol + cfg.rtol * x.cwiseAbs().cwiseMax(x_new.cwiseAbs()).array();
    double en = scaled_rms(err, sc);
    if (!x_new.allFinite() || !std::isfinite(en)) {
      en = std::numeric_limits<double>::infinity();
    }

    if (en <= 1.0) {
      Eigen::MatrixXd K(n, 7);
      K << k1, k2, k3, k4, k5, k6, k7;
      Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, 4);
      for (int s = 0; s < 7; ++s)
        for (int c = 0; c < 4; ++c)
          if (P[s][c] != 0.0) q.col(c) += P[s][c] * K.col(s);
      traj.append(t_new, x_new, std::move(q));
      t = t_new;
      x = x_new;
      if (hits)
        f(t, x, k1);
      else
        k1 = k7;
      check_finite(k1, t, x, t);
      double fac = en == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 10.0);
      if (rejected_last) fac = std::min(fac, 1.0);
      // a step cut short by a stop says little about the right size
      if (!hits) h *= fac;
      rejected_last = false;
    } else {
      if (!x_new.allFinite() && h < 1e-10) check_finite(x_new, t_new, x, t);
      double fac = std::isfinite(en) ? std::clamp(0.9 * std::pow(en, -0.2), 0.2, 1.0) : 0.1;
      h *= fac;
      rejected_last = true;
    }
    if (cfg.dt_max > 0) h = std::min(h, cfg.dt_max);
  }
  return traj;
}

// One RK4 step from (t, x) with slope k1 at t; returns x(t + h) and fills the
// slope at the right end (left limit when `at_stop`).
template <class Eval>
Eigen::VectorXd rk4_step(Eval& f, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& k1, double h, bool at_stop,
                         Eigen::VectorXd& f_end) {
  const auto n = x.size();
  Eigen::VectorXd k2(n), k3(n), k4(n);
  f(t + 0.5 * h, x + 0.5 * h * k1, k2);
  f(t + 0.5 * h, x + 0.5 * h * k2, k3);
  const double t_end = at_stop ? left_of(t + h) : t + h;
  f(t_end, x + h * k3, k4);
  Eigen::VectorXd x_new = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  f(t_end, x_new, f_end);
  return x_new;
}

// Fixed-step loop shared by the ODE and DDE integrators.
template <class Eval>
void fixed_step_loop(Eval& f, Trajectory& traj, const std::vector<double>& stops, const SolverConfig& cfg, double dt) {
  const double tf = cfg.t0 + cfg.horizon;
  double t = cfg.t0;
  Eigen::VectorXd x = traj.state(0), k1, f_end;
  f(t, x, k1);
  check_finite(k1, t, x, t);
  std::size_t stop_idx = 0, steps = 0;
  long long k = 0;  // steps since the last stop, so the grid does not drift
  double base = t;
  while (t < tf) {
    while (stop_idx < stops.size() && stops[stop_idx] <= t) ++stop_idx;
    const double next_stop = stops[stop_idx];
    double t_new = base + static_cast<double>(k + 1) * dt;
    bool hits = false;
    if (t_new >= next_stop - 1e-9 * dt) {
      t_new = next_stop;
      hits = true;
    }
    if (++steps > cfg.max_steps) throw NumericalError("step limit reached at t = " + std::to_string(t));
    const double h = t_new - t;
    Eigen::VectorXd x_new = rk4_step(f, t, x, k1, h, hits, f_end);
    check_finite(x_new, t_new, x, t);
    traj.append(t_new, x_new, hermite_coefficients(x, k1, x_new, f_end, h));
    t = t_new;
    x = x_new;
    if (hits) {
      f(t, x, k1);
      base = t;
      k = 0;
    } else {
      k1 = f_end;
      ++k;
    }
  }
}

Trajectory integrate_rk4(const SystemModel& m, const Eigen::VectorXd& x0, const SolverConfig& cfg) {
  FieldEval eval(m, cfg.ramps);
  Trajectory traj(m.state_names(), cfg.t0, x0);
  traj.model_hash = m.hash_hex();
  auto f = [&](double t, const Eigen::VectorXd& x, Eigen::VectorXd& out) { eval(t, x, out); };
  fixed_step_loop(f, traj, stop_times(m, cfg), cfg, cfg.dt);
  return traj;
}

// Past states from the history function or the trajectory built so far.
class TrajectoryHistory : public DelayLookup {
 public:
  TrajectoryHistory(const Trajectory& traj, const History& history, double t0)
      : traj_(traj), history_(history), t0_(t0) {}

  double value(int slot, double delay, double t) const override {
    const double s = t - delay;
    if (s <= t0_) return history_(s)[slot];
    if (s > traj_.t_end() + 1e-12 * std::max(1.0, std::abs(s)))
      throw NumericalError("delayed value at t = " + std::to_string(s) + " is not yet computed");
    return traj_.at(std::min(s, traj_.t_end()), slot);
  }

 private:
  const Trajectory& traj_;
  const History& history_;
  double t0_;
};

// Largest step <= dt dividing every positive delay, if one exists with a modest multiplier.
std::optional<double> commensurate_step(const std::vector<double>& delays, double dt) {
  std::vector<double> pos;
  for (double d : delays)
    if (d > 0) pos.push_back(d);
  if (pos.empty()) return dt;
  const double tau = *std::min_element(pos.begin(), pos.end());
  const long long start = std::max(1LL, static_cast<long long>(std::ceil(tau / dt - 1e-9)));
  for (long long k = start; k < start * 1000 + 1000; ++k) {
    const double h = tau / static_cast<double>(k);
    bool ok = true;
    for (double d : pos) {
      const double r = d / h;
      if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r)) {
        ok = false;
        break;
      }
    }
    if (ok) return h;
  }
  return std::nullopt;
}

}  // namespace

Trajectory integrate(const SystemModel& m, const Eigen::VectorXd& x0, const SolverConfig& cfg) {
  cfg.validate();
  if (x0.size() != m.dimension())
    throw DimensionError("initial state has " + std::to_string(x0.size()) + " entries, model has " +
                         std::to_string(m.dimension()) + " states");
  if (m.delayed()) throw PreconditionError("model '" + m.name() + "' has delays; use the delay integrator");
  return cfg.method == SolverConfig::Method::RK45 ? integrate_rk45(m, x0, cfg) : integrate_rk4(m, x0, cfg);
}

History constant_history(const Eigen::VectorXd& x0) {
  return [x0](double) { return x0; };
}

Trajectory integrate_dde(const SystemModel& m, const History& history, const SolverConfig& cfg) {
  cfg.validate();
  Eigen::VectorXd x0 = history(cfg.t0);
  if (x0.size() != m.dimension()) throw DimensionError("history has the wrong dimension");
  Trajectory traj(m.state_names(), cfg.t0, x0);
  traj.model_hash = m.hash_hex();

  auto delays = m.delay_values();
  double dt = cfg.dt;
  if (auto h = commensurate_step(delays, cfg.dt)) {
    if (std::abs(*h - cfg.dt) > 1e-15 * cfg.dt) {
      std::ostringstream os;
      os << std::setprecision(17) << "dt adjusted from " << cfg.dt << " to " << *h << " to divide the delays";
      traj.warnings.push_back(os.str());
    }
    dt = *h;
  } else {
    double tau = std::numeric_limits<double>::infinity();
    for (double d : delays)
      if (d > 0) tau = std::min(tau, d);
    dt = std::min(cfg.dt, tau);
    traj.warnings.push_back("delays are not commensurate; using dt = " + std::to_string(dt));
  }

  FieldEval eval(m, cfg.ramps);
  TrajectoryHistory lookup(traj, history, cfg.t0);
  auto f = [&](double t, const Eigen::VectorXd& x, Eigen::VectorXd& out) { eval(t, x, out, &lookup); };
  fixed_step_loop(f, traj, stop_times(m, cfg), cfg, dt);
  return traj;
}

Trajectory simulate(const SystemModel& m, const Eigen::VectorXd& x0, const SolverConfig& cfg) {
  if (m.delayed()) return integrate_dde(m, constant_history(x0), cfg);
  return integrate(m, x0, cfg);
}

// --- metrics ------------------------------------------------------------------------

NetworkLayout scalar_layout(const SystemModel& m) {
  NetworkLayout l;
  for (int i = 0; i < m.dimension(); ++i) l.nodes.push_back({std::to_string(i + 1), "", i, 1});
  return l;
}

NetworkLayout layout_of(const SystemModel& m) { return m.layout() ? *m.layout() : scalar_layout(m); }

Series sync_error(const Trajectory& traj, const NetworkLayout& layout, const Partition& p) {
  if (p.cluster_of.size() != layout.nodes.size()) throw DimensionError("partition and network sizes differ");
  if (layout.state_count() != traj.dimension()) throw DimensionError("layout and trajectory sizes differ");
  auto clusters = p.clusters();
  Series s;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& x = traj.state(k);
    double e = 0.0;
    for (const auto& members : clusters) {
      if (members.size() < 2) continue;
      const auto& first = layout.nodes[members.front()];
      for (int c = 0; c < first.dim; ++c) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int node : members) {
          const auto& info = layout.nodes[node];
          if (info.dim != first.dim) throw DimensionError("cluster mixes nodes of different sizes");
          lo = std::min(lo, x[info.offset + c]);
          hi = std::max(hi, x[info.offset + c]);
        }
        e = std::max(e, hi - lo);
      }
    }
    s.t.push_back(traj.times()[k]);
    s.v.push_back(e);
  }
  return s;
}

Series subspace_distance(const Trajectory& traj, const Subspace& sub) {
  if (sub.ambient() != traj.dimension()) throw DimensionError("subspace and trajectory sizes differ");
  Series s;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    s.t.push_back(traj.times()[k]);
    s.v.push_back(sub.complement.rows() ? (sub.complement * traj.state(k)).norm() : 0.0);
  }
  return s;
}

double periodicity_check(const Trajectory& traj, double period, double tail) {
  if (!(period > 0)) throw PreconditionError("periodicity_check: period must be positive");
  if (tail < 0) throw PreconditionError("periodicity_check: tail must be >= 0");
  if (traj.t_end() - traj.t0() < 2 * period + tail)
    throw PreconditionError("periodicity_check: horizon " + std::to_string(traj.t_end() - traj.t0()) +
                            " is shorter than 2T + tail = " + std::to_string(2 * period + tail));
  const double hi = traj.t_end() - period, lo = hi - tail;
  std::vector<double> ts;
  for (double t : traj.times())
    if (t >= lo && t <= hi) ts.push_back(t);
  const int uniform = 400;
  for (int k = 0; k <= uniform; ++k) ts.push_back(lo + (hi - lo) * k / uniform);
  double r = 0.0;
  for (double t : ts) r = std::max(r, (traj.at(std::min(t + period, traj.t_end())) - traj.at(t)).cwiseAbs().maxCoeff());
  return r;
}

Series distance_series(const Trajectory& a, const Trajectory& b) {
  if (a.dimension() != b.dimension()) throw DimensionError("trajectories have different dimensions");
  Series s;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double t = a.times()[k];
    if (t < b.t0() || t > b.t_end()) continue;
    s.t.push_back(t);
    s.v.push_back((a.state(k) - b.at(t)).norm());
  }
  return s;
}

RateEstimate convergence_rate(const Series& s, double t_from, double t_to) {
  RateEstimate r;
  r.window_end = t_to;
  std::vector<double> ts, ys;
  for (std::size_t k = 0; k < s.t.size(); ++k) {
    if (s.t[k] < t_from || s.t[k] > t_to) continue;
    if (!(s.v[k] >= 1e-14)) {
      r.truncated = true;
      r.window_end = s.t[k];
      break;
    }
    ts.push_back(s.t[k]);
    ys.push_back(std::log(s.v[k]));
  }
  r.points = static_cast<int>(ts.size());
  if (ts.size() < 2) {
    r.rate = std::numeric_limits<double>::infinity();
    return r;
  }
  const double n = static_cast<double>(ts.size());
  double mt = 0, my = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    mt += ts[k];
    my += ys[k];
  }
  mt /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    sxy += (ts[k] - mt) * (ys[k] - my);
    sxx += (ts[k] - mt) * (ts[k] - mt);
  }
  r.rate = sxx > 0 ? -sxy / sxx : std::numeric_limits<double>::infinity();
  return r;
}

// --- fold-change detection -------------------------------------------------------------

namespace {

std::vector<double> inputs_at(const SystemModel& m, double t) {
  Eigen::VectorXd p = m.param_values();
  std::vector<double> u(m.input_count());
  std::map<int, double> external;
  for (int i = 0; i < m.input_count(); ++i)
    if (m.input_is_external(i)) external[i] = 0.0;
  m.input_values(t, {p.data(), static_cast<std::size_t>(p.size())}, u, external);
  return u;
}

SystemModel with_signals(const SystemModel& m, const std::map<std::string, Expr>& inputs) {
  std::map<std::string, std::optional<Expr>> in;
  for (const auto& [k, v] : inputs) in[k] = v;
  return m.with_inputs(in);
}

}  // namespace

Eigen::VectorXd matched_initial_state(const SystemModel& m, const ScalingActionPair& gi, const ScalingActionPair& gj,
                                      const Eigen::VectorXd& x0_i, double t0) {
  auto u = inputs_at(m, t0);
  const Eigen::VectorXd target = gi.apply(x0_i, t0, u);
  Eigen::VectorXd x = x0_i;
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd r = gj.apply(x, t0, u) - target;
    if (r.cwiseAbs().maxCoeff() <= 1e-15 * (1 + target.cwiseAbs().maxCoeff())) return x;
    Eigen::MatrixXd j = gj.jacobian(x, t0, u);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    if (!lu.isInvertible()) throw NumericalError("state action is not invertible at the initial state");
    Eigen::VectorXd step = lu.solve(r);
    x -= step;
    if (step.cwiseAbs().maxCoeff() <= 1e-16 * (1 + x.cwiseAbs().maxCoeff())) return x;
  }
  if ((gj.apply(x, t0, u) - target).cwiseAbs().maxCoeff() > 1e-10 * (1 + target.cwiseAbs().maxCoeff()))
    throw NumericalError("could not match initial states through the state actions");
  return x;
}

FcdReport fcd_experiment(const SystemModel& m, const FcdArm& arm_i, const FcdArm& arm_j,
                         const std::vector<std::string>& shared, const SolverConfig& cfg, double compare_from,
                         bool require_matched_inputs) {
  FcdReport rep;
  rep.shared = shared;
  const SystemModel mi = with_signals(m, arm_i.inputs), mj = with_signals(m, arm_j.inputs);
  std::vector<int> idx;
  for (const auto& name : shared) {
    int k = m.state_index(name);
    if (k < 0) throw ModelError("fcd: unknown shared component '" + name + "'");
    if (!arm_i.pair.identity_on(k) || !arm_j.pair.identity_on(k))
      throw PreconditionError("fcd: the state actions change shared component '" + name + "'");
    if (arm_i.x0[k] != arm_j.x0[k]) throw PreconditionError("fcd: shared component '" + name + "' starts unequal");
    idx.push_back(k);
  }

  std::vector<Trajectory> out(2);
  parallel_for(2, [&](std::size_t k) { out[k] = simulate(k == 0 ? mi : mj, k == 0 ? arm_i.x0 : arm_j.x0, cfg); });
  rep.traj_i = std::move(out[0]);
  rep.traj_j = std::move(out[1]);

  // union of both grids plus a uniform one
  std::vector<double> grid = rep.traj_i.times();
  grid.insert(grid.end(), rep.traj_j.times().begin(), rep.traj_j.times().end());
  const double tf = cfg.t0 + cfg.horizon;
  for (int k = 0; k <= 2000; ++k) grid.push_back(cfg.t0 + cfg.horizon * k / 2000.0);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  for (double t : grid) {
    auto ui = inputs_at(mi, t), uj = inputs_at(mj, t);
    auto ri = arm_i.pair.apply_input(t, ui), rj = arm_j.pair.apply_input(t, uj);
    for (std::size_t c = 0; c < ri.size(); ++c) {
      double d = std::abs(ri[c] - rj[c]);
      rep.input_mismatch = std::max(rep.input_mismatch, d / (1 + std::abs(ri[c])));
    }
  }
  if (require_matched_inputs && rep.input_mismatch > 1e-10)
    throw PreconditionError("fcd: scaled inputs differ (max relative gap " + std::to_string(rep.input_mismatch) + ")");

  for (double t : grid) {
    if (t < compare_from || t > tf) continue;
    Eigen::VectorXd xi = rep.traj_i.at(t), xj = rep.traj_j.at(t);
    double g = 0.0;
    for (int k : idx) g = std::max(g, std::abs(xi[k] - xj[k]));
    rep.shared_gap.t.push_back(t);
    rep.shared_gap.v.push_back(g);
    rep.max_shared_gap = std::max(rep.max_shared_gap, g);
    auto ui = inputs_at(mi, t), uj = inputs_at(mj, t);
    double tg = (arm_i.pair.apply(xi, t, ui) - arm_j.pair.apply(xj, t, uj)).cwiseAbs().maxCoeff();
    rep.max_transformed_gap = std::max(rep.max_transformed_gap, tg);
  }
  return rep;
}

// --- export ---------------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << std::setprecision(17);
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace

void write_csv(const std::string& path, const Trajectory& traj) {
  auto out = open_out(path);
  out << "t";
  for (const auto& n : traj.names()) out << "," << n;
  out << "\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << traj.times()[k];
    for (int i = 0; i < traj.dimension(); ++i) out << "," << traj.state(k)[i];
    out << "\n";
  }
}

void write_series_csv(const std::string& path, const std::vector<std::pair<std::string, Series>>& columns) {
  auto out = open_out(path);
  if (columns.empty()) return;
  out << "t";
  for (const auto& [name, s] : columns) out << "," << name;
  out << "\n";
  const auto& t = columns.front().second.t;
  for (std::size_t k = 0; k < t.size(); ++k) {
    out << t[k];
    for (const auto& [name, s] : columns) {
      if (s.t.size() != t.size()) throw DimensionError("series '" + name + "' is on a different grid");
      out << "," << s.v[k];
    }
    out << "\n";
  }
}

std::vector<PlotLine> trajectory_lines(const Trajectory& traj, std::size_t max_lines) {
  std::vector<PlotLine> lines;
  for (int i = 0; i < traj.dimension() && lines.size() < max_lines; ++i) {
    PlotLine l;
    l.label = traj.names()[i];
    for (std::size_t k = 0; k < traj.size(); ++k) {
      l.series.t.push_back(traj.times()[k]);
      l.series.v.push_back(traj.state(k)[i]);
    }
    lines.push_back(std::move(l));
  }
  return lines;
}

void write_svg(const std::string& path, const std::string& title, const std::vector<PlotLine>& lines, bool log_y) {
  constexpr double W = 820, H = 420, L = 70, R = 150, T = 40, B = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                 "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  auto yval = [&](double v) { return log_y ? (v > 0 ? std::log10(v) : std::nan("")) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& l : lines)
    for (std::size_t k = 0; k < l.series.t.size(); ++k) {
      double y = yval(l.series.v[k]);
      if (!std::isfinite(y)) continue;
      x0 = std::min(x0, l.series.t[k]);
      x1 = std::max(x1, l.series.t[k]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1, y0 -= 1;
  auto px = [&](double t) { return L + (t - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  auto out = open_out(path);
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double t = x0 + (x1 - x0) * k / 4, y = y0 + (y1 - y0) * k / 4;
    out << "<text x=\"" << px(t) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << t << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
        << (log_y ? "1e" : "") << (log_y ? std::round(y * 10) / 10 : y) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">t</text>\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& s = lines[i].series;
    const std::size_t stride = std::max<std::size_t>(1, s.t.size() / 2000);
    const char* color = colors[i % 10];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t k = 0; k < s.t.size(); k += stride) {
      double y = yval(s.v[k]);
      if (std::isfinite(y)) out << px(s.t[k]) << "," << py(y) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 14 + 16 * static_cast<double>(i) << "\" fill=\"" << color
        << "\">" << xml_escape(lines[i].label) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace symcon
