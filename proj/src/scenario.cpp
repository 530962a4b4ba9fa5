#include "symcon/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "symcon/certify.hpp"
#include "symcon/error.hpp"
#include "symcon/parallel.hpp"
#include "symcon/sim.hpp"
#include "symcon/symmetry.hpp"

#ifndef SYMCON_DATA_DIR
#define SYMCON_DATA_DIR "."
#endif

namespace symcon {

namespace fs = std::filesystem;
using nlohmann::json;

// --- small helpers -------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool matches(std::string_view pattern, std::string_view name) {
  if (pattern == "*") return true;
  if (!pattern.empty() && pattern.back() == '*') return name.starts_with(pattern.substr(0, pattern.size() - 1));
  return pattern == name;
}

// Value for `name` from a pattern-keyed object: exact key first, then the
// longest matching prefix pattern.
const json* lookup_pattern(const json& obj, std::string_view name) {
  if (auto it = obj.find(std::string(name)); it != obj.end()) return &*it;
  const json* best = nullptr;
  std::size_t best_len = 0;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (matches(it.key(), name) && (best == nullptr || it.key().size() > best_len)) {
      best = &*it;
      best_len = it.key().size();
    }
  }
  return best;
}

std::vector<std::string> expand_names(const json& patterns, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& p : patterns) {
    const auto pat = p.get<std::string>();
    bool any = false;
    for (const auto& n : names)
      if (matches(pat, n)) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
        any = true;
      }
    if (!any) throw ModelError("no state matches '" + pat + "'");
  }
  return out;
}

// "1..10" -> 1, ..., 10; "a" -> a.
std::vector<std::string> expand_range(const std::string& token) {
  const auto dots = token.find("..");
  if (dots == std::string::npos) return {token};
  int a = 0, b = 0;
  const auto lhs = trim(token.substr(0, dots)), rhs = trim(token.substr(dots + 2));
  auto ra = std::from_chars(lhs.data(), lhs.data() + lhs.size(), a);
  auto rb = std::from_chars(rhs.data(), rhs.data() + rhs.size(), b);
  if (ra.ec != std::errc() || rb.ec != std::errc() || b < a) throw ModelError("bad range '" + token + "'");
  std::vector<std::string> out;
  for (int i = a; i <= b; ++i) out.push_back(std::to_string(i));
  return out;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  return s;
}

json substitute_vars(const json& j, const std::map<std::string, double>& vars) {
  if (j.is_string()) {
    auto s = j.get<std::string>();
    for (const auto& [k, v] : vars) s = replace_all(s, "{" + k + "}", fmt17(v));
    return s;
  }
  if (j.is_array() || j.is_object()) {
    json out = j;
    for (auto it = out.begin(); it != out.end(); ++it) *it = substitute_vars(*it, vars);
    return out;
  }
  return j;
}

double number_or_nan(const json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

}  // namespace

// --- public helpers ------------------------------------------------------------------

Partition parse_partition(const NetworkLayout& layout, std::string_view text) {
  Partition p;
  p.cluster_of.assign(layout.nodes.size(), -1);
  std::size_t i = 0;
  const std::string s(text);
  while (true) {
    i = s.find_first_not_of(" \t", i);
    if (i == std::string::npos) break;
    if (s[i] != '{') throw ModelError("partition: expected '{' in \"" + s + "\"");
    const auto close = s.find('}', i);
    if (close == std::string::npos) throw ModelError("partition: unclosed '{' in \"" + s + "\"");
    std::stringstream items(s.substr(i + 1, close - i - 1));
    std::string item;
    while (std::getline(items, item, ',')) {
      for (const auto& id : expand_range(trim(item))) {
        const int k = layout.node_index(id);
        if (k < 0) throw ModelError("partition: unknown node '" + id + "'");
        if (p.cluster_of[k] >= 0) throw ModelError("partition: node '" + id + "' listed twice");
        p.cluster_of[k] = p.count;
      }
    }
    ++p.count;
    i = close + 1;
  }
  for (std::size_t k = 0; k < p.cluster_of.size(); ++k)
    if (p.cluster_of[k] < 0) throw ModelError("partition: node '" + layout.nodes[k].id + "' missing");
  return normalized(p);
}

std::string describe(const NetworkLayout& layout, const Partition& p) {
  std::string out;
  for (const auto& cluster : p.clusters()) {
    if (!out.empty()) out += ' ';
    out += '{';
    for (std::size_t i = 0; i < cluster.size(); ++i) {
      if (i) out += ',';
      out += layout.nodes[cluster[i]].id;
    }
    out += '}';
  }
  return out;
}

Eigen::MatrixXd load_weight(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open weight file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ModelError("weight file '" + path + "': " + e.what());
  }
  if (j.is_object()) {
    if (!j.contains("weight")) throw ModelError("weight file '" + path + "' has no \"weight\" entry");
    j = j["weight"];
  }
  if (!j.is_array() || j.empty()) throw ModelError("weight file '" + path + "': expected a matrix");
  const auto rows = j.size(), cols = j[0].size();
  Eigen::MatrixXd w(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw DimensionError("weight file '" + path + "': ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) w(r, c) = j[r][c].get<double>();
  }
  return w;
}

MeasureKind parse_measure(const json& j, const fs::path& base) {
  if (j.is_string()) return MeasureKind(norm_from_string(j.get<std::string>()));
  if (j.is_number_integer()) return MeasureKind(norm_from_string(std::to_string(j.get<int>())));
  if (!j.is_object() || !j.contains("norm")) throw ModelError("measure: expected \"1\", \"2\", \"inf\" or {\"norm\": ...}");
  MeasureKind k = parse_measure(j["norm"], base);
  if (j.contains("weight")) {
    const auto& w = j["weight"];
    if (w.is_string()) {
      k.weight = load_weight((base / w.get<std::string>()).string());
    } else {
      Eigen::MatrixXd m(w.size(), w[0].size());
      for (std::size_t r = 0; r < w.size(); ++r)
        for (std::size_t c = 0; c < w[r].size(); ++c) m(r, c) = w[r][c].get<double>();
      k.weight = m;
    }
  }
  return k;
}

double constant_value(std::string_view text, const SystemModel* m) {
  const Expr e = parse_expression(text);
  Environment env;
  if (m != nullptr) {
    for (const auto& [name, v] : m->description().params) env.set(name, v);
  }
  return evaluate(e, env);
}

double constant_json(const json& j, const SystemModel* m) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return constant_value(std::string_view(j.get_ref<const std::string&>()), m);
  throw ModelError("expected a number or an expression, got " + j.dump());
}

LoadedModel with_overrides(const LoadedModel& lm, const json& params, const json& delays) {
  if ((params.is_null() || params.empty()) && (delays.is_null() || delays.empty())) return lm;
  std::map<std::string, double> pv, dv;
  for (auto it = params.begin(); params.is_object() && it != params.end(); ++it)
    pv[it.key()] = constant_json(*it, &lm.system());
  for (auto it = delays.begin(); delays.is_object() && it != delays.end(); ++it)
    dv[it.key()] = constant_json(*it, &lm.system());
  LoadedModel out = lm;
  if (lm.network) {
    auto set = [](auto& list, const std::map<std::string, double>& values, const char* what) {
      for (const auto& [k, v] : values) {
        auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.first == k; });
        if (it == list.end()) throw ModelError(std::string("unknown ") + what + " '" + k + "'");
        it->second = v;
      }
    };
    set(out.network->globals.params, pv, "parameter");
    set(out.network->globals.delays, dv, "delay");
    out.model = std::make_shared<const SystemModel>(assemble_network(*out.network));
  } else {
    SystemModel m = lm.system();
    if (!pv.empty()) m = m.with_params(pv);
    if (!dv.empty()) m = m.with_delays(dv);
    out.model = std::make_shared<const SystemModel>(std::move(m));
  }
  return out;
}

Box box_with_overrides(Box base, const SystemModel& m, const json& overrides) {
  if (!overrides.is_object()) return base;
  std::vector<std::string> names = m.state_names();
  for (int i = 0; i < m.input_count(); ++i) names.push_back(m.input_name(i));
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const auto& r = *it;
    if (!r.is_array() || r.size() != 2) throw ModelError("box entry '" + it.key() + "' must be [lo, hi]");
    Interval iv{constant_json(r[0], &m), constant_json(r[1], &m)};
    if (!(iv.lo <= iv.hi)) throw ModelError("box entry '" + it.key() + "' is empty");
    bool any = false;
    for (const auto& n : names)
      if (matches(it.key(), n)) {
        base.set(n, iv);
        any = true;
      }
    // names the model does not know (the standalone second-order test uses x and u)
    if (!any) base.set(it.key(), iv);
  }
  return base;
}

fs::path data_dir() {
  if (const char* env = std::getenv("SYMCON_DATA"); env != nullptr && *env != '\0') return env;
  return SYMCON_DATA_DIR;
}

std::vector<std::string> bundled_scenarios() {
  std::vector<std::string> out;
  const auto dir = data_dir() / "scenarios";
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".scn") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

fs::path bundled_scenario(const std::string& name) {
  auto p = data_dir() / "scenarios" / (name + ".scn");
  if (!fs::exists(p)) {
    std::string known;
    for (const auto& n : bundled_scenarios()) known += (known.empty() ? "" : ", ") + n;
    throw ModelError("no bundled scenario '" + name + "' (known: " + known + ")");
  }
  return p;
}

// --- runner --------------------------------------------------------------------------

namespace {

struct Context {
  fs::path base;
  LoadedModel model;
  std::uint64_t seed = 1;
  fs::path out;
  ScenarioResult* result = nullptr;
  std::map<std::string, json> values;  // step id -> named values
};

struct StepOutput {
  json result = json::object();
  json values = json::object();
  std::vector<Check> checks;
};

void add_check(StepOutput& o, std::string name, double value, const std::string& rel, double bound) {
  bool ok = false;
  if (rel == "<=") ok = value <= bound;
  else if (rel == ">=") ok = value >= bound;
  else ok = value == bound;
  o.checks.push_back({std::move(name), value, bound, rel, ok});
}

void add_bound_checks(StepOutput& o, const std::string& name, double value, const json& spec, const char* max_key,
                      const char* min_key) {
  if (spec.contains(max_key)) add_check(o, name, value, "<=", spec[max_key].get<double>());
  if (spec.contains(min_key)) add_check(o, name, value, ">=", spec[min_key].get<double>());
}

// Generic expectations over a step's named values: `<v>_max`, `<v>_min`, or an
// exact value.
void apply_expectations(StepOutput& o, const json& expect, const NetworkLayout* layout) {
  for (auto it = expect.begin(); it != expect.end(); ++it) {
    const std::string key = it.key();
    auto suffix = [&](const char* s) {
      const std::string_view sv(s);
      return key.size() > sv.size() && key.ends_with(sv) && o.values.contains(key.substr(0, key.size() - sv.size()));
    };
    if (suffix("_max") || suffix("_min")) {
      const auto name = key.substr(0, key.size() - 4);
      add_check(o, name, number_or_nan(o.values[name]), key.ends_with("_max") ? "<=" : ">=", it->get<double>());
      continue;
    }
    if (!o.values.contains(key)) throw ModelError("unknown expectation '" + key + "'");
    const json& v = o.values[key];
    if (v.is_boolean()) {
      add_check(o, key, v.get<bool>() ? 1 : 0, "==", it->get<bool>() ? 1 : 0);
    } else if (v.is_number()) {
      add_check(o, key, v.get<double>(), "==", it->get<double>());
    } else {
      // strings: partitions compare as sets
      std::string want = it->get<std::string>(), got = v.get<std::string>();
      if (layout != nullptr && want.starts_with("{")) want = describe(*layout, parse_partition(*layout, want));
      o.checks.push_back({key + " = " + want + " (got " + got + ")", 0, 0, "==", want == got});
    }
  }
}


const NetworkSpec& require_network(const LoadedModel& lm, const char* what) {
  if (!lm.network) throw PreconditionError(std::string(what) + " needs a network model");
  return *lm.network;
}

Partition partition_for(const LoadedModel& lm, const json& j) {
  const auto s = j.get<std::string>();
  if (s == "coarsest") return coarsest_balanced_partition(require_network(lm, "the coarsest partition"));
  return parse_partition(layout_of(lm.system()), s);
}

LoadedModel step_model(const Context& ctx, const json& step) {
  LoadedModel lm = ctx.model;
  if (step.contains("model")) lm = load_model((ctx.base / step["model"].get<std::string>()).string());
  lm = with_overrides(lm, step.value("params", json::object()), step.value("delays", json::object()));
  if (step.contains("quotient")) {
    // the step works on the quotient network of a balanced partition
    const auto& spec = require_network(lm, "a quotient");
    const Partition p = partition_for(lm, step["quotient"]);
    lm.network = quotient_network(spec, p);
    lm.model = std::make_shared<const SystemModel>(assemble_network(*lm.network));
  }
  return lm;
}

Subspace subspace_for(const LoadedModel& lm, const json& step) {
  if (step.contains("action")) {
    const auto& m = lm.system();
    return fixed_subspace(linear_action(m, find_action(m, step["action"].get<std::string>())));
  }
  if (step.contains("partition"))
    return synchrony_subspace(require_network(lm, "a partition subspace"), partition_for(lm, step["partition"]));
  throw ModelError("expected \"action\" or \"partition\"");
}

SolverConfig solver_config(const SystemModel& m, const json& j) {
  SolverConfig cfg;
  if (auto td = m.description().time_domain) {
    cfg.t0 = td->lo;
    cfg.horizon = td->hi - td->lo;
  }
  if (!j.is_object()) return cfg;
  if (j.contains("method")) {
    const auto s = j["method"].get<std::string>();
    if (s == "rk4") cfg.method = SolverConfig::Method::RK4;
    else if (s == "rk45") cfg.method = SolverConfig::Method::RK45;
    else throw ModelError("unknown method '" + s + "' (rk4, rk45)");
  }
  cfg.t0 = j.value("t0", cfg.t0);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.dt = j.value("dt", cfg.dt);
  cfg.rtol = j.value("rtol", cfg.rtol);
  cfg.atol = j.value("atol", cfg.atol);
  cfg.dt_max = j.value("dt_max", cfg.dt_max);
  cfg.validate();
  return cfg;
}

std::vector<ParamRamp> ramps_from(const json& j) {
  std::vector<ParamRamp> out;
  for (const auto& r : j)
    out.push_back({r.at("param").get<std::string>(), r.at("start").get<double>(), r.at("end").get<double>(),
                   r.at("from").get<double>(), r.at("to").get<double>()});
  return out;
}

Eigen::VectorXd initial_state(const json& spec, const SystemModel& m, std::mt19937_64& rng) {
  const int n = m.dimension();
  Eigen::VectorXd x(n);
  if (spec.is_array()) {
    if (static_cast<int>(spec.size()) != n)
      throw DimensionError("x0 has " + std::to_string(spec.size()) + " entries, the model " + std::to_string(n));
    for (int i = 0; i < n; ++i) x[i] = constant_json(spec[i], &m);
    return x;
  }
  if (spec.is_object() && spec.contains("random")) {
    const auto& r = spec["random"];
    std::uniform_real_distribution<double> d(r.at(0).get<double>(), r.at(1).get<double>());
    for (int i = 0; i < n; ++i) x[i] = d(rng);
    return x;
  }
  if (spec.is_object()) {
    for (int i = 0; i < n; ++i) {
      const json* v = lookup_pattern(spec, m.state_names()[i]);
      if (v == nullptr) throw ModelError("x0: no value for '" + m.state_names()[i] + "'");
      x[i] = constant_json(*v, &m);
    }
    return x;
  }
  throw ModelError("x0: expected a list, {\"random\": [lo, hi]} or named values");
}

void write_artifacts(Context& ctx, const std::string& stem, const Trajectory& traj) {
  if (ctx.out.empty()) return;
  const auto csv = (ctx.out / (stem + ".csv")).string(), svg = (ctx.out / (stem + ".svg")).string();
  write_csv(csv, traj);
  write_svg(svg, stem, trajectory_lines(traj));
  ctx.result->files.push_back(csv);
  ctx.result->files.push_back(svg);
}

void write_series(Context& ctx, const std::string& stem, const std::string& label, const Series& s, bool log_y) {
  if (ctx.out.empty()) return;
  const auto csv = (ctx.out / (stem + ".csv")).string(), svg = (ctx.out / (stem + ".svg")).string();
  write_series_csv(csv, {{label, s}});
  write_svg(svg, stem, {{label, s}}, log_y);
  ctx.result->files.push_back(csv);
  ctx.result->files.push_back(svg);
}

// One metric on one trajectory. Returns named values; `series` gets the curve
// worth plotting, if any.
json evaluate_metric(const json& metric, const Trajectory& traj, const LoadedModel& lm, const Context& ctx,
                     Series* series) {
  const auto kind = metric.at("kind").get<std::string>();
  const auto& m = lm.system();
  json v = json::object();
  if (kind == "sync" || kind == "rate") {
    const Partition p = partition_for(lm, metric.value("partition", json("coarsest")));
    Series s = sync_error(traj, layout_of(m), p);
    if (kind == "sync") {
      const json after = metric.value("after", json(traj.t0()));
      v["value"] = s.max_after(after.is_string() && after == "end" ? traj.t_end() : after.get<double>());
      v["settled_at"] = s.settles_below(metric.value("level", metric.value("max", 1e-6)));
    } else {
      auto r = convergence_rate(s, metric.value("from", traj.t0()), metric.value("to", traj.t_end()));
      v["value"] = r.rate;
      v["points"] = r.points;
      v["truncated"] = r.truncated;
    }
    if (series != nullptr) *series = std::move(s);
  } else if (kind == "period") {
    const double period = constant_json(metric.at("period"), &m);
    const double periods = metric.value("periods", 2.0);
    v["value"] = periodicity_check(traj, period, std::max(0.0, (periods - 1) * period));
    v["period"] = period;
  } else if (kind == "value") {
    const double at = metric.value("at", traj.t_end());
    const Eigen::VectorXd x = traj.at(at);
    double worst = 0.0;
    for (int i = 0; i < m.dimension(); ++i) {
      const json* target = lookup_pattern(metric.at("values"), m.state_names()[i]);
      if (target != nullptr) worst = std::max(worst, std::abs(x[i] - constant_json(*target, &m)));
    }
    v["value"] = worst;
    v["at"] = at;
  } else if (kind == "hsym") {
    const auto a = spatio_temporal_action(m, find_action(m, metric.at("action").get<std::string>()));
    const double after = metric.value("after", traj.t0());
    Series r = h_symmetry_residual(traj, a);
    v["value"] = r.max_after(after);
    const int order = action_order(a.gamma);
    const double full = order * a.shift;
    const double tail = std::min(traj.t_end() - after - full, traj.t_end() - traj.t0() - 2 * full);
    if (tail < 0) throw PreconditionError("hsym: horizon too short for a full period after t = " + fmt17(after));
    v["order"] = order;
    v["full_period"] = full;
    v["period_residual"] = periodicity_check(traj, full, tail);
    if (series != nullptr) *series = std::move(r);
  } else {
    throw ModelError("unknown metric '" + kind + "'");
  }
  (void)ctx;
  return v;
}

void metric_checks(StepOutput& o, const json& metric, const std::string& name, const json& v) {
  add_bound_checks(o, name, v["value"].get<double>(), metric, "max", "min");
  if (metric.contains("period_max")) add_check(o, name + ".period_residual", v["period_residual"], "<=", metric["period_max"]);
}

// Worst case over runs: smallest rate, largest error.
json worst_of(const std::vector<json>& runs, bool smaller_is_worse) {
  json w = runs.front();
  for (const auto& r : runs) {
    for (auto it = r.begin(); it != r.end(); ++it) {
      if (!it->is_number_float() || it.key() == "period" || it.key() == "full_period" || it.key() == "at") continue;
      const double a = w[it.key()].get<double>(), b = it->get<double>();
      const bool replace = std::isnan(b) || (smaller_is_worse ? b < a : b > a);
      if (replace && !std::isnan(a)) w[it.key()] = b;
    }
  }
  return w;
}

double metric_min_bound(const json& metric, const Context& ctx) {
  // "min_ref": "step.value" minus an optional slack
  const auto ref = metric["min_ref"].get<std::string>();
  const auto dot = ref.find('.');
  if (dot == std::string::npos) throw ModelError("min_ref must be \"step.value\"");
  const auto step = ref.substr(0, dot), value = ref.substr(dot + 1);
  auto it = ctx.values.find(step);
  if (it == ctx.values.end() || !it->second.contains(value))
    throw ModelError("min_ref: no value '" + value + "' from an earlier step '" + step + "'");
  return it->second[value].get<double>() - metric.value("slack", 0.0);
}

void run_metrics(StepOutput& o, const json& metrics, const std::vector<const Trajectory*>& trajs,
                 const LoadedModel& lm, Context& ctx, const std::string& id) {
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    json metric = metrics[k];
    const auto kind = metric.at("kind").get<std::string>();
    const auto name = metric.value("name", kind);
    if (metric.contains("min_ref")) metric["min"] = metric_min_bound(metric, ctx);
    std::vector<json> per(trajs.size());
    std::vector<Series> curves(trajs.size());
    parallel_for(trajs.size(), [&](std::size_t r) { per[r] = evaluate_metric(metric, *trajs[r], lm, ctx, &curves[r]); });
    json w = worst_of(per, kind == "rate");
    o.result["metrics"][name] = w;
    o.values[name] = w["value"];
    if (w.contains("period_residual")) o.values[name + ".period_residual"] = w["period_residual"];
    metric_checks(o, metric, name, w);
    if (!curves.front().t.empty()) write_series(ctx, id + "_" + name, name, curves.front(), true);
  }
}

// --- step kinds ----------------------------------------------------------------------

StepOutput step_partition(Context&, const json& step, const LoadedModel& lm) {
  StepOutput o;
  const auto& spec = require_network(lm, "partition");
  const Partition p = coarsest_balanced_partition(spec);
  o.result["partition"] = describe(spec, p);
  o.result["clusters"] = p.count;
  o.values["partition"] = describe(spec, p);
  o.values["clusters"] = p.count;
  if (step.contains("check")) {
    const Partition q = parse_partition(layout_of(lm.system()), step["check"].get<std::string>());
    o.result["checked"] = describe(spec, q);
    o.values["balanced"] = is_balanced(spec, q);
  }
  return o;
}

StepOutput step_residual(Context& ctx, const json& step, const LoadedModel& lm, const std::string& kind) {
  StepOutput o;
  const auto& m = lm.system();
  const Box box = box_with_overrides(m.default_box(), m, step.value("box", json::object()));
  const int samples = step.value("samples", 500);
  const double tol = step.value("tol", 1e-9);
  const std::uint64_t seed = step.value("seed", ctx.seed);
  ResidualReport r;
  if (kind == "equivariance") {
    const auto& decl = find_action(m, step.at("action").get<std::string>());
    r = check_equivariance(m, linear_action(m, decl), samples, box, tol, seed, decl.shift.value_or(0.0));
  } else if (kind == "input-equivariance") {
    const auto pair = scaling_pair(m, find_action(m, step.at("action").get<std::string>()));
    r = check_input_equivariance(m, pair, samples, box, tol, seed);
  } else {
    r = check_flow_invariance(m, subspace_for(lm, step), samples, box, tol, seed);
  }
  o.result = {{"max_residual", r.max_residual}, {"tol", r.tol}, {"samples", r.samples},
              {"status", r.passed ? "pass" : "fail"}, {"witness_t", r.witness_t}};
  o.values["passed"] = r.passed;
  o.values["residual"] = r.max_residual;
  return o;
}

CertifyOptions certify_options(const Context& ctx, const json& step) {
  CertifyOptions opt;
  opt.samples = step.value("samples", opt.samples);
  opt.seed = step.value("seed", ctx.seed);
  opt.min_rate = step.value("min_rate", opt.min_rate);
  if (step.contains("time_window"))
    opt.time_window = Interval{step["time_window"].at(0).get<double>(), step["time_window"].at(1).get<double>()};
  return opt;
}

HierarchySpec hierarchy_from(const json& j, const fs::path& base) {
  HierarchySpec h;
  for (const auto& g : j.at("groups")) h.groups.push_back(g.get<std::vector<std::string>>());
  const auto& tests = j.at("tests");
  if (tests.size() != h.groups.size()) throw ModelError("hierarchy: one test per group");
  for (std::size_t k = 0; k < tests.size(); ++k) {
    if (tests[k].is_string() && tests[k].get<std::string>() == "second-order") {
      if (h.groups[k].size() != 2) throw ModelError("hierarchy: a second-order block has two states");
      h.tests.emplace_back(SecondOrderBlock{h.groups[k][0], h.groups[k][1]});
    } else {
      h.tests.emplace_back(parse_measure(tests[k], base));
    }
  }
  if (j.contains("offdiag_bound")) h.offdiag_bound = j["offdiag_bound"].get<double>();
  return h;
}

VirtualEmbedding embedding_from(const json& j) {
  VirtualEmbedding e;
  std::vector<std::string> each;
  const auto& copies = j.at("copies");
  if (copies.is_object()) {
    each = expand_range(copies.at("each").get<std::string>());
    for (const auto& k : each) {
      std::vector<std::pair<std::string, std::string>> copy;
      for (auto it = copies.at("map").begin(); it != copies.at("map").end(); ++it)
        copy.emplace_back(it.key(), replace_all(it->get<std::string>(), "{}", k));
      e.copies.push_back(std::move(copy));
    }
  } else {
    for (const auto& c : copies) e.copies.push_back(c.get<std::vector<std::pair<std::string, std::string>>>());
  }
  const json inputs = j.value("inputs", json::object());
  for (auto it = inputs.begin(); it != inputs.end(); ++it) {
    std::string text;
    if (it->is_object() && it->contains("mean")) {
      if (each.empty()) throw ModelError("virtual input 'mean' needs copies given with \"each\"");
      const auto pat = (*it)["mean"].get<std::string>();
      text = "(";
      for (std::size_t k = 0; k < each.size(); ++k) text += (k ? " + " : "") + replace_all(pat, "{}", each[k]);
      text += ")/" + std::to_string(each.size());
    } else {
      text = it->get<std::string>();
    }
    e.inputs.emplace_back(it.key(), parse_expression(text));
  }
  return e;
}

void certificate_values(StepOutput& o, const ContractionCertificate& c) {
  o.values["passed"] = c.passed;
  o.values["margin"] = c.margin;
  o.values["max_mu"] = c.max_mu;
  for (const auto& [name, v] : c.figures) o.values[name] = v;
  for (std::size_t k = 0; k < c.parts.size(); ++k) {
    const auto prefix = "part" + std::to_string(k + 1);
    o.values[prefix + ".margin"] = c.parts[k].margin;
    o.values[prefix + ".passed"] = c.parts[k].passed;
  }
}

StepOutput step_certify(Context& ctx, const json& step, const LoadedModel& lm) {
  StepOutput o;
  const auto& m = lm.system();
  const auto target = step.value("target", std::string("full"));
  const auto opt = certify_options(ctx, step);
  const json overrides = step.value("box", json::object());
  const json measure = step.value("measure", json("2"));
  ContractionCertificate c;
  if (target == "full") {
    c = certify_contraction(m, box_with_overrides(m.default_box(), m, overrides), parse_measure(measure, ctx.base), opt);
  } else if (target == "toward") {
    c = certify_toward_subspace(m, subspace_for(lm, step), box_with_overrides(m.default_box(), m, overrides),
                                parse_measure(measure, ctx.base), opt);
  } else if (target == "hierarchical") {
    c = certify_hierarchical(m, hierarchy_from(step, ctx.base), box_with_overrides(m.default_box(), m, overrides), opt);
  } else if (target == "second-order") {
    if (step.contains("eps")) {
      c = certify_second_order(constant_json(step["eps"], &m), parse_expression(step.at("phi").get<std::string>()),
                               box_with_overrides(Box{}, m, overrides), opt);
    } else {
      c = certify_second_order(m, step.at("x").get<std::string>(), step.at("y").get<std::string>(),
                               box_with_overrides(m.default_box(), m, overrides), opt);
    }
  } else if (target == "virtual") {
    const auto vlm = with_overrides(load_model((ctx.base / step.at("virtual").get<std::string>()).string()),
                                    step.value("virtual_params", json::object()));
    const auto& v = vlm.system();
    std::variant<MeasureKind, HierarchySpec> how = MeasureKind(Norm::Two);
    const json& con = step.at("contraction");
    if (con.is_object() && con.contains("groups")) how = hierarchy_from(con, ctx.base);
    else how = parse_measure(con, ctx.base);
    c = certify_virtual(v, m, embedding_from(step), box_with_overrides(m.default_box(), m, overrides),
                        box_with_overrides(v.default_box(), v, step.value("virtual_box", json::object())), how, opt);
  } else {
    throw ModelError("unknown certificate target '" + target + "'");
  }
  o.result = to_json(c);
  certificate_values(o, c);
  return o;
}

StepOutput step_cascade(Context& ctx, const json& step, const LoadedModel& lm) {
  StepOutput o;
  const auto& spec = require_network(lm, "cascade");
  std::vector<Partition> chain;
  for (const auto& s : step.at("chain")) chain.push_back(parse_partition(layout_of(lm.system()), s.get<std::string>()));
  const auto cc =
      certify_cascade(spec, chain, parse_measure(step.value("measure", json("2")), ctx.base), certify_options(ctx, step));
  o.result = to_json(cc);
  o.values["passed"] = cc.passed;
  o.values["margin"] = cc.margin;
  o.values["failing_stage"] = cc.failing_stage.value_or(0);
  o.values["stages"] = static_cast<int>(cc.stages.size());
  return o;
}

StepOutput step_simulate(Context& ctx, const json& step, const LoadedModel& lm, const std::string& id, int index) {
  StepOutput o;
  const auto& m = lm.system();
  SolverConfig cfg = solver_config(m, step.value("solver", json::object()));
  cfg.ramps = ramps_from(step.value("ramps", json::array()));
  const json x0spec = step.value("x0", json{{"random", {-1.0, 1.0}}});
  const int runs = step.value("runs", 1);
  std::mt19937_64 rng(step.value("seed", ctx.seed) * 1000003u + static_cast<std::uint64_t>(index));
  std::vector<Eigen::VectorXd> x0(runs);
  for (auto& x : x0) x = initial_state(x0spec, m, rng);
  std::vector<Trajectory> trajs(runs);
  parallel_for(runs, [&](std::size_t r) { trajs[r] = simulate(m, x0[r], cfg); });
  o.result["runs"] = runs;
  o.result["horizon"] = cfg.horizon;
  o.result["method"] = cfg.method == SolverConfig::Method::RK4 || m.delayed() ? "rk4" : "rk45";
  o.result["steps"] = trajs.front().size() - 1;
  std::set<std::string> warnings;
  for (const auto& t : trajs) warnings.insert(t.warnings.begin(), t.warnings.end());
  o.result["warnings"] = warnings;
  std::vector<const Trajectory*> ptrs;
  for (const auto& t : trajs) ptrs.push_back(&t);
  write_artifacts(ctx, id, trajs.front());
  run_metrics(o, step.value("metrics", json::array()), ptrs, lm, ctx, id);
  return o;
}

StepOutput step_fcd(Context& ctx, const json& step, const LoadedModel& lm, const std::string& id, int index) {
  StepOutput o;
  const auto action = step.value("action", std::string("scale"));
  const int trials = step.value("trials", 1);
  const bool matched_inputs = step.value("matched_inputs", true);
  const double compare_from = step.value("compare_from", -std::numeric_limits<double>::infinity());
  const json draws = step.value("draw", json::object());
  const json& arms = step.at("arms");
  if (arms.size() != 2) throw ModelError("fcd: exactly two arms");
  std::mt19937_64 rng(step.value("seed", ctx.seed) * 1000003u + static_cast<std::uint64_t>(index));

  double worst = 0.0, smallest = std::numeric_limits<double>::infinity(), transformed = 0.0, mismatch = 0.0;
  json trial_reports = json::array();
  for (int trial = 0; trial < trials; ++trial) {
    std::map<std::string, double> vars;
    for (auto it = draws.begin(); it != draws.end(); ++it) {
      std::uniform_real_distribution<double> d((*it)[0].get<double>(), (*it)[1].get<double>());
      vars[it.key()] = d(rng);
    }
    const json ai = substitute_vars(arms[0], vars), aj = substitute_vars(arms[1], vars);
    const auto li = with_overrides(lm, ai.value("params", json::object()));
    const auto lj = with_overrides(lm, aj.value("params", json::object()));
    const auto& mi = li.system();
    const auto pi = scaling_pair(mi, find_action(mi, ai.value("action", action)));
    const auto pj = scaling_pair(lj.system(), find_action(lj.system(), aj.value("action", action)));
    auto inputs = [](const json& arm) {
      std::map<std::string, Expr> out;
      const json in = arm.value("inputs", json::object());
      for (auto it = in.begin(); it != in.end(); ++it) out[it.key()] = parse_expression(it->get<std::string>());
      return out;
    };
    const SolverConfig cfg = solver_config(mi, step.value("solver", json::object()));
    FcdArm arm_i{pi, inputs(ai), initial_state(ai.at("x0"), mi, rng)};
    FcdArm arm_j{pj, inputs(aj), Eigen::VectorXd()};
    if (aj.at("x0").is_string() && aj["x0"].get<std::string>() == "matched")
      arm_j.x0 = matched_initial_state(mi, pi, pj, arm_i.x0, cfg.t0);
    else
      arm_j.x0 = initial_state(aj["x0"], mi, rng);
    const auto shared = expand_names(step.at("shared"), mi.state_names());
    const auto rep = fcd_experiment(mi, arm_i, arm_j, shared, cfg, compare_from, matched_inputs);
    worst = std::max(worst, rep.max_shared_gap);
    smallest = std::min(smallest, rep.max_shared_gap);
    transformed = std::max(transformed, rep.max_transformed_gap);
    mismatch = std::max(mismatch, rep.input_mismatch);
    json tr = {{"max_gap", rep.max_shared_gap}, {"max_transformed_gap", rep.max_transformed_gap},
               {"input_mismatch", rep.input_mismatch}};
    if (!vars.empty()) tr["draw"] = vars;
    trial_reports.push_back(tr);
    if (trial == 0) {
      write_artifacts(ctx, id + "_i", rep.traj_i);
      write_artifacts(ctx, id + "_j", rep.traj_j);
      write_series(ctx, id + "_gap", "shared gap", rep.shared_gap, true);
      run_metrics(o, step.value("metrics", json::array()), {&rep.traj_i, &rep.traj_j}, li, ctx, id);
    }
  }
  o.result["shared"] = step.at("shared");
  o.result["trials"] = trial_reports;
  o.values["max_gap"] = worst;
  o.values["smallest_gap"] = smallest;
  o.values["max_transformed_gap"] = transformed;
  o.values["input_mismatch"] = mismatch;
  return o;
}

json check_json(const Check& c) {
  return {{"name", c.name}, {"value", c.value}, {"relation", c.relation}, {"bound", c.bound}, {"ok", c.ok}};
}

std::string check_line(const std::string& id, const Check& c) {
  if (c.relation == "==" && c.value == 0 && c.bound == 0) return id + ": expected " + c.name;
  return id + ": " + c.name + " = " + fmt17(c.value) + ", expected " + c.relation + " " + fmt17(c.bound);
}

}  // namespace

ScenarioResult run_scenario(const json& doc, const fs::path& base_dir, const RunOptions& opt) {
  ScenarioResult res;
  Context ctx;
  ctx.base = base_dir;
  ctx.result = &res;
  res.name = doc.value("name", std::string("scenario"));
  ctx.seed = doc.value("seed", 1);
  if (!doc.contains("model")) throw ModelError("scenario '" + res.name + "' names no model");
  const auto model_path = base_dir / doc["model"].get<std::string>();
  if (!fs::exists(model_path)) throw ModelError("model file not found: " + model_path.string());
  ctx.model = with_overrides(load_model(model_path.string()), doc.value("params", json::object()),
                             doc.value("delays", json::object()));
  if (!opt.out_dir.empty()) {
    ctx.out = opt.out_dir;
    fs::create_directories(ctx.out);
  }

  json& report = res.report;
  report["scenario"] = res.name;
  report["model"] = doc["model"];
  report["model_hash"] = ctx.model.system().hash_hex();
  report["seed"] = ctx.seed;
  report["steps"] = json::array();
  bool failed = false, errored = false;
  const json steps = doc.value("steps", json::array());
  for (std::size_t k = 0; k < steps.size() && !errored; ++k) {
    const json& step = steps[k];
    const auto kind = step.value("kind", std::string());
    const auto id = step.value("id", kind + "_" + std::to_string(k + 1));
    json entry = {{"id", id}, {"kind", kind}};
    try {
      const LoadedModel lm = step_model(ctx, step);
      entry["model_hash"] = lm.system().hash_hex();
      StepOutput o;
      const int index = static_cast<int>(k);
      if (kind == "partition") o = step_partition(ctx, step, lm);
      else if (kind == "equivariance" || kind == "input-equivariance" || kind == "flow-invariance")
        o = step_residual(ctx, step, lm, kind);
      else if (kind == "certify") o = step_certify(ctx, step, lm);
      else if (kind == "cascade") o = step_cascade(ctx, step, lm);
      else if (kind == "simulate") o = step_simulate(ctx, step, lm, id, index);
      else if (kind == "fcd") o = step_fcd(ctx, step, lm, id, index);
      else throw ModelError("unknown step kind '" + kind + "'");
      const auto layout = layout_of(lm.system());
      apply_expectations(o, step.value("expect", json::object()), &layout);
      ctx.values[id] = o.values;
      entry["result"] = o.result;
      entry["values"] = o.values;
      entry["checks"] = json::array();
      bool ok = true;
      for (const auto& c : o.checks) {
        entry["checks"].push_back(check_json(c));
        if (!c.ok) {
          ok = false;
          res.failures.push_back(check_line(id, c));
        }
      }
      entry["status"] = ok ? "pass" : "fail";
      failed = failed || !ok;
    } catch (const std::exception& e) {
      entry["status"] = "error";
      entry["error"] = e.what();
      res.failures.push_back("step '" + id + "' (" + kind + "): " + e.what());
      errored = true;
    }
    report["steps"].push_back(entry);
  }
  res.exit_code = errored ? 1 : failed ? 2 : 0;
  report["status"] = errored ? "error" : failed ? "fail" : "pass";
  report["failures"] = res.failures;
  if (!ctx.out.empty()) {
    const auto path = ctx.out / "report.json";
    std::ofstream(path) << report.dump(2) << "\n";
    res.files.insert(res.files.begin(), path.string());
  }
  return res;
}

ScenarioResult run_scenario(const std::string& path, const RunOptions& opt) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open scenario file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ModelError("scenario '" + path + "': " + e.what());
  }
  return run_scenario(doc, fs::path(path).parent_path(), opt);
}

}  // namespace symcon
