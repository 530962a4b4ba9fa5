// symcon: command-line front end. Every subcommand builds a scenario document
// (one step for check/simulate/fcd) and hands it to the scenario runner, so
// the CLI and bundled scenarios share one code path.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "symcon/error.hpp"
#include "symcon/network.hpp"
#include "symcon/scenario.hpp"
#include "symcon/sysdl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* what) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw symcon::ModelError(std::string(what) + " '" + s + "': expected name=value");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

json params_json(const std::vector<std::string>& assignments) {
  json p = json::object();
  for (const auto& a : assignments) {
    auto [k, v] = split_assignment(a, "--param");
    p[k] = v;
  }
  return p;
}

// name=lo:hi
json box_json(const std::vector<std::string>& entries) {
  json b = json::object();
  for (const auto& e : entries) {
    auto [k, v] = split_assignment(e, "--box");
    const auto colon = v.find(':');
    if (colon == std::string::npos) throw symcon::ModelError("--box '" + e + "': expected name=lo:hi");
    b[k] = {v.substr(0, colon), v.substr(colon + 1)};
  }
  return b;
}

// "1,2,3" | "random:lo:hi" | "x=1,y=2" | "*=0.5"
json x0_json(const std::string& s) {
  if (s.starts_with("random")) {
    double lo = -1, hi = 1;
    if (std::sscanf(s.c_str(), "random:%lf:%lf", &lo, &hi) != 2 && s != "random")
      throw symcon::ModelError("--x0 '" + s + "': expected random:lo:hi");
    return {{"random", {lo, hi}}};
  }
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  if (s.find('=') != std::string::npos) {
    json named = json::object();
    for (const auto& p : parts) {
      auto [k, v] = split_assignment(p, "--x0");
      named[k] = v;
    }
    return named;
  }
  json values = json::array();
  for (const auto& p : parts) values.push_back(p);
  return values;
}

json inputs_json(const std::vector<std::string>& assignments) {
  json in = json::object();
  for (const auto& a : assignments) {
    auto [k, v] = split_assignment(a, "--input");
    in[k] = v;
  }
  return in;
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

std::string short_value(const json& v) {
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return buf;
  }
  return v.dump();
}

void print_summary(const symcon::ScenarioResult& r) {
  for (const auto& step : r.report["steps"]) {
    std::cout << "[" << step["status"].get<std::string>() << "] " << step["id"].get<std::string>() << " ("
              << step["kind"].get<std::string>() << ")";
    if (step.contains("values"))
      for (auto it = step["values"].begin(); it != step["values"].end(); ++it)
        std::cout << "  " << it.key() << "=" << short_value(*it);
    std::cout << "\n";
  }
  for (const auto& f : r.failures) std::cout << "  failed: " << f << "\n";
  std::cout << r.name << ": " << r.report["status"].get<std::string>() << "\n";
}

int finish(const symcon::ScenarioResult& r, bool as_json, const json* payload = nullptr) {
  if (as_json) std::cout << (payload ? *payload : r.report).dump(2) << "\n";
  else print_summary(r);
  if (r.exit_code == 1)
    for (const auto& f : r.failures) std::cerr << "symcon: error: " << f << "\n";
  return r.exit_code;
}

json one_step(const std::string& name, const std::string& model, const json& params, json step) {
  return {{"name", name}, {"model", absolute(model)}, {"params", params}, {"steps", json::array({std::move(step)})}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symcon: contraction and symmetry certificates for dynamical system models"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable output on stdout");

  // check
  auto* check = app.add_subcommand("check", "certify contraction of a model");
  std::string check_model, measure = "2", weight, toward, second_order;
  std::vector<std::string> boxes, check_params;
  int samples = 1000;
  std::uint64_t seed = 1;
  double min_rate = 1e-6;
  check->add_option("model", check_model, "model file")->required()->check(CLI::ExistingFile);
  check->add_option("--measure", measure, "1, 2 or inf")->check(CLI::IsMember({"1", "2", "inf"}));
  check->add_option("--weight", weight, "JSON file with the weight matrix")->check(CLI::ExistingFile);
  check->add_option("--toward", toward, "action name or partition such as \"{1,4} {2,3}\"");
  check->add_option("--second-order", second_order, "x,y: second-order test of a two-state block");
  check->add_option("--box", boxes, "name=lo:hi (repeatable, trailing * matches a prefix)");
  check->add_option("--samples", samples, "sample points");
  check->add_option("--seed", seed, "sampling seed");
  check->add_option("--min-rate", min_rate, "required margin");
  check->add_option("--param", check_params, "name=value (repeatable)");

  // partition
  auto* part = app.add_subcommand("partition", "coarsest balanced partition of a network model");
  std::string part_model;
  part->add_option("model", part_model, "model file")->required()->check(CLI::ExistingFile);

  // simulate
  auto* sim = app.add_subcommand("simulate", "integrate a model and report metrics");
  std::string sim_model, x0 = "random:-1:1", metric, partition = "coarsest", method = "rk45", out, period;
  double horizon = 0, dt = 0.01, rtol = 1e-8, atol = 1e-10, bound = -1, after = -1;
  int periods = 2;
  std::vector<std::string> sim_params;
  sim->add_option("model", sim_model, "model file")->required()->check(CLI::ExistingFile);
  sim->add_option("--x0", x0, "v1,v2,... | name=v,... | random:lo:hi");
  sim->add_option("--horizon", horizon, "integration horizon (default: the model's time domain)");
  sim->add_option("--metric", metric, "sync, period or rate")->check(CLI::IsMember({"sync", "period", "rate"}));
  sim->add_option("--partition", partition, "partition for sync/rate (default: coarsest balanced)");
  sim->add_option("--period", period, "period for --metric period (an expression)");
  sim->add_option("--periods", periods, "periods compared at the end");
  sim->add_option("--after", after, "sync: worst error from this time on (default: the final value)");
  sim->add_option("--bound", bound, "fail (exit 2) when the metric is worse than this");
  sim->add_option("--method", method, "rk45 or rk4")->check(CLI::IsMember({"rk45", "rk4"}));
  sim->add_option("--dt", dt, "fixed step");
  sim->add_option("--rtol", rtol, "relative tolerance");
  sim->add_option("--atol", atol, "absolute tolerance");
  sim->add_option("--param", sim_params, "name=value (repeatable)");
  sim->add_option("--out", out, "directory for CSV/SVG output");

  // fcd
  auto* fcd = app.add_subcommand("fcd", "fold-change detection: compare two scaled runs");
  std::string fcd_model, action_i = "scale", action_j = "scale", fcd_x0, fcd_x0_j = "matched", fcd_out;
  std::vector<std::string> input_i, input_j, param_i, param_j, shared;
  double fcd_horizon = 0, compare_from = -1e300, max_gap = -1, fcd_rtol = 1e-9, fcd_atol = 1e-12;
  fcd->add_option("model", fcd_model, "model file")->required()->check(CLI::ExistingFile);
  fcd->add_option("--action-i", action_i, "action for arm i");
  fcd->add_option("--action-j", action_j, "action for arm j");
  fcd->add_option("--input-i", input_i, "name=expression (repeatable)");
  fcd->add_option("--input-j", input_j, "name=expression (repeatable)");
  fcd->add_option("--param-i", param_i, "name=value for arm i (repeatable)");
  fcd->add_option("--param-j", param_j, "name=value for arm j (repeatable)");
  fcd->add_option("--shared", shared, "compared components (repeatable, trailing * allowed)")->required();
  fcd->add_option("--x0", fcd_x0, "initial state of arm i")->required();
  fcd->add_option("--x0-j", fcd_x0_j, "initial state of arm j (default: matched through the actions)");
  fcd->add_option("--horizon", fcd_horizon, "integration horizon");
  fcd->add_option("--compare-from", compare_from, "ignore differences before this time");
  fcd->add_option("--max-gap", max_gap, "fail (exit 2) when the shared gap exceeds this");
  fcd->add_option("--rtol", fcd_rtol, "relative tolerance");
  fcd->add_option("--atol", fcd_atol, "absolute tolerance");
  fcd->add_option("--out", fcd_out, "directory for CSV/SVG output");

  // reproduce / run
  auto* repro = app.add_subcommand("reproduce", "run a bundled scenario against its stored expectations");
  std::string repro_name, repro_out;
  repro->add_option("name", repro_name, "scenario name")->required();
  repro->add_option("--out", repro_out, "output directory (default: symcon-out/<name>)");
  auto* run = app.add_subcommand("run", "run a scenario file");
  std::string run_path, run_out;
  run->add_option("scenario", run_path, "scenario file")->required();
  run->add_option("--out", run_out, "output directory (default: symcon-out/<scenario name>)");

  for (auto* sub : {check, part, sim, fcd, repro, run}) sub->add_flag("--json", as_json, "machine-readable output on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*check) {
      json step = {{"kind", "certify"}, {"id", "certificate"}, {"samples", samples}, {"seed", seed},
                   {"min_rate", min_rate}, {"box", box_json(boxes)}, {"expect", {{"passed", true}}}};
      json m = measure;
      if (!weight.empty()) m = {{"norm", measure}, {"weight", absolute(weight)}};
      step["measure"] = m;
      if (!second_order.empty()) {
        const auto comma = second_order.find(',');
        if (comma == std::string::npos) throw symcon::ModelError("--second-order expects x,y");
        step["target"] = "second-order";
        step["x"] = second_order.substr(0, comma);
        step["y"] = second_order.substr(comma + 1);
      } else if (!toward.empty()) {
        step["target"] = "toward";
        step[toward.starts_with("{") ? "partition" : "action"] = toward;
      }
      auto r = symcon::run_scenario(one_step("check", check_model, params_json(check_params), step), fs::current_path());
      const json* payload = r.report["steps"][0].contains("result") ? &r.report["steps"][0]["result"] : nullptr;
      return finish(r, as_json, payload);
    }
    if (*part) {
      auto lm = symcon::load_model(part_model);
      if (!lm.network) throw symcon::PreconditionError("'" + part_model + "' declares no network nodes");
      const auto p = symcon::coarsest_balanced_partition(*lm.network);
      const auto text = symcon::describe(*lm.network, p);
      if (as_json) {
        json j = {{"model_hash", lm.system().hash_hex()}, {"partition", text}, {"clusters", p.count}};
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << p.count << " clusters: " << text << "\n";
      }
      return 0;
    }
    if (*sim) {
      json step = {{"kind", "simulate"}, {"id", "simulation"}, {"x0", x0_json(x0)}};
      json solver = {{"method", method}, {"dt", dt}, {"rtol", rtol}, {"atol", atol}};
      if (horizon > 0) solver["horizon"] = horizon;
      step["solver"] = solver;
      if (!metric.empty()) {
        json mj = {{"kind", metric}};
        if (metric != "period") mj["partition"] = partition;
        if (metric == "sync") mj["after"] = after < 0 ? json("end") : json(after);
        if (metric == "period") {
          if (period.empty()) throw symcon::ModelError("--metric period needs --period");
          mj["period"] = period;
          mj["periods"] = periods;
        }
        if (bound >= 0) mj[metric == "rate" ? "min" : "max"] = bound;
        step["metrics"] = json::array({mj});
      }
      auto r = symcon::run_scenario(one_step("simulate", sim_model, params_json(sim_params), step), fs::current_path(),
                                    {out});
      return finish(r, as_json);
    }
    if (*fcd) {
      json arm_i = {{"action", action_i}, {"params", params_json(param_i)}, {"inputs", inputs_json(input_i)},
                    {"x0", x0_json(fcd_x0)}};
      json arm_j = {{"action", action_j}, {"params", params_json(param_j)}, {"inputs", inputs_json(input_j)},
                    {"x0", fcd_x0_j == "matched" ? json("matched") : x0_json(fcd_x0_j)}};
      json step = {{"kind", "fcd"}, {"id", "fcd"}, {"arms", {arm_i, arm_j}}, {"shared", shared}};
      json solver = {{"rtol", fcd_rtol}, {"atol", fcd_atol}};
      if (fcd_horizon > 0) solver["horizon"] = fcd_horizon;
      step["solver"] = solver;
      if (compare_from > -1e299) step["compare_from"] = compare_from;
      if (max_gap >= 0) step["expect"] = {{"max_gap_max", max_gap}};
      auto r = symcon::run_scenario(one_step("fcd", fcd_model, json::object(), step), fs::current_path(), {fcd_out});
      return finish(r, as_json);
    }
    if (*repro || *run) {
      const std::string path = *repro ? symcon::bundled_scenario(repro_name).string() : run_path;
      std::string dir = *repro ? repro_out : run_out;
      if (dir.empty()) dir = (fs::path("symcon-out") / fs::path(path).stem()).string();
      auto r = symcon::run_scenario(path, {dir});
      return finish(r, as_json);
    }
  } catch (const std::exception& e) {
    std::cerr << "symcon: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
