#include "symcon/model.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <set>

namespace symcon {

int NetworkLayout::node_index(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

int NetworkLayout::state_count() const {
  int n = 0;
  for (const auto& node : nodes) n += node.dim;
  return n;
}

namespace {

class Fnv1a {
 public:
  void add(std::string_view s) {
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 1099511628211ull;
    }
    add_byte(0xff);
  }
  void add(double v) {
    unsigned char bytes[sizeof v];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) add_byte(b);
  }
  std::uint64_t value() const { return h_; }

 private:
  void add_byte(unsigned char c) {
    h_ ^= c;
    h_ *= 1099511628211ull;
  }
  std::uint64_t h_ = 14695981039346656037ull;
};

int find_index(const std::map<std::string, int, std::less<>>& m, std::string_view name) {
  auto it = m.find(name);
  return it == m.end() ? -1 : it->second;
}

}  // namespace

SystemModel::SystemModel(ModelDescription d) : desc_(std::move(d)) {
  if (desc_.field.size() != desc_.states.size())
    throw ModelError("model '" + desc_.name + "' declares " + std::to_string(desc_.states.size()) +
                     " states but " + std::to_string(desc_.field.size()) + " dynamics equations");

  std::set<std::string, std::less<>> seen;
  auto declare = [&](const std::string& name, const char* what) {
    if (name == "t" || name == "pi") throw ModelError(std::string(what) + " may not be named '" + name + "'");
    if (!seen.insert(name).second) throw ModelError("name '" + name + "' is declared twice");
  };
  for (std::size_t i = 0; i < desc_.states.size(); ++i) {
    declare(desc_.states[i], "a state");
    states_[desc_.states[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < desc_.params.size(); ++i) {
    declare(desc_.params[i].first, "a parameter");
    params_[desc_.params[i].first] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < desc_.inputs.size(); ++i) {
    declare(desc_.inputs[i].name, "an input");
    inputs_index_[desc_.inputs[i].name] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < desc_.delays.size(); ++i) {
    declare(desc_.delays[i].first, "a delay");
    if (!(desc_.delays[i].second >= 0.0)) throw ModelError("delay '" + desc_.delays[i].first + "' must be >= 0");
    delays_[desc_.delays[i].first] = static_cast<int>(i);
  }

  // Inputs may depend on t and parameters only.
  for (const auto& in : desc_.inputs) {
    if (!in.expr) {
      inputs_.push_back(std::nullopt);
      time_dependent_ = true;
      continue;
    }
    Expr bound = substitute(*in.expr, {[&](const node::Symbol& s) -> std::optional<Expr> {
                                         if (s.kind == SymbolKind::Time) return std::nullopt;
                                         std::string name = component_name(s);
                                         if (int k = find_index(params_, name); k >= 0)
                                           return symbol(s.name, s.index, SymbolKind::Parameter, k);
                                         if (states_.count(name) || inputs_index_.count(name))
                                           throw ModelError("input '" + in.name + "' may depend only on t and parameters, not '" +
                                                            name + "'");
                                         throw ModelError("input '" + in.name + "' uses undeclared name '" + name + "'");
                                       },
                                       [&](const node::Delayed& dl) -> std::optional<Expr> {
                                         throw ModelError("input '" + in.name + "' may not use delayed state '" +
                                                          component_name(dl) + "'");
                                       }});
    if (depends_on_time(bound)) time_dependent_ = true;
    inputs_.push_back(bound);
  }

  for (std::size_t i = 0; i < desc_.field.size(); ++i) {
    try {
      field_.push_back(bind(desc_.field[i]));
    } catch (const ModelError& e) {
      throw ModelError("in d/dt " + desc_.states[i] + ": " + e.what());
    }
    if (contains_delay(field_.back())) delayed_ = true;
    if (depends_on_time(field_.back())) time_dependent_ = true;
  }

  for (std::size_t i = 0; i < desc_.domain.size(); ++i) {
    const auto& name = desc_.domain.names[i];
    const auto& r = desc_.domain.ranges[i];
    if (!states_.count(name) && !inputs_index_.count(name))
      throw ModelError("domain names '" + name + "', which is neither a state nor an input");
    if (!(r.lo <= r.hi)) throw ModelError("domain of '" + name + "' is empty");
  }
  if (desc_.time_domain && !(desc_.time_domain->lo <= desc_.time_domain->hi))
    throw ModelError("time domain is empty");
  if (desc_.layout && desc_.layout->state_count() != dimension())
    throw ModelError("network layout does not cover the state vector");

  Fnv1a h;
  h.add(desc_.name);
  for (std::size_t i = 0; i < desc_.states.size(); ++i) {
    h.add(desc_.states[i]);
    h.add(render(desc_.field[i]));
  }
  for (const auto& [k, v] : desc_.params) {
    h.add(k);
    h.add(v);
  }
  for (const auto& in : desc_.inputs) {
    h.add(in.name);
    h.add(in.expr ? render(*in.expr) : std::string("external"));
  }
  for (const auto& [k, v] : desc_.delays) {
    h.add(k);
    h.add(v);
  }
  hash_ = h.value();
}

Expr SystemModel::bind(const Expr& e) const {
  return substitute(e, {[&](const node::Symbol& s) -> std::optional<Expr> {
                          if (s.kind == SymbolKind::Time) return std::nullopt;
                          std::string name = component_name(s);
                          if (int k = find_index(states_, name); k >= 0)
                            return symbol(s.name, s.index, SymbolKind::State, k);
                          if (int k = find_index(params_, name); k >= 0)
                            return symbol(s.name, s.index, SymbolKind::Parameter, k);
                          if (int k = find_index(inputs_index_, name); k >= 0)
                            return symbol(s.name, s.index, SymbolKind::Input, k);
                          if (delays_.count(name)) throw ModelError("delay '" + name + "' used as a value");
                          throw ModelError("undeclared name '" + name + "'");
                        },
                        [&](const node::Delayed& d) -> std::optional<Expr> {
                          std::string name = component_name(d);
                          int slot = find_index(states_, name);
                          if (slot < 0) throw ModelError("delayed reference to undeclared state '" + name + "'");
                          int dslot = find_index(delays_, d.delay);
                          if (dslot < 0) throw ModelError("undeclared delay '" + d.delay + "'");
                          node::Delayed bound = d;
                          bound.slot = slot;
                          bound.delay_slot = dslot;
                          return Expr(std::make_shared<const ExprNode>(ExprNode{bound}));
                        }});
}

int SystemModel::state_index(std::string_view name) const { return find_index(states_, name); }
int SystemModel::param_index(std::string_view name) const { return find_index(params_, name); }
int SystemModel::input_index(std::string_view name) const { return find_index(inputs_index_, name); }
int SystemModel::delay_index(std::string_view name) const { return find_index(delays_, name); }

Eigen::VectorXd SystemModel::param_values() const {
  Eigen::VectorXd p(desc_.params.size());
  for (std::size_t i = 0; i < desc_.params.size(); ++i) p[i] = desc_.params[i].second;
  return p;
}

std::vector<double> SystemModel::delay_values() const {
  std::vector<double> out;
  for (const auto& [k, v] : desc_.delays) out.push_back(v);
  return out;
}

void SystemModel::input_values(double t, std::span<const double> params, std::span<double> out,
                               const std::map<int, double>& external) const {
  Frame f;
  f.t = t;
  f.params = params;
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    if (auto it = external.find(static_cast<int>(i)); it != external.end()) {
      out[i] = it->second;
    } else if (inputs_[i]) {
      out[i] = evaluate(*inputs_[i], f);
    } else {
      throw EvalError("external input '" + desc_.inputs[i].name + "' has no value");
    }
  }
}

Eigen::VectorXd SystemModel::eval(double t, const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw DimensionError("state has wrong dimension");
  Eigen::VectorXd p = param_values();
  std::vector<double> u(inputs_.size());
  input_values(t, {p.data(), static_cast<std::size_t>(p.size())}, u);
  std::vector<double> delays = delay_values();
  Frame f{t, {x.data(), static_cast<std::size_t>(x.size())}, {p.data(), static_cast<std::size_t>(p.size())}, u, delays,
          nullptr};
  Eigen::VectorXd out(dimension());
  for (int i = 0; i < dimension(); ++i) out[i] = evaluate(field_[i], f);
  return out;
}

SystemModel SystemModel::with_params(const std::map<std::string, double>& values) const {
  ModelDescription d = desc_;
  for (const auto& [k, v] : values) {
    auto it = std::find_if(d.params.begin(), d.params.end(), [&](const auto& p) { return p.first == k; });
    if (it == d.params.end()) throw ModelError("unknown parameter '" + k + "'");
    it->second = v;
  }
  return SystemModel(std::move(d));
}

SystemModel SystemModel::with_inputs(const std::map<std::string, std::optional<Expr>>& inputs) const {
  ModelDescription d = desc_;
  for (const auto& [k, v] : inputs) {
    auto it = std::find_if(d.inputs.begin(), d.inputs.end(), [&](const auto& p) { return p.name == k; });
    if (it == d.inputs.end()) throw ModelError("unknown input '" + k + "'");
    it->expr = v;
  }
  return SystemModel(std::move(d));
}

SystemModel SystemModel::with_delays(const std::map<std::string, double>& values) const {
  ModelDescription d = desc_;
  for (const auto& [k, v] : values) {
    auto it = std::find_if(d.delays.begin(), d.delays.end(), [&](const auto& p) { return p.first == k; });
    if (it == d.delays.end()) throw ModelError("unknown delay '" + k + "'");
    it->second = v;
  }
  return SystemModel(std::move(d));
}

Box SystemModel::default_box() const {
  Box b;
  const Interval fallback = desc_.positive ? Interval{0.1, 10.0} : Interval{-5.0, 5.0};
  for (const auto& s : desc_.states) b.set(s, desc_.domain.find(s).value_or(fallback));
  for (std::size_t i = 0; i < desc_.domain.size(); ++i)
    if (inputs_index_.count(desc_.domain.names[i])) b.set(desc_.domain.names[i], desc_.domain.ranges[i]);
  return b;
}

Interval SystemModel::time_domain() const { return desc_.time_domain.value_or(Interval{0.0, 100.0}); }

std::vector<double> SystemModel::breakpoints() const {
  Eigen::VectorXd p = param_values();
  Frame f;
  f.params = {p.data(), static_cast<std::size_t>(p.size())};
  auto value_of = [&](const Expr& e) { return evaluate(e, f); };
  std::vector<double> out;
  auto collect = [&](const Expr& e) {
    for (double v : switching_times(e, value_of)) out.push_back(v);
  };
  for (const auto& e : field_) collect(e);
  for (const auto& e : inputs_)
    if (e) collect(*e);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string SystemModel::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
  return buf;
}

SampleSet::SampleSet(const SystemModel& m, const Box& box, int count, std::uint64_t seed,
                     std::optional<Interval> time_window)
    : m_(&m), params_(m.param_values()), zero_delays_(m.description().delays.size(), 0.0) {
  Box defaults = m.default_box();
  for (const auto& s : m.state_names()) {
    state_col_.push_back(static_cast<int>(box_.size()));
    box_.set(s, box.find(s).value_or(*defaults.find(s)));
  }
  for (int i = 0; i < m.input_count(); ++i) {
    auto r = box.find(m.input_name(i));
    if (!r && m.input_is_external(i)) r = defaults.find(m.input_name(i));
    if (!r) continue;
    input_col_[i] = static_cast<int>(box_.size());
    box_.set(m.input_name(i), *r);
  }
  for (const auto& name : box.names)
    if (m.state_index(name) < 0 && m.input_index(name) < 0)
      throw ModelError("box names '" + name + "', which is neither a state nor an input of the model");
  for (int i = 0; i < m.input_count(); ++i)
    if (m.input_is_external(i) && !input_col_.count(i))
      throw PreconditionError("external input '" + m.input_name(i) + "' needs a range in the box");
  points_ = box_points(box_, count, seed);
  Interval window = time_window.value_or(m.time_domain());
  times_ = m.time_dependent() ? linspace(window, 66) : std::vector<double>{window.lo};
}

SampleSet::Sample SampleSet::at(std::size_t k) const {
  Sample s;
  std::size_t p = k / times_.size();
  s.t = times_[k % times_.size()];
  s.x.resize(m_->dimension());
  for (int i = 0; i < m_->dimension(); ++i) s.x[i] = points_(p, state_col_[i]);
  std::map<int, double> external;
  for (const auto& [slot, col] : input_col_) external[slot] = points_(p, col);
  s.u.resize(m_->input_count());
  m_->input_values(s.t, {params_.data(), static_cast<std::size_t>(params_.size())}, s.u, external);
  return s;
}

Frame SampleSet::frame(const Sample& s) const {
  return Frame{s.t,
               {s.x.data(), static_cast<std::size_t>(s.x.size())},
               {params_.data(), static_cast<std::size_t>(params_.size())},
               s.u,
               zero_delays_,
               nullptr};
}

Eigen::MatrixXd JacobianExpr::evaluate(const Frame& frame) const {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : entries) j(e.row, e.col) = symcon::evaluate(e.expr, frame);
  return j;
}

bool JacobianExpr::structurally_zero(int row, int col) const {
  for (const auto& e : entries)
    if (e.row == row && e.col == col) return false;
  return true;
}

JacobianExpr jacobian(const SystemModel& m) {
  JacobianExpr out;
  out.n = m.dimension();
  for (int i = 0; i < out.n; ++i) {
    std::set<int> cols;
    visit_symbols(m.field()[i], [&](const node::Symbol& s) {
      if (s.kind == SymbolKind::State) cols.insert(s.slot);
    });
    for (int j : cols) {
      Derivative d = differentiate(m.field()[i], m.state_names()[j]);
      if (d.piecewise)
        throw NonsmoothError("d/dt " + m.state_names()[i] + " is not differentiable in " + m.state_names()[j] +
                             " (nonsmooth builtin with a state-dependent argument)");
      if (!d.expr.is_number(0.0)) out.entries.push_back({i, j, d.expr});
    }
  }
  return out;
}

}  // namespace symcon
