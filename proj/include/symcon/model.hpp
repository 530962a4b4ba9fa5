#pragma once

// Flat state-space models: ẋ = f(x, u(t), t), optionally with delayed states.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symcon/expr.hpp"
#include "symcon/sampling.hpp"

namespace symcon {

struct InputDecl {
  std::string name;
  std::optional<Expr> expr;  // a function of t and parameters; nullopt = external signal
};

struct NodeInfo {
  std::string id;
  std::string template_id;
  int offset = 0;  // first flattened state index
  int dim = 1;
};

// How the flat state vector is grouped into network nodes.
struct NetworkLayout {
  std::vector<NodeInfo> nodes;

  int node_index(std::string_view id) const;  // -1 when absent
  int state_count() const;
};

// A declared symmetry action, as written in a model file. Interpreted by the
// symmetry module.
struct ActionDecl {
  enum class Kind { Permute, Linear, Map };
  std::string name;
  Kind kind = Kind::Permute;
  std::vector<std::vector<std::string>> cycles;            // Permute: node ids or 1-based state indices
  Eigen::MatrixXd matrix;                                  // Linear
  std::vector<std::pair<std::string, Expr>> state_map;     // Map: component -> image
  std::vector<std::pair<std::string, Expr>> input_map;     // Map: input -> image
  std::optional<double> shift;                             // time shift T of a spatio-temporal action
  int line = 0;
};

struct ModelDescription {
  std::string name;
  std::vector<std::string> states;  // canonical component names, in order
  std::vector<std::pair<std::string, double>> params;
  std::vector<InputDecl> inputs;
  std::vector<std::pair<std::string, double>> delays;
  std::vector<Expr> field;  // one per state
  Box domain;               // boxes for states and inputs
  bool positive = false;
  std::optional<Interval> time_domain;
  std::vector<ActionDecl> actions;
  std::optional<NetworkLayout> layout;
};

/// Immutable, validated model. Symbols in the field are bound to slots.
class SystemModel {
 public:
  explicit SystemModel(ModelDescription d);

  const ModelDescription& description() const { return desc_; }
  const std::string& name() const { return desc_.name; }
  int dimension() const { return static_cast<int>(desc_.states.size()); }
  const std::vector<std::string>& state_names() const { return desc_.states; }
  const std::optional<NetworkLayout>& layout() const { return desc_.layout; }

  int state_index(std::string_view name) const;
  int param_index(std::string_view name) const;
  int input_index(std::string_view name) const;
  int delay_index(std::string_view name) const;

  Eigen::VectorXd param_values() const;
  std::vector<double> delay_values() const;
  int input_count() const { return static_cast<int>(desc_.inputs.size()); }
  const std::string& input_name(int i) const { return desc_.inputs[i].name; }
  bool input_is_external(int i) const { return !inputs_[i].has_value(); }

  const std::vector<Expr>& field() const { return field_; }  // bound
  const std::optional<Expr>& bound_input(int i) const { return inputs_[i]; }

  bool delayed() const { return delayed_; }
  bool time_dependent() const { return time_dependent_; }

  /// Values of all inputs at time t under the given parameter vector. External
  /// inputs must be supplied through `external` (indexed by input slot).
  void input_values(double t, std::span<const double> params, std::span<double> out,
                    const std::map<int, double>& external = {}) const;

  /// f(x, t) with the declared parameters and inputs (no delays).
  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const;

  /// Bind an arbitrary expression against this model's names.
  Expr bind(const Expr& e) const;

  SystemModel with_params(const std::map<std::string, double>& values) const;
  SystemModel with_inputs(const std::map<std::string, std::optional<Expr>>& inputs) const;
  SystemModel with_delays(const std::map<std::string, double>& values) const;

  /// Per-state default box: declared domain, else [0.1, 10] for positive
  /// models and [-5, 5] otherwise. Declared input ranges are appended.
  Box default_box() const;
  Interval time_domain() const;

  /// Switching instants of step/ramp inputs, sorted.
  std::vector<double> breakpoints() const;

  std::uint64_t hash() const { return hash_; }
  std::string hash_hex() const;

 private:
  ModelDescription desc_;
  std::vector<Expr> field_;
  std::vector<std::optional<Expr>> inputs_;
  std::map<std::string, int, std::less<>> states_, params_, inputs_index_, delays_;
  bool delayed_ = false;
  bool time_dependent_ = false;
  std::uint64_t hash_ = 0;
};

/// The sample grid used by certificates and numerical checks: low-discrepancy
/// points over the box (states and any boxed inputs), crossed with 64 uniform
/// times plus the endpoints of the time domain when the model is
/// nonautonomous. Inputs not in the box are evaluated from their expressions.
class SampleSet {
 public:
  SampleSet(const SystemModel& m, const Box& box, int count, std::uint64_t seed,
            std::optional<Interval> time_window = std::nullopt);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()) * times_.size(); }
  std::size_t point_count() const { return static_cast<std::size_t>(points_.rows()); }
  const std::vector<double>& times() const { return times_; }
  const Box& box() const { return box_; }

  struct Sample {
    double t = 0.0;
    Eigen::VectorXd x;
    std::vector<double> u;
  };
  Sample at(std::size_t k) const;
  /// Frame over a sample. Delayed references read the current state.
  Frame frame(const Sample& s) const;

 private:
  const SystemModel* m_;
  Box box_;
  Eigen::MatrixXd points_;
  std::vector<int> state_col_;        // per state: column in points_
  std::map<int, int> input_col_;      // input slot -> column
  std::vector<double> times_;
  Eigen::VectorXd params_;
  std::vector<double> zero_delays_;
};

/// Nonzero entries of ∂f/∂x as bound expressions.
struct JacobianExpr {
  struct Entry {
    int row;
    int col;
    Expr expr;
  };
  int n = 0;
  std::vector<Entry> entries;

  Eigen::MatrixXd evaluate(const Frame& frame) const;
  bool structurally_zero(int row, int col) const;
};

/// Throws NonsmoothError when a state-dependent abs/min/max/step term is met.
JacobianExpr jacobian(const SystemModel& m);

}  // namespace symcon
