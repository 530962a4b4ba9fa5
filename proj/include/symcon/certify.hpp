#pragma once

// Sampled contraction certificates. Every certificate is the maximum of a
// matrix measure (or of a scalar condition) over a low-discrepancy sample of a
// box, so it is falsifiable evidence rather than a proof.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "symcon/measures.hpp"
#include "symcon/model.hpp"
#include "symcon/network.hpp"
#include "symcon/sim.hpp"

namespace symcon {

struct CertifyOptions {
  int samples = 1000;
  std::uint64_t seed = 1;
  double min_rate = 1e-6;  // pass iff max_mu <= -min_rate
  std::optional<Interval> time_window;  // default: the model's time domain
};

struct Witness {
  double t = 0.0;
  Eigen::VectorXd x;
  std::vector<double> u;  // every input slot of the model
  std::vector<std::string> state_names;
  std::vector<std::string> input_names;
};

struct ContractionCertificate {
  std::string target;  // full, toward-subspace, hierarchical, block, second-order, virtual, consistency
  MeasureKind measure;
  Box box;
  int samples = 0;  // evaluated (point, time) pairs
  double max_mu = 0.0;
  double margin = 0.0;  // -max_mu
  double threshold = 1e-6;
  bool passed = false;
  Witness witness;
  std::string model_hash;
  std::optional<Eigen::MatrixXd> projection;  // V, toward-subspace only
  std::vector<ContractionCertificate> parts;  // blocks, or the two halves of a virtual certificate
  std::vector<std::pair<std::string, double>> figures;  // extra reported numbers
  std::string note;

  std::optional<double> figure(std::string_view name) const;
};

/// max over samples of μ(J(x, u, t)).
ContractionCertificate certify_contraction(const SystemModel& m, const Box& box, const MeasureKind& kind,
                                           const CertifyOptions& opt = {});

/// max over samples of μ(V J Vᵀ), V the orthonormal complement of s.
ContractionCertificate certify_toward_subspace(const SystemModel& m, const Subspace& s, const Box& box,
                                               const MeasureKind& kind, const CertifyOptions& opt = {});

/// Two-state block (x, y) with y' = (Φ(x, u, t) - y)/ε and x' vanishing at y = 1
/// and affine in y. The test reduces to the second-order form of the block:
/// the per-sample margin is ε ∂f_y/∂x ∂f_x/∂y + 1/(2ε) and must stay positive.
/// Other shapes are rejected with PreconditionError.
ContractionCertificate certify_second_order(const SystemModel& m, const std::string& x, const std::string& y,
                                            const Box& box, const CertifyOptions& opt = {});

/// Standalone form for φ = φ(u/x): margin inf (∂φ/∂x)·x + 1/(2ε). Reports
/// b = sup x·∂φ/∂u (the slope of φ) and the equivalent bound x > 2εub as the
/// figures `b` and `x_threshold`. The box names `x` and `u`.
ContractionCertificate certify_second_order(double eps, const Expr& phi, const Box& box,
                                            const CertifyOptions& opt = {});

struct SecondOrderBlock {
  std::string x;
  std::string y;
};

struct HierarchySpec {
  std::vector<std::vector<std::string>> groups;                    // state names, in block order
  std::vector<std::variant<MeasureKind, SecondOrderBlock>> tests;  // one per group
  std::optional<double> offdiag_bound;                             // gate on the coupling blocks' sup norm
};

/// Requires ∂f/∂x to be block triangular under the grouping (checked
/// symbolically). Passes iff every diagonal block passes; off-diagonal sup norms
/// (induced 2-norm) are reported as figures and only gate when a bound is given.
ContractionCertificate certify_hierarchical(const SystemModel& m, const HierarchySpec& h, const Box& box,
                                            const CertifyOptions& opt = {});

struct CascadeStage {
  int index = 0;  // 1-based
  std::string partition;  // described on the original nodes
  int dimension = 0;      // of the stage's target subspace
  ResidualReport invariance;
  ContractionCertificate certificate;
};

struct CascadeCertificate {
  std::vector<CascadeStage> stages;
  bool passed = false;
  std::optional<int> failing_stage;
  double margin = 0.0;  // smallest stage margin
  std::string model_hash;
};

/// Nested balanced partitions of the network, each strictly coarser than the
/// previous. Stage k certifies the (k-1)-th quotient toward the synchrony
/// subspace of partition k carried onto the quotient's nodes; stage 1 works on
/// the full network. Stages use each quotient's default box.
CascadeCertificate certify_cascade(const NetworkSpec& spec, const std::vector<Partition>& chain,
                                   const MeasureKind& kind, const CertifyOptions& opt = {});

// How the real state feeds a virtual system: for every copy, which real
// component each virtual state stands for; inputs of the virtual system given
// as expressions of the real state (e.g. a mean field). Virtual inputs with
// neither an entry here nor a namesake in the real model are an error.
struct VirtualEmbedding {
  std::vector<std::vector<std::pair<std::string, std::string>>> copies;
  std::vector<std::pair<std::string, Expr>> inputs;
};

/// Part (a): max ‖v(copy(x), inputs(x), t) - f_copy(x, t)‖∞ over samples of the
/// real box, at most 1e-10. Part (b): contraction of v over its own box, by a
/// measure or a hierarchy. Passes iff both pass.
ContractionCertificate certify_virtual(const SystemModel& v, const SystemModel& real, const VirtualEmbedding& emb,
                                       const Box& real_box, const Box& virtual_box,
                                       const std::variant<MeasureKind, HierarchySpec>& contraction,
                                       const CertifyOptions& opt = {});

/// The empirical counterpart: decay rate of ‖x_a(t) - x_b(t)‖ over the window.
RateEstimate estimate_contraction_rate(const Trajectory& a, const Trajectory& b, double t_from, double t_to);

/// μ at the witness, recomputed from scratch (toward-subspace uses the stored V).
double recompute_at_witness(const SystemModel& m, const ContractionCertificate& c);

nlohmann::json to_json(const ContractionCertificate& c);
nlohmann::json to_json(const CascadeCertificate& c);
nlohmann::json to_json(const Box& b);
std::string measure_label(const MeasureKind& k);

}  // namespace symcon
